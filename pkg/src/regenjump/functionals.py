"""Sub-linear functionals and time integrals along the flow.

Every functional carries explicit constants (c1, c2) certifying
``||Xi(v)||_W <= c1 ||v||_V2 + c2``; only this built-in family is exposed, so
the constants are always known and checkable on random states.

``integrate_segment`` computes ``int_0^delta Xi(T(tau) v) dtau``.  On the
exact scalar power-law semigroup the integrand is a piecewise power function
and the integral is evaluated in closed form, split at the extinction time.
Otherwise adaptive composite Simpson is used, with interval bisection until
the local Richardson error estimate is below tolerance; breakpoints are
placed at the extinction time when known and, for stepped flows, at the
time-step grid where the trajectory has kinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import QuadratureBudgetExceeded
from .semigroup import ScalarPowerLaw
from .spaces import Space, StateVector

__all__ = [
    "Functional",
    "NormV2",
    "IdentityV2",
    "Linear",
    "AffineShift",
    "QuadratureConfig",
    "SegmentIntegralResult",
    "integrate_segment",
    "integrate_cycle",
]


def _w_norm(value, space: Space) -> float:
    """Norm of a W-value: |.| for scalars, the discrete Lq norm for arrays."""
    if np.isscalar(value) or np.ndim(value) == 0:
        return abs(float(value))
    value = np.asarray(value)
    q = space.q
    return float((np.sum(np.abs(value) ** q) * space.h) ** (1.0 / q))


class Functional:
    """Base class: a map from states to W with certified sub-linearity."""

    label: str
    c1: float
    c2: float
    vector_valued: bool

    def __init__(self, space: Space):
        self.space = space

    def apply(self, v: StateVector):
        return self.apply_values(v.values)

    def apply_values(self, values: np.ndarray):
        raise NotImplementedError

    def w_norm(self, value) -> float:
        return _w_norm(value, self.space)

    def zero_value(self):
        if self.vector_valued:
            return np.zeros(self.space.dim)
        return 0.0

    def sublinearity_violation(self, v: StateVector) -> float:
        """||Xi(v)||_W - (c1 ||v||_V2 + c2); <= 0 when the certificate holds."""
        return self.w_norm(self.apply(v)) - (self.c1 * v.norm_v2() + self.c2)


class NormV2(Functional):
    """Xi(v) = ||v||_V2 into W = R."""

    vector_valued = False

    def __init__(self, space: Space, label: str = "norm_v2"):
        super().__init__(space)
        self.label = label
        self.c1 = 1.0
        self.c2 = 0.0

    def apply(self, v: StateVector) -> float:
        return v.norm_v2()

    def apply_values(self, values: np.ndarray) -> float:
        if self.space.kind == "scalar":
            return abs(float(values[0]))
        q = self.space.q
        return float((np.sum(np.abs(values) ** q) * self.space.h) ** (1.0 / q))


class IdentityV2(Functional):
    """Xi(v) = v into W = V2 (a float for scalar states, an array for grids)."""

    def __init__(self, space: Space, label: str = "identity_v2"):
        super().__init__(space)
        self.label = label
        self.c1 = 1.0
        self.c2 = 0.0
        self.vector_valued = space.kind == "grid"

    def apply_values(self, values: np.ndarray):
        if self.space.kind == "scalar":
            return float(values[0])
        return values.copy()


class Linear(Functional):
    """Xi(v) = <v, psi> with the cell-weighted pairing; W = R.

    The certificate constant is the dual Lq' norm of psi, by Holder's
    inequality applied to the weighted pairing.
    """

    vector_valued = False

    def __init__(self, space: Space, psi, label: str = "linear"):
        super().__init__(space)
        self.psi = np.asarray(psi, dtype=float)
        if self.psi.shape != (space.dim,):
            raise ValueError("weight vector does not match the space")
        self.label = label
        q = space.q
        if space.kind == "scalar":
            self.c1 = abs(float(self.psi[0]))
        elif q == 1.0:
            self.c1 = float(np.max(np.abs(self.psi)))
        else:
            q_dual = q / (q - 1.0)
            self.c1 = float(
                (np.sum(np.abs(self.psi) ** q_dual) * space.h) ** (1.0 / q_dual)
            )
        self.c2 = 0.0

    @classmethod
    def mass(cls, space: Space) -> "Linear":
        """The mass functional: Xi(v) = integral of v over the domain."""
        return cls(space, np.ones(space.dim), label="mass")

    def apply_values(self, values: np.ndarray) -> float:
        return float(np.dot(values, self.psi)) * self.space.h


class AffineShift(Functional):
    """Xi(v) = base(v) + w for a fixed W-element w."""

    def __init__(self, base: Functional, w, label: str | None = None):
        super().__init__(base.space)
        self.base = base
        self.vector_valued = base.vector_valued
        if self.vector_valued:
            self.w = np.asarray(w, dtype=float)
            if self.w.shape != (base.space.dim,):
                raise ValueError("shift does not match the space")
        else:
            self.w = float(w)
        self.label = label if label is not None else f"{base.label}+shift"
        self.c1 = base.c1
        self.c2 = base.c2 + _w_norm(self.w, base.space)

    def apply_values(self, values: np.ndarray):
        return self.base.apply_values(values) + self.w


@dataclass(frozen=True)
class QuadratureConfig:
    """Per-segment Simpson tolerance and evaluation cap."""

    tol: float = 1e-9
    max_evals: int = 100_000


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass
class SegmentIntegralResult:
    value: object
    abs_error_estimate: float
    n_evals: int


def _power_flow_integral(c: float, kappa: float, rho: float, delta: float) -> float:
    """int_0^delta ((c - kappa*tau)_+)^(1/rho) dtau in closed form."""
    e1 = 1.0 / rho + 1.0
    live = min(delta, c / kappa)
    if live <= 0.0:
        return 0.0
    tail = max(c - kappa * live, 0.0)
    return (c**e1 - tail**e1) / (kappa * e1)


def _closed_form_scalar(xi: Functional, x: float, delta: float, sg: ScalarPowerLaw):
    """Closed-form segment integral on the power-law flow, or None."""
    if isinstance(xi, AffineShift):
        inner = _closed_form_scalar(xi.base, x, delta, sg)
        if inner is None:
            return None
        return inner + xi.w * delta
    c = abs(x) ** sg.rho
    if isinstance(xi, NormV2):
        return _power_flow_integral(c, sg.kappa, sg.rho, delta)
    if isinstance(xi, IdentityV2):
        signed = _power_flow_integral(c, sg.kappa, sg.rho, delta)
        return signed if x >= 0 else -signed
    if isinstance(xi, Linear):
        signed = _power_flow_integral(c, sg.kappa, sg.rho, delta)
        base = signed if x >= 0 else -signed
        return float(xi.psi[0]) * base * xi.space.h
    return None


class _EvalBudget:
    def __init__(self, cap: int):
        self.cap = cap
        self.used = 0

    def tick(self):
        self.used += 1
        if self.used > self.cap:
            raise QuadratureBudgetExceeded(
                f"segment quadrature exceeded {self.cap} evaluations"
            )


def _simpson(fa, fm, fb, width):
    return (width / 6.0) * (fa + 4.0 * fm + fb)


def _adaptive_simpson(f, a, fa, b, fb, fm, whole, tol, xi, budget, depth=0):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    budget.tick()
    flm = f(lm)
    budget.tick()
    frm = f(rm)
    left = _simpson(fa, flm, fm, m - a)
    right = _simpson(fm, frm, fb, b - m)
    refined = left + right
    err = xi.w_norm((refined - whole)) / 15.0
    if err <= tol or depth >= 48:
        correction = (refined - whole) / 15.0
        return refined + correction, err
    lv, le = _adaptive_simpson(f, a, fa, m, fm, flm, left, 0.5 * tol, xi, budget, depth + 1)
    rv, re = _adaptive_simpson(f, m, fm, b, fb, frm, right, 0.5 * tol, xi, budget, depth + 1)
    return lv + rv, le + re


def _integrate_piecewise(f, breakpoints, tol, xi, budget):
    total = None
    err_total = 0.0
    span = breakpoints[-1] - breakpoints[0]
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        if b <= a:
            continue
        budget.tick()
        fa = f(a)
        budget.tick()
        fb = f(b)
        budget.tick()
        fm = f(0.5 * (a + b))
        whole = _simpson(fa, fm, fb, b - a)
        piece_tol = tol * max((b - a) / span, 1e-3)
        value, err = _adaptive_simpson(f, a, fa, b, fb, fm, whole, piece_tol, xi, budget)
        total = value if total is None else total + value
        err_total += err
    if total is None:
        total = xi.zero_value()
    return total, err_total


def integrate_segment(
    xi: Functional,
    state: StateVector,
    delta: float,
    sg,
    quad_cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    method: str = "auto",
    flow=None,
) -> SegmentIntegralResult:
    """Integrate Xi along the flow started at ``state`` for time ``delta``.

    A precomputed segment flow (from ``sg.segment_flow``) may be passed in so
    that several functionals integrated over the same segment share the cached
    trajectory.
    """
    if delta < 0:
        raise ValueError("segment length must be nonnegative")
    if delta == 0.0:
        return SegmentIntegralResult(xi.zero_value(), 0.0, 0)
    if method not in ("auto", "closed_form", "simpson"):
        raise ValueError(f"unknown integration method {method!r}")
    if method in ("auto", "closed_form") and isinstance(sg, ScalarPowerLaw):
        value = _closed_form_scalar(xi, state.scalar, delta, sg)
        if value is not None:
            return SegmentIntegralResult(value, 0.0, 0)
        if method == "closed_form":
            raise ValueError(f"no closed form for functional {xi.label!r}")

    budget = _EvalBudget(quad_cfg.max_evals)
    breaks = [0.0, delta]
    if isinstance(sg, ScalarPowerLaw):
        x = state.scalar
        t_star = sg.extinction_time_scalar(x)
        if 0.0 < t_star < delta:
            breaks.insert(1, t_star)

        def f(tau):
            return xi.apply_values(np.array([sg.evolve_scalar(x, tau)]))

    else:
        if flow is None:
            flow = sg.segment_flow(state)
        dt = sg.cfg.dt
        grid_times = [k * dt for k in range(1, int(delta / dt) + 1) if k * dt < delta]
        breaks = [0.0] + grid_times + [delta]
        bp = flow.extinction_breakpoint(delta)
        if bp is not None and bp not in breaks:
            breaks = sorted(set(breaks + [bp]))

        def f(tau):
            return xi.apply_values(flow.at(tau))

    value, err = _integrate_piecewise(f, breaks, quad_cfg.tol, xi, budget)
    return SegmentIntegralResult(value, err, budget.used)


def integrate_cycle(
    xi: Functional,
    segments,
    sg,
    quad_cfg: QuadratureConfig = DEFAULT_QUADRATURE,
):
    """Sum of per-segment integrals over one cycle's (state, delta) slices."""
    total = xi.zero_value()
    for state, delta in segments:
        total = total + integrate_segment(xi, state, delta, sg, quad_cfg).value
    return total
