"""Jump-chain simulation, extinction times, and regeneration cycles.

The chain alternates deterministic flow and additive kicks:

    ``X_m = T(beta_m) X_{m-1} + eta_m``,  jump times ``alpha_m = sum beta_k``.

The path flows by T between jumps and is right-continuous at them.  A chain
step is *extinct* when the pre-kick state ``T(beta_m) X_{m-1}`` has ambient
norm at or below the policy threshold; threshold crossing is treated as exact
extinction (the pre-kick state is snapped to zero), so the post-kick state at
a regeneration equals the kick bit-exactly.  Regeneration times split the
path into cycles whose lengths and functional integrals are i.i.d.; the
segment before the first regeneration is the warm-up and is emitted
separately.

Two drivers are provided: ``simulate_cycles`` streams cycle records with O(1)
memory in the cycle count, and ``simulate_until_time`` makes a single pass to
a fixed horizon, producing running integrals at checkpoints, regeneration
counts, and the per-cycle data needed by the random-index checks.  On the
scalar power-law backend both run a specialized float loop (closed-form flow
and integrals) that reproduces the generic loop bit-exactly; the generic loop
serves the grid semigroups.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .driver import DriverConfig
from .errors import CycleCapExceeded, OutOfHorizon
from .functionals import (
    DEFAULT_QUADRATURE,
    AffineShift,
    Functional,
    IdentityV2,
    Linear,
    NormV2,
    QuadratureConfig,
    integrate_segment,
)
from .semigroup import ScalarPowerLaw
from .spaces import StateVector

__all__ = [
    "ExtinctionPolicy",
    "Chain",
    "CycleRecord",
    "HorizonResult",
    "CycleMoments",
    "step_chain",
    "simulate_chain",
    "evaluate_path",
    "simulate_cycles",
    "simulate_until_time",
    "cycle_moments",
]

_BLOCK = 4096


@dataclass(frozen=True)
class ExtinctionPolicy:
    """Extinction threshold on the ambient norm and the per-cycle step cap."""

    eps_ext: float = 1e-12
    m_cap: int = 1_000_000

    def __post_init__(self):
        if self.eps_ext <= 0:
            raise ValueError("eps_ext must be positive")
        if self.m_cap < 1:
            raise ValueError("m_cap must be at least 1")


class _InputFeed:
    """Blocked, replicate-local supply of (beta, eta) draws.

    Betas are always drawn in fixed-size blocks; scalar kicks too.  Grid kicks
    are drawn one at a time (their cost is dominated by the PDE steps).  The
    consumption order is fixed, so every simulation mode sees the same
    sequence for the same (master_seed, replicate_index).
    """

    def __init__(self, driver: DriverConfig, space, replicate_index: int):
        streams = driver.streams(replicate_index)
        self._beta_rng = streams.beta_rng
        self._eta_rng = streams.eta_rng
        self._beta_law = driver.beta
        self._eta_law = driver.eta
        self._space = space
        self._bbuf = np.empty(0)
        self._bidx = 0
        self._scalar_eta = driver.eta.kind in ("scalar_uniform", "scalar_constant")
        self._const_eta = driver.eta.kind == "scalar_constant"
        self._ebuf = np.empty(0)
        self._eidx = 0

    def next_beta(self) -> float:
        if self._bidx >= self._bbuf.shape[0]:
            self._bbuf = self._beta_law.sample_block(self._beta_rng, _BLOCK)
            self._bidx = 0
        v = self._bbuf[self._bidx]
        self._bidx += 1
        return float(v)

    def next_eta_values(self) -> np.ndarray:
        if not self._scalar_eta:
            return self._eta_law.sample_values(self._eta_rng, self._space)
        return np.array([self.next_eta_scalar()])

    def next_eta_scalar(self) -> float:
        if self._const_eta:
            return self._eta_law.value
        if self._eidx >= self._ebuf.shape[0]:
            amp = self._eta_law.amp
            self._ebuf = self._eta_rng.uniform(-amp, amp, size=_BLOCK)
            self._eidx = 0
        v = self._ebuf[self._eidx]
        self._eidx += 1
        return float(v)


@dataclass
class Chain:
    """A stored chain prefix: states, jump times, and the consumed inputs."""

    states: list
    jump_times: list
    betas: list
    etas: list
    extinct_flags: list


@dataclass
class CycleRecord:
    """One regeneration cycle (or the warm-up segment when n == 0)."""

    n: int
    m_start: int
    m_end: int
    t_start: float
    t_end: float
    tau: float
    integrals: dict
    steps: int

    @property
    def is_warmup(self) -> bool:
        return self.n == 0


@dataclass
class HorizonResult:
    """Single-pass output of ``simulate_until_time``.

    ``integrals[label][j]`` is the path integral of that functional over
    [0, checkpoints[j]]; ``counts[j]`` is the number of regenerations up to
    and including checkpoints[j].  Cycle arrays cover the post-warm-up cycles
    1 .. counts[-1] + 1; the random-index checks need one cycle reaching past
    the horizon, so the run extends until that cycle closes.
    """

    checkpoints: np.ndarray
    integrals: dict
    counts: np.ndarray
    cycle_tau: np.ndarray
    cycle_integrals: dict
    t_end: float


@dataclass
class CycleMoments:
    """Running first and second moments of (S, tau) over completed cycles."""

    labels: list
    n: int = 0
    sum_tau: float = 0.0
    sum_tau2: float = 0.0
    sum_s: dict = field(default_factory=dict)
    sum_s2: dict = field(default_factory=dict)
    sum_s_tau: dict = field(default_factory=dict)

    def __post_init__(self):
        for label in self.labels:
            self.sum_s.setdefault(label, 0.0)
            self.sum_s2.setdefault(label, 0.0)
            self.sum_s_tau.setdefault(label, 0.0)

    def add(self, tau: float, values: dict):
        self.n += 1
        self.sum_tau += tau
        self.sum_tau2 += tau * tau
        for label, s in values.items():
            self.sum_s[label] += s
            self.sum_s2[label] += s * s
            self.sum_s_tau[label] += s * tau

    def merge(self, other: "CycleMoments") -> "CycleMoments":
        if other.labels != self.labels:
            raise ValueError("cannot merge moments over different functionals")
        out = CycleMoments(labels=list(self.labels))
        out.n = self.n + other.n
        out.sum_tau = self.sum_tau + other.sum_tau
        out.sum_tau2 = self.sum_tau2 + other.sum_tau2
        for label in self.labels:
            out.sum_s[label] = self.sum_s[label] + other.sum_s[label]
            out.sum_s2[label] = self.sum_s2[label] + other.sum_s2[label]
            out.sum_s_tau[label] = self.sum_s_tau[label] + other.sum_s_tau[label]
        return out


def step_chain(prev: StateVector, beta: float, eta: StateVector, sg, policy: ExtinctionPolicy):
    """One chain step: returns (next state, extinct flag).

    The flag fires when the pre-kick state's ambient norm is at or below the
    policy threshold; the pre-kick state is then treated as exactly zero, so
    the next state equals the kick bit-exactly.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    pre = sg.evolve(prev, beta)
    extinct = pre.norm_v() <= policy.eps_ext
    if extinct:
        return StateVector(prev.space, eta.values.copy()), True
    return pre + eta, False


def simulate_chain(
    x0: StateVector,
    driver: DriverConfig,
    sg,
    policy: ExtinctionPolicy,
    n_steps: int,
    replicate_index: int = 0,
) -> Chain:
    """Run and store the first n_steps of the chain (small-horizon helper)."""
    feed = _InputFeed(driver, sg.space, replicate_index)
    states = [x0]
    jump_times = [0.0]
    betas: list = []
    etas: list = []
    flags: list = []
    state = x0
    alpha = 0.0
    for _ in range(n_steps):
        beta = feed.next_beta()
        eta = StateVector(sg.space, feed.next_eta_values())
        state, extinct = step_chain(state, beta, eta, sg, policy)
        alpha += beta
        states.append(state)
        jump_times.append(alpha)
        betas.append(beta)
        etas.append(eta)
        flags.append(extinct)
    return Chain(states, jump_times, betas, etas, flags)


def evaluate_path(chain: Chain, sg, t: float) -> StateVector:
    """Path value at time t (right-continuous at jumps)."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t >= chain.jump_times[-1]:
        raise OutOfHorizon(
            f"t = {t} is beyond the simulated range [0, {chain.jump_times[-1]})"
        )
    m = bisect_right(chain.jump_times, t) - 1
    return sg.evolve(chain.states[m], t - chain.jump_times[m])


def _is_closed_form_scalar(xi: Functional) -> bool:
    if isinstance(xi, AffineShift):
        return _is_closed_form_scalar(xi.base)
    return isinstance(xi, (NormV2, IdentityV2, Linear))


def _fast_capable(sg, functionals) -> bool:
    return isinstance(sg, ScalarPowerLaw) and all(
        _is_closed_form_scalar(xi) and not xi.vector_valued for xi in functionals
    )


def _compile_scalar_functional(xi: Functional):
    """Segment-value evaluator (pos, i_abs, delta) -> float.

    Mirrors the closed-form route in ``functionals`` operation for operation,
    so the fast loop reproduces it bit-exactly.
    """
    if isinstance(xi, AffineShift):
        inner = _compile_scalar_functional(xi.base)
        w = xi.w

        def shifted(pos, i_abs, delta, _inner=inner, _w=w):
            return _inner(pos, i_abs, delta) + _w * delta

        return shifted
    if isinstance(xi, NormV2):
        return lambda pos, i_abs, delta: i_abs
    if isinstance(xi, IdentityV2):
        return lambda pos, i_abs, delta: i_abs if pos else -i_abs
    if isinstance(xi, Linear):
        psi = float(xi.psi[0])
        h = xi.space.h

        def linear(pos, i_abs, delta, _psi=psi, _h=h):
            return _psi * (i_abs if pos else -i_abs) * _h

        return linear
    raise ValueError(f"no scalar closed form for {xi.label!r}")


def simulate_cycles(
    x0: StateVector,
    driver: DriverConfig,
    sg,
    policy: ExtinctionPolicy,
    n_cycles: int,
    functionals,
    replicate_index: int = 0,
    quad_cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    trajectory_hook=None,
):
    """Stream the warm-up record and then n_cycles regeneration cycles.

    Yields CycleRecord with n = 0 for the warm-up segment (excluded from
    statistics downstream) followed by cycles n = 1 .. n_cycles.  Raises
    CycleCapExceeded if any cycle exceeds the policy's step cap.  The optional
    trajectory hook receives (m, alpha_m, norm_v1, norm_v2, extinct) per step.
    """
    if n_cycles < 1:
        raise ValueError("need at least one cycle")
    labels = [xi.label for xi in functionals]
    if len(set(labels)) != len(labels):
        raise ValueError("functional labels must be unique")
    if _fast_capable(sg, functionals) and trajectory_hook is None:
        yield from _scalar_cycle_loop(
            x0, driver, sg, policy, n_cycles, functionals, replicate_index
        )
    else:
        yield from _generic_cycle_loop(
            x0, driver, sg, policy, n_cycles, functionals, replicate_index,
            quad_cfg, trajectory_hook,
        )


def _generic_cycle_loop(
    x0, driver, sg, policy, n_cycles, functionals, replicate_index, quad_cfg, hook
):
    feed = _InputFeed(driver, sg.space, replicate_index)
    space = sg.space
    state = x0
    alpha = 0.0
    m = 0
    cycle_index = 0
    m_start = 0
    t_start = 0.0
    steps = 0
    acc = {xi.label: xi.zero_value() for xi in functionals}
    done = 0
    has_flow = hasattr(sg, "segment_flow")
    while done < n_cycles:
        beta = feed.next_beta()
        eta_vals = feed.next_eta_values()
        flow = sg.segment_flow(state) if has_flow else None
        for xi in functionals:
            seg = integrate_segment(xi, state, beta, sg, quad_cfg, flow=flow)
            acc[xi.label] = acc[xi.label] + seg.value
        if flow is not None:
            pre = StateVector(space, flow.at(beta))
        else:
            pre = sg.evolve(state, beta)
        extinct = pre.norm_v() <= policy.eps_ext
        m += 1
        alpha += beta
        steps += 1
        if steps > policy.m_cap:
            raise CycleCapExceeded(
                f"cycle {cycle_index} exceeded {policy.m_cap} chain steps"
            )
        if extinct:
            state = StateVector(space, eta_vals)
        else:
            state = StateVector(space, pre.values + eta_vals)
        if hook is not None:
            hook(m, alpha, state.norm_v1(), state.norm_v2(), extinct)
        if extinct:
            yield CycleRecord(
                n=cycle_index,
                m_start=m_start,
                m_end=m,
                t_start=t_start,
                t_end=alpha,
                tau=alpha - t_start,
                integrals=acc,
                steps=steps,
            )
            if cycle_index > 0:
                done += 1
            cycle_index += 1
            m_start = m
            t_start = alpha
            steps = 0
            acc = {xi.label: xi.zero_value() for xi in functionals}


def _scalar_cycle_loop(x0, driver, sg, policy, n_cycles, functionals, replicate_index):
    feed = _InputFeed(driver, sg.space, replicate_index)
    next_beta = feed.next_beta
    next_eta = feed.next_eta_scalar
    kappa = sg.kappa
    rho = sg.rho
    inv_rho = 1.0 / rho
    e1 = inv_rho + 1.0
    denom = kappa * e1
    eps_ext = policy.eps_ext
    m_cap = policy.m_cap
    labels = [xi.label for xi in functionals]
    fns = [_compile_scalar_functional(xi) for xi in functionals]
    n_f = len(fns)
    acc = [0.0] * n_f
    x = x0.scalar
    alpha = 0.0
    m = 0
    cycle_index = 0
    m_start = 0
    t_start = 0.0
    steps = 0
    done = 0
    while done < n_cycles:
        beta = next_beta()
        eta = next_eta()
        ax = abs(x)
        c = ax**rho
        r = c - kappa * beta
        # identical operations to the closed-form segment integral
        live = min(beta, c / kappa)
        tail = max(c - kappa * live, 0.0)
        i_abs = (c**e1 - tail**e1) / denom
        if r <= 0.0:
            extinct = True
            pre_mag = 0.0
        else:
            pre_mag = r**inv_rho
            if pre_mag > ax:  # same ulp clamp as the semigroup's evolve
                pre_mag = ax
            extinct = pre_mag <= eps_ext
        pos = x >= 0
        m += 1
        alpha += beta
        steps += 1
        if steps > m_cap:
            raise CycleCapExceeded(
                f"cycle {cycle_index} exceeded {m_cap} chain steps"
            )
        for j in range(n_f):
            acc[j] += fns[j](pos, i_abs, beta)
        if extinct:
            x = eta
            yield CycleRecord(
                n=cycle_index,
                m_start=m_start,
                m_end=m,
                t_start=t_start,
                t_end=alpha,
                tau=alpha - t_start,
                integrals=dict(zip(labels, acc)),
                steps=steps,
            )
            if cycle_index > 0:
                done += 1
            cycle_index += 1
            m_start = m
            t_start = alpha
            steps = 0
            acc = [0.0] * n_f
        else:
            x = (pre_mag if pos else -pre_mag) + eta


def cycle_moments(
    x0: StateVector,
    driver: DriverConfig,
    sg,
    policy: ExtinctionPolicy,
    n_cycles: int,
    functionals,
    replicate_index: int = 0,
    quad_cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> CycleMoments:
    """Accumulate per-cycle (S, tau) first and second moments without records.

    Scalar-valued functionals only; the warm-up is excluded.  This is the
    memory-flat path used by large estimation runs.
    """
    for xi in functionals:
        if xi.vector_valued:
            raise ValueError("moment accumulation needs scalar-valued functionals")
    labels = [xi.label for xi in functionals]
    moments = CycleMoments(labels=labels)
    if _fast_capable(sg, functionals):
        _scalar_moment_loop(
            x0, driver, sg, policy, n_cycles, functionals, replicate_index, moments
        )
        return moments
    for rec in _generic_cycle_loop(
        x0, driver, sg, policy, n_cycles, functionals, replicate_index, quad_cfg, None
    ):
        if not rec.is_warmup:
            moments.add(rec.tau, rec.integrals)
    return moments


def _scalar_moment_loop(
    x0, driver, sg, policy, n_cycles, functionals, replicate_index, moments
):
    feed = _InputFeed(driver, sg.space, replicate_index)
    next_beta = feed.next_beta
    next_eta = feed.next_eta_scalar
    kappa = sg.kappa
    rho = sg.rho
    inv_rho = 1.0 / rho
    e1 = inv_rho + 1.0
    denom = kappa * e1
    eps_ext = policy.eps_ext
    m_cap = policy.m_cap
    labels = moments.labels
    fns = [_compile_scalar_functional(xi) for xi in functionals]
    n_f = len(fns)
    acc = [0.0] * n_f
    sum_s = [0.0] * n_f
    sum_s2 = [0.0] * n_f
    sum_s_tau = [0.0] * n_f
    sum_tau = 0.0
    sum_tau2 = 0.0
    n_done = 0
    x = x0.scalar
    t_start = 0.0
    alpha = 0.0
    steps = 0
    in_warmup = True
    while n_done < n_cycles:
        beta = next_beta()
        eta = next_eta()
        ax = abs(x)
        c = ax**rho
        r = c - kappa * beta
        live = min(beta, c / kappa)
        tail = max(c - kappa * live, 0.0)
        i_abs = (c**e1 - tail**e1) / denom
        if r <= 0.0:
            extinct = True
            pre_mag = 0.0
        else:
            pre_mag = r**inv_rho
            if pre_mag > ax:  # same ulp clamp as the semigroup's evolve
                pre_mag = ax
            extinct = pre_mag <= eps_ext
        pos = x >= 0
        alpha += beta
        steps += 1
        if steps > m_cap:
            raise CycleCapExceeded(f"cycle exceeded {m_cap} chain steps")
        for j in range(n_f):
            acc[j] += fns[j](pos, i_abs, beta)
        if extinct:
            x = eta
            if in_warmup:
                in_warmup = False
            else:
                tau = alpha - t_start
                sum_tau += tau
                sum_tau2 += tau * tau
                for j in range(n_f):
                    s = acc[j]
                    sum_s[j] += s
                    sum_s2[j] += s * s
                    sum_s_tau[j] += s * tau
                n_done += 1
            t_start = alpha
            steps = 0
            acc = [0.0] * n_f
        else:
            x = (pre_mag if pos else -pre_mag) + eta
    moments.n = n_done
    moments.sum_tau = sum_tau
    moments.sum_tau2 = sum_tau2
    for j, label in enumerate(labels):
        moments.sum_s[label] = sum_s[j]
        moments.sum_s2[label] = sum_s2[j]
        moments.sum_s_tau[label] = sum_s_tau[j]


def _check_checkpoints(t_end, checkpoints):
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if checkpoints is None:
        cps = [float(t_end)]
    else:
        cps = [float(t) for t in checkpoints]
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if cps and (cps[0] <= 0 or cps[-1] > t_end):
            raise ValueError("checkpoints must lie in (0, t_end]")
        if not cps or cps[-1] < t_end:
            cps.append(float(t_end))
    return cps


def simulate_until_time(
    x0: StateVector,
    driver: DriverConfig,
    sg,
    policy: ExtinctionPolicy,
    t_end: float,
    functionals,
    checkpoints=None,
    replicate_index: int = 0,
    quad_cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> HorizonResult:
    """One pass to the horizon: checkpoint integrals, regeneration counts,
    and the cycles needed one past the horizon."""
    cps = _check_checkpoints(t_end, checkpoints)
    labels = [xi.label for xi in functionals]
    if len(set(labels)) != len(labels):
        raise ValueError("functional labels must be unique")
    if _fast_capable(sg, functionals):
        return _scalar_horizon_loop(
            x0, driver, sg, policy, cps, functionals, replicate_index
        )
    return _generic_horizon_loop(
        x0, driver, sg, policy, cps, functionals, replicate_index, quad_cfg
    )


def _scalar_horizon_loop(x0, driver, sg, policy, cps, functionals, replicate_index):
    feed = _InputFeed(driver, sg.space, replicate_index)
    next_beta = feed.next_beta
    next_eta = feed.next_eta_scalar
    kappa = sg.kappa
    rho = sg.rho
    inv_rho = 1.0 / rho
    e1 = inv_rho + 1.0
    denom = kappa * e1
    eps_ext = policy.eps_ext
    m_cap = policy.m_cap
    labels = [xi.label for xi in functionals]
    fns = [_compile_scalar_functional(xi) for xi in functionals]
    n_f = len(fns)
    n_cp = len(cps)
    out = np.zeros((n_f, n_cp))
    counts = np.zeros(n_cp, dtype=np.int64)
    run = [0.0] * n_f
    cyc_acc = [0.0] * n_f
    cycle_tau: list = []
    cycle_s = [[] for _ in range(n_f)]
    cp_i = 0
    regen = 0
    x = x0.scalar
    alpha = 0.0
    t_start = 0.0
    steps = 0
    l_end = None
    while True:
        beta = next_beta()
        eta = next_eta()
        alpha_prev = alpha
        alpha = alpha + beta
        ax = abs(x)
        c = ax**rho
        r = c - kappa * beta
        live = min(beta, c / kappa)
        tail = max(c - kappa * live, 0.0)
        i_abs = (c**e1 - tail**e1) / denom
        if r <= 0.0:
            extinct = True
            pre_mag = 0.0
        else:
            pre_mag = r**inv_rho
            if pre_mag > ax:  # same ulp clamp as the semigroup's evolve
                pre_mag = ax
            extinct = pre_mag <= eps_ext
        pos = x >= 0
        steps += 1
        if steps > m_cap:
            raise CycleCapExceeded(f"cycle exceeded {m_cap} chain steps")
        while cp_i < n_cp and cps[cp_i] < alpha:
            dpart = cps[cp_i] - alpha_prev
            live_p = min(dpart, c / kappa)
            tail_p = max(c - kappa * live_p, 0.0)
            i_abs_p = (c**e1 - tail_p**e1) / denom
            for j in range(n_f):
                out[j, cp_i] = run[j] + fns[j](pos, i_abs_p, dpart)
            counts[cp_i] = regen
            cp_i += 1
        for j in range(n_f):
            v = fns[j](pos, i_abs, beta)
            run[j] += v
            cyc_acc[j] += v
        if extinct:
            regen += 1
            if regen > 1:
                cycle_tau.append(alpha - t_start)
                for j in range(n_f):
                    cycle_s[j].append(cyc_acc[j])
            t_start = alpha
            steps = 0
            cyc_acc = [0.0] * n_f
            x = eta
        else:
            x = (pre_mag if pos else -pre_mag) + eta
        while cp_i < n_cp and cps[cp_i] == alpha:
            for j in range(n_f):
                out[j, cp_i] = run[j]
            counts[cp_i] = regen
            cp_i += 1
        if cp_i >= n_cp:
            if l_end is None:
                l_end = int(counts[-1])
            if regen >= l_end + 2:
                break
    return HorizonResult(
        checkpoints=np.asarray(cps),
        integrals={labels[j]: out[j].copy() for j in range(n_f)},
        counts=counts,
        cycle_tau=np.asarray(cycle_tau),
        cycle_integrals={labels[j]: np.asarray(cycle_s[j]) for j in range(n_f)},
        t_end=cps[-1],
    )


def _generic_horizon_loop(
    x0, driver, sg, policy, cps, functionals, replicate_index, quad_cfg
):
    feed = _InputFeed(driver, sg.space, replicate_index)
    space = sg.space
    labels = [xi.label for xi in functionals]
    n_cp = len(cps)
    out = {
        label: [None] * n_cp for label in labels
    }
    counts = np.zeros(n_cp, dtype=np.int64)
    run = {xi.label: xi.zero_value() for xi in functionals}
    cyc_acc = {xi.label: xi.zero_value() for xi in functionals}
    cycle_tau: list = []
    cycle_s = {label: [] for label in labels}
    cp_i = 0
    regen = 0
    state = x0
    alpha = 0.0
    t_start = 0.0
    steps = 0
    l_end = None
    has_flow = hasattr(sg, "segment_flow")
    while True:
        beta = feed.next_beta()
        eta_vals = feed.next_eta_values()
        alpha_prev = alpha
        alpha = alpha + beta
        flow = sg.segment_flow(state) if has_flow else None
        steps += 1
        if steps > policy.m_cap:
            raise CycleCapExceeded(f"cycle exceeded {policy.m_cap} chain steps")
        while cp_i < n_cp and cps[cp_i] < alpha:
            dpart = cps[cp_i] - alpha_prev
            for xi in functionals:
                seg = integrate_segment(xi, state, dpart, sg, quad_cfg, flow=flow)
                out[xi.label][cp_i] = run[xi.label] + seg.value
            counts[cp_i] = regen
            cp_i += 1
        for xi in functionals:
            seg = integrate_segment(xi, state, beta, sg, quad_cfg, flow=flow)
            run[xi.label] = run[xi.label] + seg.value
            cyc_acc[xi.label] = cyc_acc[xi.label] + seg.value
        if flow is not None:
            pre = StateVector(space, flow.at(beta))
        else:
            pre = sg.evolve(state, beta)
        extinct = pre.norm_v() <= policy.eps_ext
        if extinct:
            regen += 1
            if regen > 1:
                cycle_tau.append(alpha - t_start)
                for label in labels:
                    cycle_s[label].append(cyc_acc[label])
            t_start = alpha
            steps = 0
            cyc_acc = {xi.label: xi.zero_value() for xi in functionals}
            state = StateVector(space, eta_vals)
        else:
            state = StateVector(space, pre.values + eta_vals)
        while cp_i < n_cp and cps[cp_i] == alpha:
            for label in labels:
                out[label][cp_i] = run[label]
            counts[cp_i] = regen
            cp_i += 1
        if cp_i >= n_cp:
            if l_end is None:
                l_end = int(counts[-1])
            if regen >= l_end + 2:
                break
    integrals = {}
    cycle_integrals = {}
    for xi in functionals:
        label = xi.label
        if xi.vector_valued:
            integrals[label] = np.stack(out[label])
            cycle_integrals[label] = (
                np.stack(cycle_s[label])
                if cycle_s[label]
                else np.zeros((0, space.dim))
            )
        else:
            integrals[label] = np.asarray(out[label], dtype=float)
            cycle_integrals[label] = np.asarray(cycle_s[label], dtype=float)
    return HorizonResult(
        checkpoints=np.asarray(cps),
        integrals=integrals,
        counts=counts,
        cycle_tau=np.asarray(cycle_tau),
        cycle_integrals=cycle_integrals,
        t_end=cps[-1],
    )
