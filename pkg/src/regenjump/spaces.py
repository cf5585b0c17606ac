"""State spaces and the norm triplet carried by every state.

A state lives in one finite-dimensional space realized either as a scalar or
as a piecewise-constant function on a uniform 1-D grid.  Three norms are
attached to the same value array:

* ``norm_v``  -- the ambient norm (scalar: absolute value; grid: discrete L1),
* ``norm_v1`` -- the norm in which finite extinction is asserted
  (scalar: absolute value; grid: discrete L2),
* ``norm_v2`` -- the norm entering sub-linear functionals
  (scalar: absolute value; grid: discrete Lq with configurable q).

Discrete Lq norms use the cell width as quadrature weight, so they converge
to the continuum norms under refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

__all__ = ["Space", "StateVector", "scalar_space", "grid_space", "project_zero_mean"]


@dataclass(frozen=True)
class Space:
    """Geometry of the state space.

    kind is "scalar" or "grid".  For grids, ``length`` is the domain size,
    ``n_cells`` the number of cells, and ``q`` the exponent of the discrete
    Lq norm used as the functional-space norm.
    """

    kind: str
    n_cells: int = 1
    length: float = 1.0
    q: float = 2.0

    def __post_init__(self):
        if self.kind not in ("scalar", "grid"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.kind == "grid" and self.n_cells < 2:
            raise ValueError("grid spaces need at least 2 cells")
        if self.length <= 0:
            raise ValueError("domain length must be positive")
        if self.q < 1:
            raise ValueError("Lq exponent must satisfy q >= 1")

    @property
    def h(self) -> float:
        """Cell width (1.0 for scalar states)."""
        if self.kind == "scalar":
            return 1.0
        return self.length / self.n_cells

    @property
    def dim(self) -> int:
        return 1 if self.kind == "scalar" else self.n_cells

    def zero(self) -> "StateVector":
        return StateVector(self, np.zeros(self.dim))

    def state(self, values) -> "StateVector":
        return StateVector(self, np.asarray(values, dtype=float))


def scalar_space() -> Space:
    return Space(kind="scalar")


def grid_space(n_cells: int, length: float = 1.0, q: float = 2.0) -> Space:
    return Space(kind="grid", n_cells=n_cells, length=length, q=q)


@dataclass
class StateVector:
    """A state together with its space; values are a plain float array."""

    space: Space
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.dim,):
            raise DimensionMismatch(
                f"state of shape {self.values.shape} does not fit space of "
                f"dimension {self.space.dim}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state entries must be finite")

    @property
    def scalar(self) -> float:
        if self.space.kind != "scalar":
            raise DimensionMismatch("scalar() called on a grid state")
        return float(self.values[0])

    def norm_v(self) -> float:
        """Ambient norm: |x| for scalars, discrete L1 for grids."""
        if self.space.kind == "scalar":
            return abs(float(self.values[0]))
        return float(np.sum(np.abs(self.values)) * self.space.h)

    def norm_v1(self) -> float:
        """Extinction-space norm: |x| for scalars, discrete L2 for grids."""
        if self.space.kind == "scalar":
            return abs(float(self.values[0]))
        return float(np.sqrt(np.sum(self.values**2) * self.space.h))

    def norm_v2(self) -> float:
        """Functional-space norm: |x| for scalars, discrete Lq for grids."""
        if self.space.kind == "scalar":
            return abs(float(self.values[0]))
        q = self.space.q
        return float((np.sum(np.abs(self.values) ** q) * self.space.h) ** (1.0 / q))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def __add__(self, other: "StateVector") -> "StateVector":
        if other.space != self.space:
            raise DimensionMismatch("cannot add states from different spaces")
        return StateVector(self.space, self.values + other.values)

    def __sub__(self, other: "StateVector") -> "StateVector":
        if other.space != self.space:
            raise DimensionMismatch("cannot subtract states from different spaces")
        return StateVector(self.space, self.values - other.values)

    def __neg__(self) -> "StateVector":
        return StateVector(self.space, -self.values)

    def copy(self) -> "StateVector":
        return StateVector(self.space, self.values.copy())


def project_zero_mean(u: StateVector) -> StateVector:
    """Remove the mean so the result carries zero mass."""
    return StateVector(u.space, u.values - np.mean(u.values))
