"""Regenerative jump processes driven by finitely extinguishing semigroups.

Simulation of chains X_m = T(beta_m) X_{m-1} + eta_m whose between-jump flow
T is a nonlinear contraction semigroup that reaches zero in finite time,
renewal-reward estimation of long-run averages and fluctuation covariances,
and a statistical verification harness (strong-law, central-limit, and
random-index checks) for both an exact scalar flow and a discrete weighted
p-Laplacian flow.
"""

from .driver import BetaLaw, DriverConfig, EtaLaw, check_drift_condition, derive_replicate_rng
from .errors import (
    ConfigError,
    CycleCapExceeded,
    DegenerateSigma,
    DimensionMismatch,
    DriftViolated,
    InsufficientCycles,
    NoExtinction,
    NonConvergence,
    OutOfHorizon,
    QuadratureBudgetExceeded,
)
from .estimators import (
    CycleSet,
    TestReport,
    anscombe_check,
    clt_statistic,
    cycle_diagnostics,
    estimate_Q,
    estimate_nu,
    estimate_sigma2,
    ks_test_normal,
)
from .functionals import (
    AffineShift,
    IdentityV2,
    Linear,
    NormV2,
    QuadratureConfig,
    integrate_cycle,
    integrate_segment,
)
from .plaplace import (
    Grid1D,
    PLaplaceConfig,
    PLaplaceSemigroup,
    WeightField,
    apply_discrete_operator,
    estimate_kappa,
    evolve_plaplace,
    implicit_euler_step,
)
from .process import (
    Chain,
    CycleRecord,
    ExtinctionPolicy,
    HorizonResult,
    cycle_moments,
    evaluate_path,
    simulate_chain,
    simulate_cycles,
    simulate_until_time,
    step_chain,
)
from .semigroup import (
    ExtinctionParams,
    ScalarPowerLaw,
    check_semigroup_axioms,
    scalar_extinction_time,
)
from .spaces import Space, StateVector, grid_space, project_zero_mean, scalar_space

__version__ = "0.1.0"
