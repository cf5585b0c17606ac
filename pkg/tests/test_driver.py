import numpy as np
import pytest
from scipy import stats as sps

from regenjump.driver import (
    BetaLaw,
    DriverConfig,
    EtaLaw,
    check_drift_condition,
    derive_replicate_rng,
    sample_beta,
    sample_eta,
)
from regenjump.errors import ConfigError
from regenjump.spaces import grid_space, scalar_space

SCALAR = scalar_space()


def test_deterministic_beta():
    law = BetaLaw.deterministic(3.0)
    rng = derive_replicate_rng(1, 0, 0)
    assert all(sample_beta(law, rng) == 3.0 for _ in range(5))
    assert law.mean() == 3.0


def test_degenerate_uniform_beta():
    law = BetaLaw.uniform(1.0, 1.0)
    rng = derive_replicate_rng(1, 0, 0)
    assert sample_beta(law, rng) == 1.0


def test_exponential_mean_lln():
    law = BetaLaw.exponential(2.0)
    rng = derive_replicate_rng(7, 0, 0)
    draws = law.sample_block(rng, 10**6)
    assert np.mean(draws) == pytest.approx(0.5, abs=2e-3)
    assert np.all(draws > 0)


def test_gamma_mean():
    law = BetaLaw.gamma(2.0, 1.5)
    assert law.mean() == 3.0
    rng = derive_replicate_rng(7, 0, 0)
    draws = law.sample_block(rng, 10**5)
    assert np.mean(draws) == pytest.approx(3.0, rel=0.02)


@pytest.mark.parametrize(
    "bad",
    [
        lambda: BetaLaw.deterministic(0.0),
        lambda: BetaLaw.uniform(0.0, 1.0),
        lambda: BetaLaw.uniform(2.0, 1.0),
        lambda: BetaLaw.exponential(0.0),
        lambda: BetaLaw.gamma(0.0, 1.0),
        lambda: BetaLaw("cauchy"),
        lambda: EtaLaw("levy"),
        lambda: EtaLaw.scalar_uniform(-1.0),
        lambda: EtaLaw.grid_bumps(0, 1.0, (0.1, 0.2)),
        lambda: EtaLaw.grid_bumps(2, 1.0, (0.3, 0.2)),
    ],
)
def test_law_validation(bad):
    with pytest.raises(ConfigError):
        bad()


def test_scalar_uniform_zero_amp():
    law = EtaLaw.scalar_uniform(0.0)
    rng = derive_replicate_rng(1, 0, 1)
    assert sample_eta(law, rng, SCALAR).scalar == 0.0
    assert law.is_zero


def test_scalar_constant_eta():
    law = EtaLaw.scalar_constant(1.0)
    rng = derive_replicate_rng(1, 0, 1)
    assert sample_eta(law, rng, SCALAR).scalar == 1.0
    assert law.is_deterministic
    assert law.abs_moment(0.5) == 1.0


def test_scalar_uniform_half_moment():
    # E |U[-1,1]|^0.5 = 2/3
    law = EtaLaw.scalar_uniform(1.0)
    assert law.abs_moment(0.5) == pytest.approx(2.0 / 3.0)
    rng = derive_replicate_rng(11, 0, 1)
    draws = rng.uniform(-1.0, 1.0, size=10**6)
    assert np.mean(np.abs(draws) ** 0.5) == pytest.approx(2.0 / 3.0, abs=5e-3)


def test_grid_bumps_zero_mean_and_bounded():
    space = grid_space(32, length=1.0)
    law = EtaLaw.grid_bumps(3, 1.0, (0.05, 0.2))
    rng = derive_replicate_rng(5, 0, 1)
    for _ in range(50):
        eta = sample_eta(law, rng, space)
        assert abs(eta.mean()) <= 1e-14
        assert np.max(np.abs(eta.values)) <= 2 * 3 * 1.0  # bumps plus mean shift


def test_eta_space_mismatch():
    rng = derive_replicate_rng(1, 0, 1)
    with pytest.raises(ConfigError):
        EtaLaw.scalar_uniform(1.0).sample(rng, grid_space(4))
    with pytest.raises(ConfigError):
        EtaLaw.grid_bumps(1, 1.0, (0.1, 0.2)).sample(rng, SCALAR)


def test_stream_determinism_and_separation():
    a1 = derive_replicate_rng(42, 0, 0).random(8)
    a2 = derive_replicate_rng(42, 0, 0).random(8)
    b = derive_replicate_rng(42, 1, 0).random(8)
    c = derive_replicate_rng(42, 0, 1).random(8)
    assert np.all(a1 == a2)
    assert a1[0] != b[0]
    assert a1[0] != c[0]


def test_stream_uniformity_ks():
    # first draws across 10^4 replicate streams look uniform
    first = np.array([derive_replicate_rng(42, k, 0).random() for k in range(10**4)])
    _, p = sps.kstest(first, "uniform")
    assert p > 0.01


def test_beta_eta_streams_disjoint():
    # changing the eta law never perturbs the beta sequence
    cfg_a = DriverConfig(BetaLaw.exponential(1.0), EtaLaw.scalar_uniform(1.0), 99)
    cfg_b = DriverConfig(BetaLaw.exponential(1.0), EtaLaw.scalar_uniform(2.5), 99)
    betas_a = cfg_a.beta.sample_block(cfg_a.streams(0).beta_rng, 64)
    betas_b = cfg_b.beta.sample_block(cfg_b.streams(0).beta_rng, 64)
    assert np.all(betas_a == betas_b)


def test_drift_exact_cases():
    space = SCALAR
    ok = check_drift_condition(
        DriverConfig(BetaLaw.deterministic(3.0), EtaLaw.scalar_constant(1.0), 1),
        kappa=1.0, rho=0.5, n_mc=10**4, space=space,
    )
    assert ok.exact and ok.ci_halfwidth == 0.0
    assert ok.lhs_estimate == pytest.approx(-2.0)
    assert ok.ok

    bad = check_drift_condition(
        DriverConfig(BetaLaw.deterministic(0.5), EtaLaw.scalar_constant(1.0), 1),
        kappa=1.0, rho=0.5, n_mc=10**4, space=space,
    )
    assert bad.lhs_estimate == pytest.approx(0.5)
    assert not bad.ok


def test_drift_monte_carlo():
    # beta ~ Exp(1), eta ~ U[-1,1]: lhs = -1 + 2/3 = -1/3
    report = check_drift_condition(
        DriverConfig(BetaLaw.exponential(1.0), EtaLaw.scalar_uniform(1.0), 123),
        kappa=1.0, rho=0.5, n_mc=10**5, space=SCALAR,
    )
    assert not report.exact
    assert report.lhs_estimate == pytest.approx(-1.0 / 3.0, abs=0.02)
    assert report.ok
    assert abs(report.lhs_estimate + 1.0 / 3.0) <= 2 * report.ci_halfwidth


def test_drift_grid_backend():
    space = grid_space(16)
    report = check_drift_condition(
        DriverConfig(
            BetaLaw.uniform(0.5, 1.5), EtaLaw.grid_bumps(2, 0.5, (0.05, 0.2)), 7
        ),
        kappa=2.0, rho=0.5, n_mc=10**4, space=space,
    )
    assert report.ok  # kappa*E beta = 2 dominates E||eta||^0.5 < 1


def test_drift_needs_enough_samples():
    with pytest.raises(ConfigError):
        check_drift_condition(
            DriverConfig(BetaLaw.exponential(1.0), EtaLaw.scalar_uniform(1.0), 1),
            kappa=1.0, rho=0.5, n_mc=100, space=SCALAR,
        )


def test_moment_sanity_against_analytic():
    # 12th moment of Exp(rate): 12! / rate^12; 4th moment of |U[-a,a]|: a^4/5
    rng = derive_replicate_rng(3, 0, 0)
    draws = BetaLaw.exponential(1.0).sample_block(rng, 10**5)
    m12 = np.mean(draws**12)
    import math

    exact = math.factorial(12)
    # heavy-ish tail: just demand finiteness and the right order of magnitude
    assert np.isfinite(m12)
    assert 0.01 * exact < m12 < 100 * exact
    rng2 = derive_replicate_rng(3, 0, 1)
    etas = rng2.uniform(-2.0, 2.0, size=10**5)
    m4 = np.mean(etas**4)
    se = np.std(etas**4) / np.sqrt(10**5)
    assert abs(m4 - 2.0**4 / 5.0) <= 3 * se
