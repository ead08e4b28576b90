import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from hhmmpt.energy import (
    Beta,
    InvGamma,
    LogNormal,
    ParameterSchema,
    ParameterVector,
    PriorConfig,
    energy,
    log_prior,
    model_from_theta,
    prior_terms,
    theta_from_model,
    unpack,
)
from hhmmpt.likelihood import DataSet, hierarchical_loglik
from hhmmpt.model import (
    DomainError,
    EmissionParams,
    GammaParams,
    HierarchicalModel,
    StateEmission,
    TransitionMatrix,
    default_model,
)
from hhmmpt.simulator import SimConfig, simulate


# -- prior densities -----------------------------------------------------------

def test_lognormal_at_location():
    assert LogNormal(math.log(100.0), 1.0).logpdf(100.0) == pytest.approx(
        -math.log(100.0) - 0.5 * math.log(2 * math.pi), abs=1e-14)


@given(st.floats(1e-3, 1e4))
def test_priors_match_scipy(x):
    assert LogNormal(math.log(100), 1.0).logpdf(x) == pytest.approx(
        stats.lognorm(s=1.0, scale=100.0).logpdf(x), rel=1e-10, abs=1e-10)
    assert InvGamma(1e-3, 1e-3).logpdf(x) == pytest.approx(
        stats.invgamma(a=1e-3, scale=1e-3).logpdf(x), rel=1e-10, abs=1e-10)


@given(st.floats(1e-6, 1 - 1e-6), st.sampled_from([(1.0, 1.0), (0.5, 0.5), (2.0, 2.0), (3.0, 0.7)]))
def test_beta_matches_scipy(x, ab):
    assert Beta(*ab).logpdf(x) == pytest.approx(stats.beta(*ab).logpdf(x), rel=1e-10, abs=1e-10)


def test_uniform_beta_is_zero():
    assert Beta(1.0, 1.0).logpdf(0.5) == 0.0


def test_beta_boundaries():
    assert Beta(1.0, 1.0).logpdf(0.0) == 0.0
    assert Beta(1.0, 1.0).logpdf(1.0) == 0.0
    assert Beta(0.5, 0.5).logpdf(0.0) == -math.inf
    assert Beta(2.0, 2.0).logpdf(1.0) == -math.inf
    assert Beta(2.0, 2.0).logpdf(1.2) == -math.inf


@pytest.mark.parametrize("x", [-1.0, 0.0, math.nan])
def test_positive_priors_outside_support(x):
    assert LogNormal(0.0, 1.0).logpdf(x) == -math.inf
    assert InvGamma(1.0, 1.0).logpdf(x) == -math.inf


def test_hyperparameters_must_be_positive():
    with pytest.raises(DomainError):
        LogNormal(0.0, 0.0)
    with pytest.raises(DomainError):
        InvGamma(0.0, 1.0)
    with pytest.raises(DomainError):
        Beta(1.0, -1.0)


def test_default_prior_hyperparameters():
    cfg = PriorConfig()
    assert cfg.mean_prior == LogNormal(math.log(100), 1.0)
    assert cfg.sd_prior == InvGamma(1e-3, 1e-3)
    assert cfg.zero_mass_prior == Beta(1.0, 1.0)
    assert cfg.tpm_entry_prior == Beta(0.5, 0.5)


# -- parameter schema -----------------------------------------------------------

@pytest.mark.parametrize("N, K, tpm, mode", [(3, 2, False, "derived"), (3, 2, True, "derived"),
                                             (2, 2, True, "free"), (1, 1, False, "derived")])
def test_schema_length(N, K, tpm, mode):
    s = ParameterSchema(N, K, tpm, mode)
    expected = 7 * N
    if tpm:
        expected += K * N * (N - 1) + K * (K - 1)
    if mode == "free":
        expected += K * (N - 1) + (K - 1)
    assert len(s) == expected
    assert len(set(s.names)) == len(s)


def test_schema_order():
    s = ParameterSchema(3, 2, tpm_estimation=True)
    assert s.names[:6] == ["duration_mean_1", "duration_mean_2", "duration_mean_3",
                           "duration_sd_1", "duration_sd_2", "duration_sd_3"]
    assert s.names[18:21] == ["zero_mass_1", "zero_mass_2", "zero_mass_3"]
    assert s.names[21:23] == ["tpm_prod1_1_1", "tpm_prod1_1_2"]
    assert s.names[-2:] == ["tpm_internal_1_1", "tpm_internal_2_1"]
    groups = dict(s.simplex_groups())
    assert len(groups) == 2 * 3 + 2
    assert all(len(idx) == 2 for label, idx in groups.items() if label.startswith("prod"))


def test_theta_model_round_trip():
    m = default_model()
    for tpm in (False, True):
        s = ParameterSchema(3, 2, tpm)
        theta = theta_from_model(m, s)
        back = model_from_theta(theta, m)
        assert back.emissions == m.emissions
        for a, b in zip(back.production_tpms, m.production_tpms):
            np.testing.assert_allclose(a.entries, b.entries, atol=1e-15)


def test_unpack_rejects_rows_leaving_simplex():
    m = default_model()
    s = ParameterSchema(3, 2, True)
    v = theta_from_model(m, s).values.copy()
    v[s.index("tpm_prod1_1_1")] = 0.95
    v[s.index("tpm_prod1_1_2")] = 0.2
    with pytest.raises(DomainError):
        unpack(v, s, m)


def test_parameter_vector_checks_length():
    with pytest.raises(DomainError):
        ParameterVector(np.zeros(3), ParameterSchema(3, 2))


# -- energy --------------------------------------------------------------------

def _one_state_model(mean=4.0, sd=2.0, zm=0.3):
    g = GammaParams(mean, sd)
    return HierarchicalModel(TransitionMatrix([[1.0]]), (TransitionMatrix([[1.0]]),),
                             EmissionParams((StateEmission(g, g, g, zm),)))


def test_single_observation_energy_by_hand():
    m = _one_state_model()
    data = DataSet.from_arrays(np.array([[3.0, 5.0, 2.5]]), np.array([0, 1]))
    theta = theta_from_model(m, ParameterSchema(1, 1))
    gam = stats.gamma(a=4.0, scale=1.0)  # mean 4, sd 2 -> shape 4, rate 1
    loglik = gam.logpdf(3.0) + gam.logpdf(5.0) + math.log(0.7) + gam.logpdf(2.5)
    lp = 3 * (stats.lognorm(s=1.0, scale=100.0).logpdf(4.0) + stats.invgamma(1e-3, scale=1e-3).logpdf(2.0))
    lp += stats.beta(1, 1).logpdf(0.3)
    assert energy(theta, data, PriorConfig(), m) == pytest.approx(-loglik - lp, rel=1e-12)


def test_energy_is_additive():
    m = default_model()
    sim = simulate(SimConfig(m, 4, 10, 3))
    theta = theta_from_model(m, ParameterSchema(3, 2, True))
    e = energy(theta, sim.data, PriorConfig(), m)
    assert e == -hierarchical_loglik(sim.data, m) - log_prior(theta, PriorConfig())


def test_out_of_support_energy_is_infinite():
    m = default_model()
    sim = simulate(SimConfig(m, 2, 5, 1))
    s = ParameterSchema(3, 2)
    v = theta_from_model(m, s).values.copy()
    v[s.index("duration_sd_2")] = -1.0
    assert energy(ParameterVector(v, s), sim.data, PriorConfig(), m) == math.inf
    v[s.index("duration_sd_2")] = 1.0
    v[s.index("zero_mass_1")] = 1.3
    assert energy(ParameterVector(v, s), sim.data, PriorConfig(), m) == math.inf


def test_prior_change_moves_energy_by_prior_difference():
    m = default_model()
    sim = simulate(SimConfig(m, 3, 8, 2))
    theta = theta_from_model(m, ParameterSchema(3, 2))
    a, b = PriorConfig(), PriorConfig(zero_mass_prior=Beta(2.0, 2.0))
    diff = energy(theta, sim.data, a, m) - energy(theta, sim.data, b, m)
    assert diff == pytest.approx(log_prior(theta, b) - log_prior(theta, a), abs=1e-9)


def test_zero_mass_prior_swap_touches_only_zero_mass_terms():
    m = default_model()
    s = ParameterSchema(3, 2, True)
    theta = theta_from_model(m, s)
    zm = set(s.indices("zero_mass"))
    base = prior_terms(theta.values, s, PriorConfig())
    for ab in ((0.5, 0.5), (2.0, 2.0)):
        other = prior_terms(theta.values, s, PriorConfig(zero_mass_prior=Beta(*ab)))
        for i in range(len(s)):
            if i not in zm:
                assert other[i] == base[i]
        assert any(other[i] != base[i] for i in zm)


def test_energy_finite_at_ground_truth():
    for preset in ("table2_bayes", "table2_mle"):
        m = default_model(preset)
        for seed in range(3):
            sim = simulate(SimConfig(m, 5, 30, seed))
            assert math.isfinite(energy(theta_from_model(m, ParameterSchema(3, 2, True)), sim.data, PriorConfig(), m))


def test_free_init_prior_is_flat():
    m = default_model()
    fm = HierarchicalModel(m.internal_tpm, m.production_tpms, m.emissions,
                           internal_init=[0.4, 0.6], production_inits=([0.2, 0.3, 0.5], [0.3, 0.3, 0.4]),
                           init_mode="free")
    s = ParameterSchema(3, 2, False, "free")
    terms = prior_terms(theta_from_model(fm, s).values, s, PriorConfig())
    for i in s.indices("prod_init") + s.indices("internal_init"):
        assert terms[i] == 0.0
