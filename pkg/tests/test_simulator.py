import numpy as np
import pytest

from hhmmpt.likelihood import hierarchical_loglik
from hhmmpt.model import (
    COVARIATES,
    DomainError,
    EmissionParams,
    GammaParams,
    HierarchicalModel,
    StateEmission,
    TransitionMatrix,
    default_model,
)
from hhmmpt.simulator import SimConfig, simulate


def with_emissions(model, fn):
    return HierarchicalModel(model.internal_tpm, model.production_tpms,
                             EmissionParams(tuple(fn(e) for e in model.emissions.states)))


@pytest.fixture(scope="module")
def big_sim():
    return simulate(SimConfig(default_model(), 1000, 60, 123))


def test_shapes_and_ranges():
    out = simulate(SimConfig(default_model(), 7, [3, 1, 5, 2, 2, 4, 6], 0))
    assert out.data.n_dives == 23 and len(out.data) == 7
    assert out.observations.shape == (23, 3)
    assert out.internal_states.shape == (7,) and set(out.internal_states) <= {0, 1}
    assert set(out.production_states) <= {0, 1, 2}
    assert [len(p) for p in out.production_states_by_frame()] == [3, 1, 5, 2, 2, 4, 6]
    assert np.all(out.observations[:, :2] > 0) and np.all(out.observations[:, 2] >= 0)


def test_deterministic_under_seed():
    a = simulate(SimConfig(default_model(), 5, 20, 9))
    b = simulate(SimConfig(default_model(), 5, 20, 9))
    c = simulate(SimConfig(default_model(), 5, 20, 10))
    np.testing.assert_array_equal(a.observations, b.observations)
    np.testing.assert_array_equal(a.production_states, b.production_states)
    assert not np.array_equal(a.observations, c.observations)


def test_full_zero_mass_gives_zero_wiggliness():
    m = with_emissions(default_model(), lambda e: StateEmission(e.duration, e.max_depth, e.wiggliness, 1.0))
    out = simulate(SimConfig(m, 10, 30, 1))
    assert np.all(out.observations[:, 2] == 0.0)


def test_no_zero_mass_gives_positive_wiggliness():
    m = with_emissions(default_model(), lambda e: StateEmission(e.duration, e.max_depth, e.wiggliness, 0.0))
    assert np.all(simulate(SimConfig(m, 10, 30, 1)).observations[:, 2] > 0.0)


@pytest.mark.parametrize("M, T", [(0, 5), (2, [3]), (2, [3, 0])])
def test_config_validation(M, T):
    with pytest.raises(DomainError):
        SimConfig(default_model(), M, T, 0)


def test_state_means_within_three_se(big_sim):
    m = default_model()
    obs, prod = big_sim.observations, big_sim.production_states
    for j, state in enumerate(m.emissions.states):
        mask = prod == j
        assert mask.sum() > 1000
        for c, cov in enumerate(COVARIATES):
            x = obs[mask, c]
            g = state.gamma(cov)
            if cov == "wiggliness":
                x = x[x > 0]
            se = g.sd / np.sqrt(x.size)
            assert abs(x.mean() - g.mean) < 3 * se, (j, cov)
        zero_rate = (obs[mask, 2] == 0).mean()
        p = state.zero_mass
        assert abs(zero_rate - p) <= 3 * np.sqrt(p * (1 - p) / mask.sum()) + 1e-12


def test_uniform_two_state_occupancy():
    g = GammaParams(1.0, 1.0)
    m = HierarchicalModel(TransitionMatrix([[1.0]]), (TransitionMatrix(np.full((2, 2), 0.5)),),
                          EmissionParams((StateEmission(g, g, g, 0.0),) * 2))
    out = simulate(SimConfig(m, 1000, 100, 5))
    n = out.production_states.size
    occ = (out.production_states == 0).mean()
    assert abs(occ - 0.5) < 3 * np.sqrt(0.25 / n)


def test_transition_frequencies_match_tpms(big_sim):
    m = default_model()
    counts = np.zeros((2, 3, 3))
    for h, path in zip(big_sim.internal_states, big_sim.production_states_by_frame()):
        np.add.at(counts[h], (path[:-1], path[1:]), 1)
    for k in range(2):
        gamma = m.production_tpms[k].entries
        for i in range(3):
            n = counts[k, i].sum()
            freq = counts[k, i] / n
            se = np.sqrt(gamma[i] * (1 - gamma[i]) / n)
            assert np.all(np.abs(freq - gamma[i]) < 3 * se + 1e-12), (k, i)
    switches = np.diff(big_sim.internal_states)
    stay = (switches == 0).mean()
    assert abs(stay - 0.95) < 3 * np.sqrt(0.95 * 0.05 / switches.size)


def test_loglik_prefers_generating_parameters():
    m = default_model()
    out = simulate(SimConfig(m, 100, 60, 8))

    def inflate(e):
        return StateEmission(*(GammaParams(1.5 * e.gamma(c).mean, e.gamma(c).sd) for c in COVARIATES), e.zero_mass)

    assert hierarchical_loglik(out.data, m) > hierarchical_loglik(out.data, with_emissions(m, inflate))
