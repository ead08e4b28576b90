import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hhmmpt.samplers import (
    Block,
    ChainState,
    ConfigurationError,
    FunctionTarget,
    UpdateSchedule,
    acceptance_probability,
    advance,
    chain_rng,
    mh_step,
    pilot_tune,
    run_sampler,
    simplex_row_step,
)
from hhmmpt.toys import standard_normal_energy


def normal_target():
    return FunctionTarget(standard_normal_energy, ["x"])


# -- acceptance rule -------------------------------------------------------------

def test_acceptance_examples():
    assert acceptance_probability(0.0) == 1.0
    assert acceptance_probability(math.inf) == 0.0
    assert acceptance_probability(4.0, 0.25) == pytest.approx(math.exp(-1), abs=1e-15)
    assert acceptance_probability(-3.0, 0.5) == 1.0
    assert acceptance_probability(math.nan) == 0.0


@given(st.floats(-50, 50))
def test_beta_one_is_classic_rule(de):
    assert acceptance_probability(de, 1.0) == min(1.0, math.exp(-de))


# -- tuning ---------------------------------------------------------------------

def test_pilot_tune_examples():
    scales = np.array([1.0, 1.0, 1.0, 2.0])
    out = pilot_tune(scales, accepts=[33, 100, 0, 0], proposals=[100, 100, 100, 0])
    np.testing.assert_array_equal(out, [1.0, 1.1, 0.9, 2.0])
    assert scales[1] == 1.0  # input not mutated


def test_band_edges_leave_scale_unchanged():
    out = pilot_tune([1.0, 1.0], accepts=[25, 40], proposals=[100, 100])
    np.testing.assert_array_equal(out, [1.0, 1.0])


def test_tuning_stops_at_burn_in():
    tg = normal_target()
    tr = run_sampler(tg, tg.schedule(), 2000, 500, 3, [0.0], [50.0])
    tuned = tr.scales[0]
    assert tuned < 50.0
    tr2 = run_sampler(tg, tg.schedule(), 5000, 500, 3, [0.0], [50.0])
    assert tr2.scales[0] == tuned
    assert tr2.proposals[0] == 4500  # post-burn-in tallies only


def test_toy_acceptance_settles_in_band():
    tg = normal_target()
    for start in (0.05, 20.0):
        tr = run_sampler(tg, tg.schedule(), 20000, 5000, 11, [0.0], [start])
        assert 0.25 <= tr.acceptance()["x"] <= 0.40


# -- random-walk moves ----------------------------------------------------------

def test_standard_normal_smoke():
    tg = normal_target()
    tr = run_sampler(tg, tg.schedule(), 100_000, 1000, 2024, [0.0], [2.4])
    x = tr.post_burn_in()["x"]
    assert abs(x.mean()) < 0.05
    assert abs(x.var() - 1.0) < 0.1


def test_run_twice_bit_identical():
    tg = FunctionTarget(standard_normal_energy, ["a", "b"])
    for mode in ("single", "block"):
        a = run_sampler(tg, tg.schedule(mode), 500, 100, 9, [1.0, -1.0], [0.5, 0.5])
        b = run_sampler(tg, tg.schedule(mode), 500, 100, 9, [1.0, -1.0], [0.5, 0.5])
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.energies, b.energies)


def test_different_seeds_differ():
    tg = normal_target()
    a = run_sampler(tg, tg.schedule(), 200, 0, 1, [0.0], [1.0])
    b = run_sampler(tg, tg.schedule(), 200, 0, 2, [0.0], [1.0])
    assert not np.array_equal(a.values, b.values)


def test_block_move_touches_only_block():
    tg = FunctionTarget(lambda v: 0.0, ["a", "b", "c"])
    chain = ChainState(tg.evaluator([1.0, 2.0, 3.0]), 1.0, [1.0, 1.0, 1.0], chain_rng(0, 0))
    assert mh_step(chain, [0, 2])
    assert chain.theta[1] == 2.0 and chain.theta[0] != 1.0 and chain.theta[2] != 3.0
    np.testing.assert_array_equal(chain.proposals, [1, 0, 1])


def test_infinite_energy_proposal_rejected():
    tg = FunctionTarget(lambda v: 0.0 if v[0] > 0 else math.inf, ["x"])
    chain = ChainState(tg.evaluator([1e-9]), 1.0, [10.0], chain_rng(0, 0))
    history = []
    advance(chain, tg.schedule(), 200, 0, lambda c: history.append(c.theta[0]), tune_every=0)
    assert min(history) > 0
    assert chain.proposals[0] == 200 and chain.accepts[0] < 200


def test_tallies_consistent():
    tg = normal_target()
    tr = run_sampler(tg, tg.schedule(), 3000, 1000, 5, [0.0], [1.0])
    assert 0 < tr.accepts[0] <= tr.proposals[0] == 2000


# -- simplex rows ---------------------------------------------------------------

def _row_target(n):
    def e(v):
        p = np.append(v, 1 - v.sum())
        return math.inf if np.any(p < 0) else 0.0
    return FunctionTarget(e, [f"p{i}" for i in range(n - 1)])


def test_simplex_exit_rejected_state_unchanged():
    tg = _row_target(3)
    chain = ChainState(tg.evaluator([0.45, 0.45]), 1.0, [5.0, 5.0], chain_rng(1, 0))
    rejected = 0
    for _ in range(50):
        before = chain.theta.copy()
        if not simplex_row_step(chain, [0, 1]):
            rejected += 1
            np.testing.assert_array_equal(chain.theta, before)
        assert chain.theta.min() > 0 and chain.theta.sum() < 1
    assert rejected > 25
    np.testing.assert_array_equal(chain.proposals, [50, 50])


def test_simplex_row_two_states():
    tg = _row_target(2)
    chain = ChainState(tg.evaluator([0.3]), 1.0, [0.1], chain_rng(2, 0))
    for _ in range(200):
        simplex_row_step(chain, [0])
        assert 0 < chain.theta[0] < 1


def test_simplex_uniform_on_flat_energy():
    # flat energy on the 2-simplex: first coordinate ~ Beta(1, 2), mean 1/3
    tg = _row_target(3)
    chain = ChainState(tg.evaluator([0.3, 0.3]), 1.0, [0.2, 0.2], chain_rng(3, 0))
    xs = []
    advance(chain, UpdateSchedule("single", (Block("row", (0, 1), "simplex"),)), 40000, 0,
            lambda c: xs.append(c.theta[0]), tune_every=0)
    assert np.mean(xs) == pytest.approx(1 / 3, abs=0.02)


# -- schedules and configuration ------------------------------------------------

def test_schedule_must_cover_every_parameter():
    tg = FunctionTarget(standard_normal_energy, ["a", "b"])
    bad = UpdateSchedule("single", (Block("a", (0,)),))
    with pytest.raises(ConfigurationError):
        run_sampler(tg, bad, 10, 0, 0, [0.0, 0.0], [1.0, 1.0])
    dup = UpdateSchedule("single", (Block("a", (0,)), Block("ab", (0, 1))))
    with pytest.raises(ConfigurationError):
        run_sampler(tg, dup, 10, 0, 0, [0.0, 0.0], [1.0, 1.0])


@pytest.mark.parametrize("iters, burn", [(10, 10), (10, -1), (0, 0)])
def test_iters_must_exceed_burn_in(iters, burn):
    tg = normal_target()
    with pytest.raises(ConfigurationError):
        run_sampler(tg, tg.schedule(), iters, burn, 0, [0.0], [1.0])


@pytest.mark.parametrize("beta, scales", [(0.0, [1.0]), (1.5, [1.0]), (1.0, [0.0])])
def test_chain_state_validation(beta, scales):
    with pytest.raises(ConfigurationError):
        ChainState(normal_target().evaluator([0.0]), beta, scales, chain_rng(0, 0))


def test_chain_streams_independent():
    a = chain_rng(7, 0).random(5)
    b = chain_rng(7, 1).random(5)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, chain_rng(7, 0).random(5))
