import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chiplet_gym.design_space import TABLE_I_SPACE, CASE_I_POINT
from chiplet_gym.env import ChipletEnv, EnvConfig
from chiplet_gym.exhaustive import optimum, restricted_space
from chiplet_gym.sa import SAConfig, accept, neighbor, run


def test_accept_rule():
    assert accept(5.0, 4.0, 10, 0.0, 0.99)
    # worse candidate: only the threshold temperature / iteration matters
    assert accept(1.0, 4.0, 10, 200.0, 0.99)
    assert not accept(1.0, 4.0, 1000, 200.0, 0.5)
    assert accept(1.0, 4.0, 1000, 200.0, 0.1)
    assert not accept(4.0, 4.0, 10**6, 1.0, 0.5)
    with pytest.raises(ValueError):
        accept(1.0, 2.0, 0, 1.0, 0.5)


def test_no_metropolis():
    # a tiny deterioration is rejected exactly as often as a huge one
    for r in np.linspace(0, 0.999, 50):
        assert accept(3.999, 4.0, 400, 200.0, r) == accept(-1e9, 4.0, 400, 200.0, r)


def test_neighbor_clips():
    up = np.array([2, 9])
    assert list(neighbor(np.array([0, 9]), 10, np.array([-1.0, 1.0]), up)) == [0, 9]
    assert list(neighbor(np.array([1, 5]), 10, np.array([0.04, -0.16]), up)) == [1, 3]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_neighbor_in_range(seed):
    rng = np.random.default_rng(seed)
    card = np.array(TABLE_I_SPACE.cardinalities())
    x = rng.integers(0, card)
    y = neighbor(x, 10, rng.uniform(-1, 1, len(card)), card - 1)
    assert np.all((y >= 0) & (y < card))
    assert np.all(np.abs(y - x) <= 10)


def _quad(target):
    def f(x):
        return -float(np.sum((np.asarray(x) - target) ** 2))
    return f


def test_run_trace_and_best_monotone():
    space = TABLE_I_SPACE
    out = run(_quad(np.array(space.cardinalities()) // 2), space, SAConfig(t_max=3000, seed=3))
    best = out.trace["best_obj"]
    assert len(best) == 3001
    assert np.all(np.diff(best) >= 0)
    assert out.best_obj == best[-1]
    assert out.best_obj == _quad(np.array(space.cardinalities()) // 2)(out.best_action)


def test_first_iterations_all_accepted():
    # the threshold exceeds 1 for iterations below the temperature
    space = TABLE_I_SPACE
    f = _quad(np.zeros(14))
    out = run(f, space, SAConfig(t_max=199, temperature=200, seed=0))
    assert out.info["accepted"] == 199


def test_deterministic_and_prefix_consistent():
    env = ChipletEnv(cfg=EnvConfig(case=64))
    a = run(env.objective, env.space, SAConfig(t_max=3000, seed=5))
    b = run(env.objective, env.space, SAConfig(t_max=3000, seed=5))
    c = run(env.objective, env.space, SAConfig(t_max=5000, seed=5))
    np.testing.assert_array_equal(a.trace["current_obj"], b.trace["current_obj"])
    np.testing.assert_array_equal(a.trace["current_obj"], c.trace["current_obj"][:3001])


def test_finds_enumerated_optimum_on_small_space():
    space = restricted_space({"dr_2p5d_hbm": "all", "trace_2p5d_hbm": "all"}, CASE_I_POINT)
    env = ChipletEnv(cfg=EnvConfig(case=64), space=space)
    best, _ = optimum(space, env.cal)
    out = run(env.objective, space, SAConfig(t_max=5000, seed=1))
    assert out.best_obj == pytest.approx(best)


def test_config_validation():
    with pytest.raises(ValueError):
        SAConfig(t_max=-1)
