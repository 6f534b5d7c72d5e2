import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chiplet_gym.design_space import CASE_I_POINT, TABLE_I_SPACE
from chiplet_gym.env import OBS_DIM, ChipletEnv, EnvConfig, EpisodeExhausted
from chiplet_gym.ppac import evaluate

A_CASE_I = TABLE_I_SPACE.encode(CASE_I_POINT)


def test_reset_deterministic():
    env = ChipletEnv()
    o1, o2 = env.reset(7), env.reset(7)
    assert o1.shape == (OBS_DIM,) == (10,)
    np.testing.assert_array_equal(o1, o2)
    assert np.all((o1 >= 0) & (o1 <= 1))


def test_step_semantics():
    env = ChipletEnv()
    env.reset(0)
    obs, r, done = env.step(A_CASE_I)
    assert r == evaluate(CASE_I_POINT, env.cal).reward
    assert not done
    infeasible = [0] * 14  # 1 chiplet, one HBM: area far above the cap
    _, r2, done = env.step(infeasible)
    assert r2 == -1000 and done
    with pytest.raises(EpisodeExhausted):
        env.step(A_CASE_I)


def test_step_before_reset():
    with pytest.raises(EpisodeExhausted):
        ChipletEnv().step(A_CASE_I)


def test_observation_reflects_result():
    env = ChipletEnv()
    env.reset(0)
    obs, _, _ = env.step(A_CASE_I)
    res = env.last_result
    assert np.all(np.isfinite(obs)) and np.all((obs >= 0) & (obs <= 1))
    np.testing.assert_allclose(obs, env.observation_of(CASE_I_POINT, res))
    assert obs[2] == pytest.approx(res.area_per_chiplet / env.cal.package.pkg_area)
    assert obs[8] == pytest.approx(60 / 128)
    assert obs[9] == pytest.approx(1.0)


def test_episode_return_is_sum():
    env = ChipletEnv(cfg=EnvConfig(episode_len=2))
    env.reset(0)
    a = TABLE_I_SPACE.sample(np.random.default_rng(1))
    _, r1, _ = env.step(A_CASE_I)
    _, r2, done = env.step(a)
    assert done
    assert r1 + r2 == pytest.approx(env.objective(A_CASE_I) + env.objective(a))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_stateless_rewards(seed):
    env = ChipletEnv(cfg=EnvConfig(episode_len=3))
    a = TABLE_I_SPACE.sample(np.random.default_rng(seed))
    rs = []
    for _ in range(2):
        env.reset(seed)
        for _ in range(3):
            obs, r, _ = env.step(a)
            assert np.all((obs >= 0) & (obs <= 1))
            rs.append(r)
    assert len(set(rs)) == 1


def test_case_cap_applies():
    env = ChipletEnv(cfg=EnvConfig(case=64))
    assert env.cardinalities[1] == 64
    assert env.cal.package.n_chiplets_max == 64


def test_trace_sink():
    buf = io.StringIO()
    env = ChipletEnv(trace=buf)
    env.reset(0)
    env.step(A_CASE_I)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0][:3] == ["step", "reward", "feasible"] and len(rows[0]) == 17
    assert rows[1][0] == "1" and rows[1][2] == "1"
    assert [int(x) for x in rows[1][3:]] == A_CASE_I


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(episode_len=0)
    with pytest.raises(ValueError):
        EnvConfig(case=100)
