import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chiplet_gym.design_space import CASE_I_POINT, DesignSpace
from chiplet_gym.env import ChipletEnv, EnvConfig
from chiplet_gym.exhaustive import restricted_space
from chiplet_gym.ppo import (
    Adam, Heads, MlpParams, NonFiniteLoss, PPOConfig, RolloutBuffer, clipped_surrogate, gae, greedy_action,
    infer, init_params, loss_and_grads, normalize, policy_forward, ppo_update, sample_action, train,
)

CARD = [3, 4, 2, 5]


def small_net(seed=0, hidden=(8, 8), card=CARD):
    return init_params(card, np.random.default_rng(seed), hidden)


def zero_net(card=CARD):
    p = small_net(card=card)
    for W, b in p.actor + p.critic:
        W[...] = 0
        b[...] = 0
    return p


# --- forward / sampling ---

def test_zero_weights_uniform():
    p = zero_net()
    logits, value = policy_forward(p, np.random.default_rng(0).random(10))
    assert np.all(logits == 0) and value == 0
    h = Heads(CARD)
    ent = h.entropy(h.log_softmax(logits))
    np.testing.assert_allclose(ent, np.log(CARD))


def test_shapes_and_tanh_bound():
    p = small_net(hidden=(64, 64), card=[3, 128, 63])
    assert p.actor_sizes == [10, 64, 64, 194] and p.critic_sizes == [10, 64, 64, 1]
    obs = np.random.default_rng(0).normal(size=(7, 10)) * 1e3
    logits, v = policy_forward(p, obs)
    assert logits.shape == (7, 194) and v.shape == (7,)
    h = np.tanh(obs @ p.actor[0][0] + p.actor[0][1])
    assert np.all(np.abs(h) <= 1)


def test_dominant_logit_sampled():
    h = Heads([5])
    logits = np.zeros(5)
    logits[3] = 1e3
    rng = np.random.default_rng(0)
    hits = sum(sample_action(logits, h, rng)[0][0] == 3 for _ in range(10_000))
    assert hits / 10_000 > 0.999


def test_sampling_frequencies():
    h = Heads([3])
    logits = np.log(np.array([0.2, 0.3, 0.5]))
    rng = np.random.default_rng(1)
    counts = np.bincount([sample_action(logits, h, rng)[0][0] for _ in range(20_000)], minlength=3)
    np.testing.assert_allclose(counts / 20_000, [0.2, 0.3, 0.5], atol=0.015)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_log_prob_recomputation(seed):
    rng = np.random.default_rng(seed)
    h = Heads(CARD)
    logits = rng.normal(size=h.size) * 3
    a, lp, ent = sample_action(logits, h, rng)
    assert np.all((a >= 0) & (a < np.array(CARD)))
    manual = 0.0
    manual_ent = 0.0
    for s, c, ai in zip(h.starts, h.card, a):
        z = logits[s:s + c]
        p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
        manual += math.log(p[ai])
        manual_ent -= float((p * np.log(p)).sum())
    assert lp == pytest.approx(manual, rel=1e-9, abs=1e-12)
    assert ent == pytest.approx(manual_ent, rel=1e-9, abs=1e-12)


def test_greedy():
    logits = np.array([0, 2, 1, 5, 0, 0, 0, 1, 0, 0, 0, 0, 3, 0], dtype=float)
    assert list(greedy_action(logits, Heads(CARD))) == [1, 0, 0, 3]


# --- GAE ---

def gae_oracle(r, v, d, gamma, lam, last_value=0.0):
    """Closed-form sum of discounted TD residuals up to the episode end."""
    n = len(r)
    nxt = [v[t + 1] if t + 1 < n else last_value for t in range(n)]
    delta = [r[t] + gamma * nxt[t] * (not d[t]) - v[t] for t in range(n)]
    out = []
    for t in range(n):
        acc, w = 0.0, 1.0
        for k in range(t, n):
            acc += w * delta[k]
            if d[k]:
                break
            w *= gamma * lam
        out.append(acc)
    return np.array(out)


def test_gae_two_step_hand_value():
    adv = gae([1.0, 2.0], [0.5, 0.5], [False, True], 0.99, 0.95)
    d1 = 2.0 - 0.5
    d0 = 1.0 + 0.99 * 0.5 - 0.5
    assert adv[1] == pytest.approx(d1, abs=1e-12)
    assert adv[0] == pytest.approx(d0 + 0.99 * 0.95 * d1, abs=1e-12)


def test_gae_td_limit():
    r, v = np.array([1.0, 2, 3]), np.array([0.5, 0.1, 0.2])
    adv = gae(r, v, [False, False, False], 0.9, 0.0, last_value=0.7)
    np.testing.assert_allclose(adv, r + 0.9 * np.array([0.1, 0.2, 0.7]) - v)


def test_gae_monte_carlo_limit():
    r = np.array([1.0, 2, 3, 4, 5])
    d = [False, True, False, False, True]
    adv = gae(r, np.zeros(5), d, 1.0, 1.0)
    np.testing.assert_allclose(adv, [3, 2, 12, 9, 5])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 1.0), st.floats(0.0, 1.0))
def test_gae_matches_oracle(seed, gamma, lam):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    r, v = rng.normal(size=n), rng.normal(size=n)
    d = rng.random(n) < 0.3
    lv = float(rng.normal())
    np.testing.assert_allclose(gae(r, v, d, gamma, lam, lv), gae_oracle(r, v, d, gamma, lam, lv), rtol=1e-9, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_normalization(seed):
    x = np.random.default_rng(seed).normal(3, 7, size=256)
    y = normalize(x)
    assert abs(y.mean()) < 1e-6 and abs(y.std() - 1) < 1e-6


# --- loss ---

def test_clip_arithmetic():
    assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    for a in (-3.0, 0.0, 2.5):
        assert clipped_surrogate(1.0, a, 0.2) == a
    assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)


def _batch(rng, card, B=6):
    obs = rng.random((B, 10))
    act = np.stack([rng.integers(0, c, B) for c in card], 1)
    return obs, act, rng.normal(size=B) * 0.3 - 2.5, rng.normal(size=B), rng.normal(size=B)


@pytest.mark.parametrize("seed", range(3))
def test_gradients_vs_finite_differences(seed):
    rng = np.random.default_rng(seed)
    card = [3, 4, 2, 5, 6]
    p = init_params(card, rng, hidden=(8, 8))
    h = Heads(card)
    batch = _batch(rng, card)
    args = (0.2, 0.5, 0.1)
    _, grads, _ = loss_and_grads(p, h, *batch, *args)
    arrays = p.arrays()
    assert [g.shape for g in grads] == [a.shape for a in arrays]
    eps = 1e-6
    checked = 0
    for k, (a, g) in enumerate(zip(arrays, grads)):
        for i in rng.choice(a.size, size=min(4, a.size), replace=False):
            old = a.flat[i]
            a.flat[i] = old + eps
            lp = loss_and_grads(p, h, *batch, *args)[0]
            a.flat[i] = old - eps
            lm = loss_and_grads(p, h, *batch, *args)[0]
            a.flat[i] = old
            fd = (lp - lm) / (2 * eps)
            assert abs(fd - g.flat[i]) <= 1e-3 * max(abs(fd), abs(g.flat[i])) + 1e-7, (k, i)
            checked += 1
    assert checked >= 10


def test_non_finite_loss():
    rng = np.random.default_rng(0)
    p = small_net()
    obs, act, old, adv, ret = _batch(rng, CARD)
    adv[0] = np.nan
    with pytest.raises(NonFiniteLoss):
        loss_and_grads(p, Heads(CARD), obs, act, old, adv, ret, 0.2, 0.5, 0.1)


def test_adam_minimizes_quadratic():
    x = np.array([3.0, -2.0])
    opt = Adam([x], lr=0.1)
    for _ in range(500):
        opt.step([x], [2 * x])
    assert np.all(np.abs(x) < 1e-2)


def test_update_changes_params_and_reports_stats():
    rng = np.random.default_rng(0)
    p = small_net()
    n = 128
    obs, act, old, adv, ret = _batch(rng, CARD, n)
    buf = RolloutBuffer(obs, act, old, np.zeros(n), rng.normal(size=n), np.zeros(n, bool), adv, ret)
    before = p.copy()
    st = ppo_update(p, Adam([p.flat()]), buf, PPOConfig(n_epochs=2, batch_size=32), np.random.default_rng(1))
    assert set(st) >= {"loss", "pg_loss", "vf_loss", "entropy", "grad_norm"}
    assert any(not np.array_equal(a, b) for a, b in zip(p.arrays(), before.arrays()))


# --- training ---

class ConstantEnv:
    """Environment stub with a constant reward, used to isolate the entropy bonus."""

    def __init__(self, card):
        self.space = restricted_space({"arch_type": "all", "ic_2p5d_ai": "all", "dr_3d": [20, 21, 22, 23, 24]},
                                      CASE_I_POINT)
        self.cardinalities = self.space.cardinalities()
        self._t = 0

    def reset(self, seed=None):
        self._t = 0
        return np.full(10, 0.5)

    def step(self, action):
        self._t += 1
        return np.full(10, 0.5), 1.0, self._t == 2


def test_entropy_stays_maximal_with_constant_reward():
    env = ConstantEnv(None)
    out = train(env, PPOConfig(total_timesteps=4096, ent_coef=1.0, seed=0))
    h = Heads(env.cardinalities)
    logits, _ = policy_forward(out.policy, np.full(10, 0.5))
    ent = h.entropy(h.log_softmax(logits))
    k = np.array(env.cardinalities)
    mask = k > 1
    assert np.all(ent[mask] >= 0.99 * np.log(k[mask]))


def test_small_budget_has_no_updates():
    env = ChipletEnv(cfg=EnvConfig(case=64))
    out = train(env, PPOConfig(total_timesteps=300, seed=0))
    assert out.info["updates"] == 0
    assert len(out.trace["best_obj"]) == 1
    assert out.best_obj == env.objective(out.best_action)


def test_deterministic_trajectory():
    env = ChipletEnv(cfg=EnvConfig(case=64))
    cfg = PPOConfig(total_timesteps=2 * 256, n_steps=256, seed=3)
    a, b = train(env, cfg), train(ChipletEnv(cfg=EnvConfig(case=64)), cfg)
    for x, y in zip(a.policy.arrays(), b.policy.arrays()):
        np.testing.assert_array_equal(x, y)
    assert a.update_stats == b.update_stats
    np.testing.assert_array_equal(a.trace["best_obj"], b.trace["best_obj"])
    c = train(env, PPOConfig(total_timesteps=2 * 256, n_steps=256, seed=4))
    assert any(not np.array_equal(x, y) for x, y in zip(a.policy.arrays(), c.policy.arrays()))


def test_best_trace_monotone_and_consistent():
    env = ChipletEnv(cfg=EnvConfig(case=64))
    out = train(env, PPOConfig(total_timesteps=4 * 256, n_steps=256, seed=0))
    assert np.all(np.diff(out.trace["best_obj"]) >= 0)
    assert out.trace["timestep"][-1] == 1024
    assert out.best_obj == pytest.approx(env.objective(out.best_action))
    assert "timestep,mean_episodic_reward,best_obj" in out.trace_csv()


def test_params_roundtrip(tmp_path):
    p = small_net(card=[3, 128])
    p.save(tmp_path / "p.json")
    q = MlpParams.load(tmp_path / "p.json")
    assert q.actor_sizes == p.actor_sizes and q.cardinalities == p.cardinalities
    for x, y in zip(p.arrays(), q.arrays()):
        np.testing.assert_array_equal(x, y)
    with pytest.raises(ValueError):
        MlpParams.from_dict({"format": "other"})


def test_flat_views_share_memory():
    p = small_net()
    flat = p.flat()
    flat[:] = 0.25
    assert all(np.all(a == 0.25) for a in p.arrays())


def test_inference_mode():
    env = ChipletEnv(cfg=EnvConfig(case=64))
    out = train(env, PPOConfig(total_timesteps=512, n_steps=256, seed=0))
    r = infer(out.policy, env, n_samples=64, seed=1)
    assert r.best_obj == pytest.approx(env.objective(r.best_action))
    assert r.optimizer == "rl-inference"
    wrong = small_net(card=[3, 4])
    with pytest.raises(ValueError):
        infer(wrong, env)


def test_config_validation():
    with pytest.raises(ValueError):
        PPOConfig(gamma=0)
    with pytest.raises(ValueError):
        PPOConfig(gae_lambda=1.5)
    with pytest.raises(ValueError):
        PPOConfig(clip_range=0)
