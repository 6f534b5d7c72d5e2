"""Proximal policy optimization over a multi-discrete action space, in numpy.

Actor and critic are separate tanh MLPs.  The actor's output row is split into
one categorical head per design parameter; the joint log-probability and
entropy are sums over heads.  Gradients are written out by hand (no autodiff)
and checked against finite differences in the tests.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .env import OBS_DIM, ChipletEnv
from .runs import OptimizerRun

FORMAT = "chiplet-gym-mlp"
FORMAT_VERSION = 1


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class PPOConfig:
    n_steps: int = 2048
    n_epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 3e-4
    clip_range: float = 0.2
    vf_coef: float = 0.5
    ent_coef: float = 0.1
    gamma: float = 0.99
    gae_lambda: float = 0.95
    max_grad_norm: float | None = 0.5
    total_timesteps: int = 250_000
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma <= 1 or not 0 <= self.gae_lambda <= 1 or self.clip_range <= 0:
            raise ValueError(f"invalid PPO config {self}")
        if self.n_steps < 1 or self.batch_size < 1 or self.n_epochs < 0:
            raise ValueError(f"invalid PPO config {self}")


# --- network ------------------------------------------------------------------

class Heads:
    """Partition of the actor output into per-parameter categorical heads."""

    def __init__(self, cardinalities: Sequence[int]):
        self.card = np.asarray(cardinalities, dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(self.card)[:-1]])
        self.size = int(self.card.sum())

    def __len__(self):
        return len(self.card)

    def expand(self, per_head: np.ndarray) -> np.ndarray:
        return np.repeat(per_head, self.card, axis=-1)

    def log_softmax(self, logits: np.ndarray) -> np.ndarray:
        m = np.maximum.reduceat(logits, self.starts, axis=-1)
        z = logits - self.expand(m)
        lse = np.log(np.add.reduceat(np.exp(z), self.starts, axis=-1))
        return z - self.expand(lse)

    def entropy(self, logp: np.ndarray) -> np.ndarray:
        """Per-head entropies, shape (..., n_heads)."""
        return -np.add.reduceat(np.exp(logp) * logp, self.starts, axis=-1)

    def gather(self, logp: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Per-head log-probabilities of ``actions`` (..., n_heads)."""
        return np.take_along_axis(logp, actions + self.starts, axis=-1)


class MlpParams:
    """Weights of the actor and critic; each layer is (W, b) with W of shape (fan_in, fan_out)."""

    def __init__(self, actor: list, critic: list, cardinalities: Sequence[int]):
        self.actor = actor
        self.critic = critic
        self.cardinalities = [int(c) for c in cardinalities]

    @property
    def actor_sizes(self) -> list[int]:
        return [self.actor[0][0].shape[0]] + [W.shape[1] for W, _ in self.actor]

    @property
    def critic_sizes(self) -> list[int]:
        return [self.critic[0][0].shape[0]] + [W.shape[1] for W, _ in self.critic]

    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.actor + self.critic for a in layer]

    def flat(self) -> np.ndarray:
        """One contiguous vector holding every weight; layers are rebound as views into it."""
        if getattr(self, "_flat", None) is None:
            arrs = self.arrays()
            flat = np.concatenate([a.ravel() for a in arrs])
            views, k = [], 0
            for a in arrs:
                views.append(flat[k:k + a.size].reshape(a.shape))
                k += a.size
            it = iter(views)
            self.actor = [(next(it), next(it)) for _ in self.actor]
            self.critic = [(next(it), next(it)) for _ in self.critic]
            self._flat = flat
        return self._flat

    def copy(self) -> "MlpParams":
        return MlpParams([(W.copy(), b.copy()) for W, b in self.actor],
                         [(W.copy(), b.copy()) for W, b in self.critic], self.cardinalities)

    def to_dict(self) -> dict:
        def layers(ls):
            return [{"W": W.ravel().tolist(), "b": b.tolist()} for W, b in ls]
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "actor_sizes": self.actor_sizes,
            "critic_sizes": self.critic_sizes,
            "cardinalities": self.cardinalities,
            "actor": layers(self.actor),
            "critic": layers(self.critic),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a chiplet-gym MLP parameter blob")

        def layers(ls, sizes):
            out = []
            for (fi, fo), l in zip(zip(sizes[:-1], sizes[1:]), ls):
                out.append((np.asarray(l["W"], dtype=float).reshape(fi, fo), np.asarray(l["b"], dtype=float)))
            return out
        return cls(layers(d["actor"], d["actor_sizes"]), layers(d["critic"], d["critic_sizes"]), d["cardinalities"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "MlpParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal(shape if shape[0] >= shape[1] else shape[::-1])
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q


def init_params(cardinalities: Sequence[int], rng: np.random.Generator, hidden=(64, 64),
                obs_dim: int = OBS_DIM) -> MlpParams:
    def mlp(sizes, out_gain):
        layers = []
        for k, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if k == len(sizes) - 2 else math.sqrt(2)
            layers.append((orthogonal((fi, fo), gain, rng), np.zeros(fo)))
        return layers
    n_out = int(sum(cardinalities))
    return MlpParams(mlp([obs_dim, *hidden, n_out], 0.01), mlp([obs_dim, *hidden, 1], 1.0), cardinalities)


def _mlp_forward(layers, x):
    acts = [x]
    h = x
    for W, b in layers[:-1]:
        h = np.tanh(h @ W + b)
        acts.append(h)
    W, b = layers[-1]
    return h @ W + b, acts


def _mlp_backward(layers, acts, dout):
    grads = [None] * len(layers)
    g = dout
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        a = acts[k]
        grads[k] = (a.T @ g, g.sum(axis=0))
        if k:
            g = (g @ W.T) * (1.0 - a * a)
    return grads


def policy_forward(params: MlpParams, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Logits (..., sum of cardinalities) and state values (...)."""
    logits, _ = _mlp_forward(params.actor, obs)
    value, _ = _mlp_forward(params.critic, obs)
    return logits, value[..., 0]


def sample_action(logits: np.ndarray, heads: Heads, rng: np.random.Generator):
    """Draw one index per head; returns (action, log_prob, entropy) for a single observation."""
    logp = heads.log_softmax(logits)
    p = np.exp(logp)
    cs = np.cumsum(p)
    before = np.concatenate([[0.0], cs[heads.starts[1:] - 1]])
    seg_cum = cs - heads.expand(before)
    u = rng.random(len(heads)) * (seg_cum[heads.starts + heads.card - 1])
    action = np.add.reduceat((seg_cum < heads.expand(u)).astype(np.int64), heads.starts)
    action = np.minimum(action, heads.card - 1)
    return action, float(heads.gather(logp, action).sum()), float(heads.entropy(logp).sum())


def greedy_action(logits: np.ndarray, heads: Heads) -> np.ndarray:
    return np.array([int(np.argmax(logits[s:s + c])) for s, c in zip(heads.starts, heads.card)])


# --- advantage estimation -----------------------------------------------------

def gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0) -> np.ndarray:
    """Generalized advantage estimates; ``dones[t]`` marks that the episode ended after step t."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    adv = np.zeros_like(rewards)
    last = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_v = last_value if t == len(rewards) - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_v * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv


def normalize(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8) if len(adv) > 1 else adv - adv.mean()


# --- loss and gradients -------------------------------------------------------

def clipped_surrogate(ratio, adv, clip_range: float):
    return np.minimum(ratio * adv, np.clip(ratio, 1 - clip_range, 1 + clip_range) * adv)


def loss_and_grads(params: MlpParams, heads: Heads, obs, actions, old_logp, adv, returns,
                   clip_range: float, vf_coef: float, ent_coef: float):
    """Total PPO loss on one minibatch and its gradient for every parameter array."""
    B = len(obs)
    logits, a_acts = _mlp_forward(params.actor, obs)
    v_out, c_acts = _mlp_forward(params.critic, obs)
    values = v_out[:, 0]

    logp_all = heads.log_softmax(logits)
    logp = heads.gather(logp_all, actions).sum(axis=1)
    p = np.exp(logp_all)
    head_ent = heads.entropy(logp_all)
    ent = head_ent.sum(axis=1)

    ratio = np.exp(logp - old_logp)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1 - clip_range, 1 + clip_range) * adv
    pg_loss = -np.minimum(surr1, surr2).mean()
    vf_loss = ((returns - values) ** 2).mean()
    ent_loss = -ent.mean()
    loss = pg_loss + vf_coef * vf_loss + ent_coef * ent_loss
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss={loss} pg={pg_loss} vf={vf_loss} ent={ent_loss}")

    g_logp = -np.where(surr1 <= surr2, adv * ratio, 0.0) / B
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, actions + heads.starts, 1.0, axis=1)
    d_logits = g_logp[:, None] * (onehot - p)
    d_logits += (ent_coef / B) * p * (logp_all + heads.expand(head_ent))
    d_values = vf_coef * 2.0 * (values - returns) / B

    ga = _mlp_backward(params.actor, a_acts, d_logits)
    gc = _mlp_backward(params.critic, c_acts, d_values[:, None])
    grads = [g for layer in ga + gc for g in layer]
    with np.errstate(over="ignore"):
        clip_frac = float((np.abs(ratio - 1) > clip_range).mean())
    stats = {"loss": float(loss), "pg_loss": float(pg_loss), "vf_loss": float(vf_loss),
             "entropy": float(ent.mean()), "clip_fraction": clip_frac}
    return loss, grads, stats


class Adam:
    def __init__(self, arrays: list[np.ndarray], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float | None) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for g in grads:
            g *= scale
    return norm


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self):
        return len(self.rewards)

    def finish(self, gamma: float, lam: float, last_value: float) -> None:
        self.advantages = gae(self.rewards, self.values, self.dones, gamma, lam, last_value)
        self.returns = self.advantages + self.values


def ppo_update(params: MlpParams, opt: Adam, buf: RolloutBuffer, cfg: PPOConfig,
               rng: np.random.Generator) -> dict:
    """``n_epochs`` passes of shuffled minibatches over one rollout; updates ``params`` in place."""
    heads = Heads(params.cardinalities)
    adv = normalize(buf.advantages)
    flat = params.flat()
    n = len(buf)
    stats = []
    for _ in range(cfg.n_epochs):
        perm = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = perm[s:s + cfg.batch_size]
            _, grads, st = loss_and_grads(params, heads, buf.obs[idx], buf.actions[idx], buf.log_probs[idx],
                                          adv[idx], buf.returns[idx], cfg.clip_range, cfg.vf_coef, cfg.ent_coef)
            g = np.concatenate([x.ravel() for x in grads])
            st["grad_norm"] = clip_grad_norm([g], cfg.max_grad_norm)
            opt.step([flat], [g])
            stats.append(st)
    if not stats:
        return {}
    return {k: float(np.mean([s[k] for s in stats])) for k in stats[0]}


# --- training loop ------------------------------------------------------------

def train(env: ChipletEnv, cfg: PPOConfig = PPOConfig(), params: MlpParams | None = None) -> OptimizerRun:
    ss = np.random.SeedSequence(cfg.seed)
    init_rng, act_rng, shuf_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    card = env.cardinalities
    heads = Heads(card)
    params = params.copy() if params is not None else init_params(card, init_rng, cfg.hidden)
    opt = Adam([params.flat()], cfg.learning_rate)

    best_obj, best_action = -math.inf, None
    ep_returns = deque(maxlen=100)
    ep_ret = 0.0
    rows = {"timestep": [], "mean_episodic_reward": [], "best_obj": []}
    update_stats = []
    obs = env.reset(cfg.seed)
    t = 0
    while t < cfg.total_timesteps:
        n = min(cfg.n_steps, cfg.total_timesteps - t)
        b_obs = np.empty((n, OBS_DIM))
        b_act = np.empty((n, len(card)), dtype=np.int64)
        b_logp, b_val, b_rew = np.empty(n), np.empty(n), np.empty(n)
        b_done = np.zeros(n, dtype=bool)
        for k in range(n):
            logits, value = policy_forward(params, obs)
            action, logp, _ = sample_action(logits, heads, act_rng)
            next_obs, r, done = env.step(action)
            b_obs[k], b_act[k], b_logp[k], b_val[k], b_rew[k], b_done[k] = obs, action, logp, value, r, done
            if r > best_obj:
                best_obj, best_action = r, [int(a) for a in action]
            ep_ret += r
            if done:
                ep_returns.append(ep_ret)
                ep_ret = 0.0
                obs = env.reset()
            else:
                obs = next_obs
        t += n
        if n == cfg.n_steps:
            last_value = 0.0 if b_done[-1] else float(policy_forward(params, obs)[1])
            buf = RolloutBuffer(b_obs, b_act, b_logp, b_val, b_rew, b_done)
            buf.finish(cfg.gamma, cfg.gae_lambda, last_value)
            update_stats.append(ppo_update(params, opt, buf, cfg, shuf_rng))
        rows["timestep"].append(t)
        rows["mean_episodic_reward"].append(float(np.mean(ep_returns)) if ep_returns else float("nan"))
        rows["best_obj"].append(best_obj)

    trace = {k: np.asarray(v) for k, v in rows.items()}
    run = OptimizerRun("rl", cfg.seed, env.space.decode(best_action), best_action, best_obj, trace,
                       {"updates": len(update_stats), "timesteps": t})
    run.policy = params
    run.update_stats = update_stats
    return run


def infer(params: MlpParams, env: ChipletEnv, n_samples: int = 256, seed: int = 0) -> OptimizerRun:
    """Use a trained policy without updates: greedy action plus ``n_samples`` sampled proposals."""
    if list(params.cardinalities) != list(env.cardinalities):
        raise ValueError("policy heads do not match the environment's design space")
    rng = np.random.default_rng(seed)
    heads = Heads(params.cardinalities)
    obs = env.reset(seed)
    logits, _ = policy_forward(params, obs)
    action = greedy_action(logits, heads)
    best_action, best_obj = [int(a) for a in action], env.objective(action)
    steps = 0
    while steps < n_samples:
        logits, _ = policy_forward(params, obs)
        action, _, _ = sample_action(logits, heads, rng)
        obs, r, done = env.step(action)
        steps += 1
        if r > best_obj:
            best_obj, best_action = r, [int(a) for a in action]
        if done:
            obs = env.reset()
    return OptimizerRun("rl-inference", seed, env.space.decode(best_action), best_action, best_obj, {},
                        {"samples": n_samples})
