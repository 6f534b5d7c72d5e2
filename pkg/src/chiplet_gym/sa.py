"""Simulated annealing with a temperature/iteration acceptance threshold.

Worse candidates are accepted when a uniform draw falls below
``temperature / iteration``; there is no Metropolis exponential.  For the
first ``temperature`` iterations the threshold exceeds 1, so every candidate
is accepted, and the search turns greedy as the threshold decays.

Random draws come from one ``numpy.random.Generator`` in a fixed order: the
initial point (one integer per parameter), then blocks of ``BLOCK``
iterations, each block drawing the perturbations (``BLOCK x n_params``
uniforms in [-1, 1)) followed by the acceptance uniforms (``BLOCK`` in
[0, 1)).  The block size is constant so a shorter run replays a prefix of a
longer one with the same seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .design_space import DesignSpace
from .runs import OptimizerRun

BLOCK = 1024


@dataclass(frozen=True)
class SAConfig:
    t_max: int = 500_000
    temperature: float = 200.0
    step_size: float = 10
    seed: int = 0

    def __post_init__(self):
        if self.t_max < 0 or self.temperature < 0 or self.step_size < 0:
            raise ValueError(f"invalid SA config {self}")


def neighbor(x: np.ndarray, step_size: float, u: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """``x + round(u * step_size)`` clipped to the index range; ``u`` is uniform(-1, 1) per coordinate."""
    return np.clip(x + np.rint(u * step_size).astype(np.int64), 0, upper)


def random_neighbor(x, step_size, rng: np.random.Generator, cardinalities: Sequence[int]) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    u = rng.uniform(-1.0, 1.0, size=len(x))
    return neighbor(x, step_size, u, np.asarray(cardinalities) - 1)


def accept(o_cand: float, o_curr: float, iteration: int, temperature: float, r: float) -> bool:
    """Acceptance rule; ``r`` is the uniform [0, 1) draw for this iteration."""
    if iteration < 1:
        raise ValueError("iteration counts from 1")
    return o_cand > o_curr or r < temperature / iteration


def run(objective: Callable[[Sequence[int]], float], space: DesignSpace, cfg: SAConfig = SAConfig(),
        record_trace: bool = True) -> OptimizerRun:
    rng = np.random.default_rng(cfg.seed)
    card = np.asarray(space.cardinalities())
    upper = card - 1
    d = len(card)

    x_curr = rng.integers(0, card)
    o_curr = float(objective(x_curr))
    x_best, o_best = x_curr.copy(), o_curr

    n = cfg.t_max
    cur_tr = np.empty(n + 1)
    best_tr = np.empty(n + 1)
    cur_tr[0] = best_tr[0] = o_curr
    n_accept = 0
    it = 0
    while it < n:
        us = rng.uniform(-1.0, 1.0, size=(BLOCK, d))
        rs = rng.random(BLOCK)
        steps = np.rint(us * cfg.step_size).astype(np.int64)
        for k in range(min(BLOCK, n - it)):
            it += 1
            x_cand = np.clip(x_curr + steps[k], 0, upper)
            o_cand = float(objective(x_cand))
            if o_cand > o_best:
                x_best, o_best = x_cand, o_cand
            if o_cand > o_curr or rs[k] < cfg.temperature / it:
                x_curr, o_curr = x_cand, o_cand
                n_accept += 1
            cur_tr[it] = o_curr
            best_tr[it] = o_best

    trace = {}
    if record_trace:
        trace = {"iteration": np.arange(n + 1), "current_obj": cur_tr, "best_obj": best_tr}
    best_action = [int(v) for v in x_best]
    return OptimizerRun("sa", cfg.seed, space.decode(best_action), best_action, o_best, trace,
                        {"accepted": n_accept, "iterations": n})
