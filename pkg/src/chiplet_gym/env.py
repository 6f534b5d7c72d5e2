"""Episodic environment around the PPAC model.

Each step is a complete design proposal: the action is a vector of one index
per design parameter, the reward is the scalar objective of the decoded point.
Episodes have a fixed length; there is no state carried between steps other
than the step counter and the last observation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .calibration import DEFAULT_CALIBRATION, Calibration
from .design_space import ARCH_TYPES, DesignSpace, case_space, mesh_dims
from .ppac import PpacResult, evaluate

OBS_FIELDS = (
    "max_package_area",
    "max_area_per_chiplet",
    "current_area_per_chiplet",
    "L_ai_ai",
    "L_hbm_ai",
    "E_comm",
    "pkg_cost",
    "throughput",
    "n_chiplets",
    "arch_type_index",
)
OBS_DIM = len(OBS_FIELDS)


class EpisodeExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    episode_len: int = 2
    penalty: float = -1000.0
    seed: int = 0
    case: int = 128

    def __post_init__(self):
        if self.episode_len < 1:
            raise ValueError("episode_len must be >= 1")
        if self.case not in (64, 128):
            raise ValueError("case must be 64 or 128")


def observation_bounds(cal: Calibration) -> dict[str, float]:
    """Upper bound of each observation entry (lower bounds are 0)."""
    pc, tech, tp = cal.package, cal.tech, cal.timing
    max_hops = max(sum(mesh_dims(f)) - 2 for f in range(1, 129)) + 1
    t_w = max(ic.t_w for ic in cal.interconnects.values())
    lat = max_hops * (t_w + tp.t_r) + tp.t_c + tp.t_s
    worst_class = max(k.mu0 * pc.pkg_area + k.mu1 * 10000 + k.mu2 for k in cal.packaging.families.values())
    cost = 4 * worst_class / cal.packaging.assembly_bond_yield ** 128
    tput = 2 * pc.pkg_area * pc.area_compute / tech.pe_area * tech.freq / tech.cycle_op
    return {
        "max_package_area": pc.pkg_area,
        "max_area_per_chiplet": pc.pkg_area,
        "current_area_per_chiplet": pc.pkg_area,
        "L_ai_ai": lat,
        "L_hbm_ai": lat,
        "E_comm": max(ic.e_bit_max for ic in cal.interconnects.values()),
        "pkg_cost": cost,
        "throughput": tput,
        "n_chiplets": 128.0,
        "arch_type_index": float(len(ARCH_TYPES) - 1),
    }


class ChipletEnv:
    """Fixed-length episodes; observation is 10 min-max scaled scalars in [0, 1]."""

    def __init__(self, cal: Calibration = DEFAULT_CALIBRATION, cfg: EnvConfig = EnvConfig(),
                 space: DesignSpace | None = None, trace: IO | None = None):
        self.cfg = cfg
        self.cal = cal.replace(**{"package.n_chiplets_max": cfg.case, "model.penalty": cfg.penalty})
        self.space = space if space is not None else case_space(cfg.case)
        self._bounds = np.array([observation_bounds(self.cal)[k] for k in OBS_FIELDS])
        self._writer = None
        if trace is not None:
            self._writer = csv.writer(trace)
            self._writer.writerow(["step", "reward", "feasible"] + [f"a{i}" for i in range(len(self.space.params))])
        self.timestep = 0
        self._t = None
        self._seed = cfg.seed
        self.last_result: PpacResult | None = None

    @property
    def cardinalities(self) -> list[int]:
        return self.space.cardinalities()

    def _observe(self, raw: Sequence[float]) -> np.ndarray:
        obs = np.asarray(raw, dtype=float) / self._bounds
        return np.clip(np.nan_to_num(obs, nan=0.0), 0.0, 1.0)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._seed = seed
        self._t = 0
        pc = self.cal.package
        self.last_result = None
        return self._observe([pc.pkg_area, pc.max_area_per_chiplet, pc.max_area_per_chiplet,
                              0, 0, 0, 0, 0, 0, 0])

    def observation_of(self, dp, res: PpacResult) -> np.ndarray:
        pc = self.cal.package
        return self._observe([
            pc.pkg_area, pc.max_area_per_chiplet, res.area_per_chiplet,
            res.L_ai_ai, res.L_hbm_ai, res.E_comm_bit, res.pkg_cost, res.ops_per_sec_system,
            dp.n_chiplets, ARCH_TYPES.index(dp.arch_type),
        ])

    def step(self, action: Sequence[int]) -> tuple[np.ndarray, float, bool]:
        if self._t is None:
            raise EpisodeExhausted("reset() must be called before step()")
        if self._t >= self.cfg.episode_len:
            raise EpisodeExhausted(f"episode of length {self.cfg.episode_len} already finished")
        dp = self.space.decode(action)
        res = evaluate(dp, self.cal)
        self._t += 1
        self.timestep += 1
        self.last_result = res
        if self._writer is not None:
            self._writer.writerow([self.timestep, repr(res.reward), int(res.feasible)] + [int(a) for a in action])
        return self.observation_of(dp, res), res.reward, self._t == self.cfg.episode_len

    def objective(self, action: Sequence[int]) -> float:
        """Reward of one action without touching the episode state."""
        return evaluate(self.space.decode(action), self.cal).reward
