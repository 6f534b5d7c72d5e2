"""Brute-force evaluation of small restricted design spaces (the optimizers' test oracle)."""
from __future__ import annotations

from dataclasses import dataclass

from .calibration import DEFAULT_CALIBRATION, Calibration
from .design_space import PARAM_NAMES, CASE_I_POINT, DesignPoint, DesignSpace, TABLE_I_SPACE
from .ppac import PpacResult, evaluate

MAX_POINTS = 10 ** 6

class SpaceTooLarge(ValueError):
    pass

@dataclass
class Ranked:
    action: list[int]
    point: DesignPoint
    result: PpacResult

def restricted_space(free: dict | None = None, base: DesignPoint = CASE_I_POINT,
                     space: DesignSpace = TABLE_I_SPACE) -> DesignSpace:
    """Pin every parameter to ``base`` except those in ``free``, which map to ``"all"`` or a value list."""
    free = free or {}
    sub = space.pinned(base, free=free)
    choices = {k: v for k, v in free.items() if v != "all"}
    if choices:
        sub = sub.restrict(**choices)
    return sub

def enumerate_space(space: DesignSpace, cal: Calibration = DEFAULT_CALIBRATION,
                    limit: int = MAX_POINTS) -> list[Ranked]:
    """Every point of ``space`` ranked by reward (highest first; ties by index vector)."""
    if space.size > limit:
        raise SpaceTooLarge(f"space has {space.size} points, limit is {limit}")
    rows = []
    for a in space.iter_actions():
        dp = space.decode(a)
        rows.append(Ranked([int(x) for x in a], dp, evaluate(dp, cal)))
    rows.sort(key=lambda r: (-r.result.reward, r.action))
    return rows

def optimum(space: DesignSpace, cal: Calibration = DEFAULT_CALIBRATION) -> tuple[float, list[int]]:
    best = enumerate_space(space, cal)[0]
    return best.result.reward, best.action

CSV_HEADER = ["rank", "reward", "feasible", "ops_per_sec_system", "pkg_cost", "E_op", *PARAM_NAMES]

def ranked_rows(rows: list[Ranked]):
    for k, r in enumerate(rows, 1):
        vals = [getattr(r.point, n) for n in PARAM_NAMES]
        yield [k, r.result.reward, int(r.result.feasible), r.result.ops_per_sec_system,
               r.result.pkg_cost, r.result.E_op, *vals]

__all__ = ["MAX_POINTS", "SpaceTooLarge", "Ranked", "restricted_space", "enumerate_space", "optimum",
           "CSV_HEADER", "ranked_rows"]
