"""Optimizer results and their on-disk formats (CSV traces, canonical JSON)."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design_space import DesignPoint


@dataclass
class OptimizerRun:
    optimizer: str
    seed: int | None
    best_point: DesignPoint
    best_action: list[int]
    best_obj: float
    trace: dict[str, np.ndarray] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = list(self.trace)
        w.writerow(cols)
        for row in zip(*(self.trace[c] for c in cols)):
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "optimizer": self.optimizer,
            "seed": self.seed,
            "best_obj": self.best_obj,
            "best_point": self.best_point.to_dict(),
            "best_action": [int(a) for a in self.best_action],
            **({"info": self.info} if self.info else {}),
        }


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".9g")


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        # 9 significant digits, ints stay ints only if they came in as ints
        return float(format(x, ".9g"))
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, floats rounded to 9 significant digits."""
    return json.dumps(_canon(obj), sort_keys=True, indent=2) + "\n"


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
