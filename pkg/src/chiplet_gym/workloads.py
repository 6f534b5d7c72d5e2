"""DNN benchmark descriptors and workload-level throughput / energy metrics."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .calibration import _data_path

GFLOP = 1e9


@dataclass(frozen=True)
class Workload:
    name: str
    domain: str
    ops_g: float  # GEMM ops per task
    ops_ng: float = 0.0  # non-GEMM ops per task
    m_eff: float = 1.0  # mapping efficiency
    d_w: int = 8  # operand width, bits

    def __post_init__(self):
        if self.ops_g <= 0 or self.ops_ng < 0:
            raise ValueError(f"{self.name}: op counts must be positive")
        if not 0 < self.m_eff <= 1:
            raise ValueError(f"{self.name}: m_eff must be in (0, 1]")

    @property
    def ops_per_task(self) -> float:
        return self.ops_g + self.ops_ng

    def to_json(self) -> dict:
        return {"name": self.name, "domain": self.domain, "ops_g_gflops": self.ops_g / GFLOP,
                "ops_ng_gflops": self.ops_ng / GFLOP, "m_eff": self.m_eff, "d_w_bits": self.d_w}

    @classmethod
    def from_json(cls, row: dict) -> "Workload":
        return cls(row["name"], row["domain"], row["ops_g_gflops"] * GFLOP,
                   row.get("ops_ng_gflops", 0.0) * GFLOP, row.get("m_eff", 1.0), row.get("d_w_bits", 8))


def builtin_benchmarks() -> list[Workload]:
    return [
        Workload("ResNet50", "Image classification", 4 * GFLOP),
        Workload("EfficientDet", "Light weight object detection", 410 * GFLOP),
        Workload("Mask-RCNN", "Heavy weight object detection", 447 * GFLOP),
        Workload("3D-UNet", "Biomedical image segmentation", 947 * GFLOP),
        Workload("BERT", "Natural language processing", 32 * GFLOP),
    ]


def tasks_per_sec(system_ops: float, w: Workload) -> float:
    if system_ops < 0:
        raise ValueError("system_ops must be non-negative")
    return system_ops * w.m_eff / w.ops_per_task


def tasks_per_joule(e_op_pj: float, w: Workload) -> float:
    if e_op_pj <= 0:
        raise ValueError("energy per op must be positive")
    return 1.0 / (e_op_pj * 1e-12 * w.ops_per_task)


def workload_schema() -> dict:
    return json.loads(_data_path("workloads.schema.json").read_text())


def dump_workloads(ws: list[Workload]) -> list[dict]:
    return [w.to_json() for w in ws]


def load_workloads(path: str | Path | list) -> list[Workload]:
    rows = path if isinstance(path, list) else json.loads(Path(path).read_text())
    jsonschema.validate(rows, workload_schema())
    return [Workload.from_json(r) for r in rows]
