"""Technology tables and calibration constants.

Everything the analytical model needs beyond the design point lives here and
loads from a single JSON calibration file (see ``data/calibration.json`` and
``data/calibration.schema.json``).  Values that the source material does not
pin down numerically (PE area, MAC energy, packaging regression coefficients,
reward normalization scales) are calibration inputs, not ground truth.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema

from .design_space import PackageConstraints

COST_CLASSES = ("low", "medium", "high", "highest")


@dataclass(frozen=True)
class TechNode:
    name: str = "7nm"
    defect_density: float = 0.0975  # defects / cm^2
    cluster_alpha: float = 4.0
    unit_price: float = 1.0  # currency / mm^2
    pe_area: float = 0.0045  # mm^2 per PE
    e_mac: float = 6.5  # pJ per MAC
    cycle_op: float = 1.0  # cycles per MAC
    freq: float = 1.0e9  # Hz

    def __post_init__(self):
        if self.defect_density < 0 or self.cluster_alpha <= 0 or self.pe_area <= 0 or self.freq <= 0:
            raise ValueError(f"invalid tech node {self}")


@dataclass(frozen=True)
class InterconnectSpec:
    name: str
    family: str  # "2.5D" or "3D"
    e_bit_min: float  # pJ/bit
    e_bit_max: float
    t_w: float  # ps per hop
    impl_cost_class: str
    trace_range: tuple[float, float] | None = None  # mm, 2.5D only

    def __post_init__(self):
        if self.e_bit_min > self.e_bit_max:
            raise ValueError(f"{self.name}: e_bit_min > e_bit_max")
        if self.impl_cost_class not in COST_CLASSES:
            raise ValueError(f"{self.name}: unknown cost class {self.impl_cost_class}")


@dataclass(frozen=True)
class TimingParams:
    t_r: float = 100.0  # router delay, ps
    t_c: float = 0.0  # contention delay, ps
    t_s: float = 0.0  # serialization delay, ps

    def __post_init__(self):
        if min(self.t_r, self.t_c, self.t_s) < 0:
            raise ValueError("timing parameters must be non-negative")


@dataclass(frozen=True)
class CostCoeffs:
    mu0: float  # currency / mm^2
    mu1: float  # currency / link
    mu2: float  # currency


@dataclass(frozen=True)
class PackagingCostCoeffs:
    families: dict = field(default_factory=lambda: {
        "EMIB": CostCoeffs(0.09, 0.001, 2.0),
        "CoWoS": CostCoeffs(0.11, 0.001, 4.0),
        "SoIC": CostCoeffs(0.12, 0.001, 6.0),
        "FOVEROS": CostCoeffs(0.13, 0.001, 8.0),
    })
    assembly_bond_yield: float = 0.99

    def __post_init__(self):
        if not 0 < self.assembly_bond_yield <= 1:
            raise ValueError("assembly_bond_yield must be in (0, 1]")
        for k, c in self.families.items():
            if c.mu0 < 0 or c.mu1 < 0:
                raise ValueError(f"{k}: negative packaging coefficient")

    def __hash__(self):
        return hash((tuple(sorted(self.families.items())), self.assembly_bond_yield))


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.1
    t_ref: float = 0.25e12  # ops/s per reward unit
    c_ref: float = 1.0  # currency per reward unit
    e_ref: float = 0.02  # pJ/op per reward unit

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.t_ref, self.c_ref, self.e_ref) <= 0:
            raise ValueError("reward weights and scales must be positive")


@dataclass(frozen=True)
class ModelParams:
    n_operands: int = 2
    data_width: int = 8  # bits
    reuse_factor: float = 1.0
    u_chip: float = 0.85
    penalty: float = -1000.0
    reuse_window: float | None = None  # None: PE array edge length
    off_board_factor: float = 10.0
    monolithic_area: float = 826.0  # mm^2


DEFAULT_INTERCONNECTS = {
    "CoWoS": InterconnectSpec("CoWoS", "2.5D", 0.2, 0.5, 17.2, "medium", (1.0, 10.0)),
    "EMIB": InterconnectSpec("EMIB", "2.5D", 0.17, 0.7, 17.2, "low", (1.0, 10.0)),
    "SoIC": InterconnectSpec("SoIC", "3D", 0.1, 0.2, 1.6, "high"),
    "FOVEROS": InterconnectSpec("FOVEROS", "3D", 0.05, 0.05, 1.6, "highest"),
}


@dataclass(frozen=True)
class Calibration:
    """Bundle of every evaluation input other than the design point."""

    package: PackageConstraints = PackageConstraints()
    tech: TechNode = TechNode()
    interconnects: dict = field(default_factory=lambda: dict(DEFAULT_INTERCONNECTS))
    timing: TimingParams = TimingParams()
    packaging: PackagingCostCoeffs = PackagingCostCoeffs()
    weights: RewardWeights = RewardWeights()
    model: ModelParams = ModelParams()

    def __hash__(self):
        return hash((self.package, self.tech, tuple(sorted(self.interconnects.items())),
                     self.timing, self.packaging, self.weights, self.model))

    def replace(self, **kw) -> "Calibration":
        """Copy with whole sections or dotted ``section.field`` values replaced."""
        sections = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, val in kw.items():
            if "." in key:
                sec, attr = key.split(".", 1)
                sections[sec] = _replace(sections[sec], **{attr: val})
            else:
                sections[key] = val
        return Calibration(**sections)

    def with_case(self, cap: int) -> "Calibration":
        return self.replace(**{"package.n_chiplets_max": cap})

    def with_weights(self, alpha: float, beta: float, gamma: float) -> "Calibration":
        return self.replace(**{"weights.alpha": alpha, "weights.beta": beta, "weights.gamma": gamma})

    def to_dict(self) -> dict:
        d = {
            "package": asdict(self.package),
            "tech": asdict(self.tech),
            "interconnects": {k: asdict(v) for k, v in self.interconnects.items()},
            "timing": asdict(self.timing),
            "packaging": {
                "families": {k: asdict(v) for k, v in self.packaging.families.items()},
                "assembly_bond_yield": self.packaging.assembly_bond_yield,
            },
            "weights": asdict(self.weights),
            "model": asdict(self.model),
        }
        for ic in d["interconnects"].values():
            if ic["trace_range"] is not None:
                ic["trace_range"] = list(ic["trace_range"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        jsonschema.validate(d, calibration_schema())
        ics = {}
        for k, v in d.get("interconnects", {}).items():
            v = dict(v, name=k)
            if v.get("trace_range") is not None:
                v["trace_range"] = tuple(v["trace_range"])
            ics[k] = InterconnectSpec(**v)
        base = cls()
        pk = d.get("packaging", {})
        packaging = PackagingCostCoeffs(
            families={**base.packaging.families,
                      **{k: CostCoeffs(**v) for k, v in pk.get("families", {}).items()}},
            assembly_bond_yield=pk.get("assembly_bond_yield", base.packaging.assembly_bond_yield),
        )
        return cls(
            package=PackageConstraints(**d.get("package", {})),
            tech=TechNode(**d.get("tech", {})),
            interconnects={**base.interconnects, **ics},
            timing=TimingParams(**d.get("timing", {})),
            packaging=packaging,
            weights=RewardWeights(**d.get("weights", {})),
            model=ModelParams(**d.get("model", {})),
        )


def _replace(obj, **kw):
    from dataclasses import replace
    return replace(obj, **kw)


def _data_path(name: str):
    return resources.files("chiplet_gym").joinpath("data", name)


def calibration_schema() -> dict:
    return json.loads(_data_path("calibration.schema.json").read_text())


def load_calibration(path: str | Path | None = None) -> Calibration:
    if path is None:
        return Calibration.from_dict(json.loads(_data_path("calibration.json").read_text()))
    with open(path) as fh:
        return Calibration.from_dict(json.load(fh))


DEFAULT_CALIBRATION = Calibration()
