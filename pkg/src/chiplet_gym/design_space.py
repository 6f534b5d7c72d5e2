"""Packaging / resource design space of a chiplet-based AI accelerator.

A design point is one assignment of the fourteen architecture parameters
(package architecture, chiplet count, HBM placement and the three interconnect
configurations).  Optimizers work on integer index vectors; :class:`DesignSpace`
converts between the two and can be restricted to a sub-space (pinned or
subset parameters), which is how the 64/128 chiplet cases and the small
enumeration spaces are built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

ARCH_TYPES = ("2.5D", "5.5D-mem-on-logic", "5.5D-logic-on-logic")
IC_2P5D = ("CoWoS", "EMIB")
IC_3D = ("SoIC", "FOVEROS")

# bit order of the HBM placement code (1..63)
HBM_SITES = ("left", "right", "top", "bottom", "middle", "stacked")
SIDE_SITES = ("left", "right", "top", "bottom")
N_PLACEMENTS = 2 ** len(HBM_SITES) - 1

PARAM_NAMES = (
    "arch_type",
    "n_chiplets",
    "hbm_placement",
    "ic_2p5d_ai",
    "dr_2p5d_ai",
    "links_2p5d_ai",
    "trace_2p5d_ai",
    "ic_3d",
    "dr_3d",
    "links_3d",
    "ic_2p5d_hbm",
    "dr_2p5d_hbm",
    "links_2p5d_hbm",
    "trace_2p5d_hbm",
)

FIELDS_3D = ("ic_3d", "dr_3d", "links_3d")
FIELDS_2P5D_AI = ("ic_2p5d_ai", "dr_2p5d_ai", "links_2p5d_ai", "trace_2p5d_ai")
FIELDS_2P5D_HBM = ("ic_2p5d_hbm", "dr_2p5d_hbm", "links_2p5d_hbm", "trace_2p5d_hbm")


class DesignSpaceError(ValueError):
    pass


class IndexOutOfRange(DesignSpaceError):
    def __init__(self, param: str, index: int, cardinality: int):
        super().__init__(f"{param}: index {index} outside [0, {cardinality - 1}]")
        self.param = param
        self.index = index
        self.cardinality = cardinality


def placement_code(sites: Iterable[str]) -> int:
    code = 0
    for s in sites:
        if s not in HBM_SITES:
            raise DesignSpaceError(f"unknown HBM site {s!r}")
        code |= 1 << HBM_SITES.index(s)
    return code


def placement_sites(code: int) -> tuple[str, ...]:
    if not 1 <= code <= N_PLACEMENTS:
        raise DesignSpaceError(f"HBM placement code {code} outside 1..{N_PLACEMENTS}")
    return tuple(s for i, s in enumerate(HBM_SITES) if code >> i & 1)


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # "categorical" or "range"
    values: tuple

    @classmethod
    def categorical(cls, name: str, values: Sequence) -> "ParamSpec":
        return cls(name, "categorical", tuple(values))

    @classmethod
    def range(cls, name: str, lo: int, hi: int, step: int = 1) -> "ParamSpec":
        return cls(name, "range", tuple(range(lo, hi + 1, step)))

    @property
    def cardinality(self) -> int:
        return len(self.values)

    def index(self, value) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise DesignSpaceError(f"{self.name}: value {value!r} not in design space") from None


TABLE_I = (
    ParamSpec.categorical("arch_type", ARCH_TYPES),
    ParamSpec.range("n_chiplets", 1, 128),
    ParamSpec.range("hbm_placement", 1, N_PLACEMENTS),
    ParamSpec.categorical("ic_2p5d_ai", IC_2P5D),
    ParamSpec.range("dr_2p5d_ai", 1, 20),
    ParamSpec.range("links_2p5d_ai", 50, 5000, 50),
    ParamSpec.range("trace_2p5d_ai", 1, 10),
    ParamSpec.categorical("ic_3d", IC_3D),
    ParamSpec.range("dr_3d", 20, 50),
    ParamSpec.range("links_3d", 100, 10000, 100),
    ParamSpec.categorical("ic_2p5d_hbm", IC_2P5D),
    ParamSpec.range("dr_2p5d_hbm", 1, 20),
    ParamSpec.range("links_2p5d_hbm", 50, 5000, 50),
    ParamSpec.range("trace_2p5d_hbm", 1, 10),
)


@dataclass(frozen=True, order=True)
class DesignPoint:
    arch_type: str
    n_chiplets: int
    hbm_placement: int
    ic_2p5d_ai: str
    dr_2p5d_ai: int
    links_2p5d_ai: int
    trace_2p5d_ai: int
    ic_3d: str
    dr_3d: int
    links_3d: int
    ic_2p5d_hbm: str
    dr_2p5d_hbm: int
    links_2p5d_hbm: int
    trace_2p5d_hbm: int

    @property
    def hbm_sites(self) -> tuple[str, ...]:
        return placement_sites(self.hbm_placement)

    @property
    def n_hbm(self) -> int:
        return bin(self.hbm_placement).count("1")

    @property
    def tiers(self) -> int:
        return 2 if self.arch_type == "5.5D-logic-on-logic" else 1

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["hbm_placement"] = list(self.hbm_sites)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "DesignPoint":
        missing = [k for k in PARAM_NAMES if k not in d]
        if missing:
            raise DesignSpaceError(f"missing design parameters: {', '.join(missing)}")
        extra = [k for k in d if k not in PARAM_NAMES]
        if extra:
            raise DesignSpaceError(f"unknown design parameters: {', '.join(extra)}")
        kw = dict(d)
        hp = kw["hbm_placement"]
        kw["hbm_placement"] = hp if isinstance(hp, int) else placement_code(hp)
        dp = cls(**kw)
        TABLE_I_SPACE.encode(dp)  # range check
        return dp


# Table V optimum for alpha, beta, gamma = 1, 1, 0.1 with 64 chiplets at most.
CASE_I_POINT = DesignPoint(
    arch_type="5.5D-logic-on-logic", n_chiplets=60,
    hbm_placement=placement_code(("top", "right", "bottom", "middle")),
    ic_2p5d_ai="EMIB", dr_2p5d_ai=20, links_2p5d_ai=3100, trace_2p5d_ai=1,
    ic_3d="SoIC", dr_3d=42, links_3d=3200,
    ic_2p5d_hbm="EMIB", dr_2p5d_hbm=20, links_2p5d_hbm=4900, trace_2p5d_hbm=1,
)

# Same table, 128 chiplets at most.
CASE_II_POINT = DesignPoint(
    arch_type="5.5D-logic-on-logic", n_chiplets=112,
    hbm_placement=placement_code(("left", "right", "bottom", "middle")),
    ic_2p5d_ai="EMIB", dr_2p5d_ai=20, links_2p5d_ai=1450, trace_2p5d_ai=1,
    ic_3d="FOVEROS", dr_3d=34, links_3d=4400,
    ic_2p5d_hbm="EMIB", dr_2p5d_hbm=20, links_2p5d_hbm=3850, trace_2p5d_hbm=1,
)


@dataclass(frozen=True)
class DesignSpace:
    """Ordered product of per-parameter value lists."""

    params: tuple[ParamSpec, ...] = TABLE_I
    _lookup: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(p.name for p in self.params)
        if names != PARAM_NAMES:
            raise DesignSpaceError(f"parameters must be {PARAM_NAMES}, got {names}")
        for p in self.params:
            if p.cardinality < 1:
                raise DesignSpaceError(f"{p.name}: empty value list")
        object.__setattr__(self, "_lookup", tuple({v: i for i, v in enumerate(p.values)} for p in self.params))

    def cardinalities(self) -> list[int]:
        return [p.cardinality for p in self.params]

    @property
    def size(self) -> int:
        return math.prod(self.cardinalities())

    def __getitem__(self, name: str) -> ParamSpec:
        return self.params[PARAM_NAMES.index(name)]

    def decode(self, action: Sequence[int]) -> DesignPoint:
        if len(action) != len(self.params):
            raise IndexOutOfRange("action", len(action), len(self.params))
        vals = []
        for p, i in zip(self.params, action):
            i = int(i)
            if not 0 <= i < p.cardinality:
                raise IndexOutOfRange(p.name, i, p.cardinality)
            vals.append(p.values[i])
        return DesignPoint(*vals)

    def encode(self, dp: DesignPoint) -> list[int]:
        out = []
        for p, lut in zip(self.params, self._lookup):
            v = getattr(dp, p.name)
            if v not in lut:
                raise DesignSpaceError(f"{p.name}: value {v!r} not in design space")
            out.append(lut[v])
        return out

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.cardinalities())

    def restrict(self, **choices) -> "DesignSpace":
        """Return a sub-space; each keyword maps a parameter to one value or a list of values."""
        params = list(self.params)
        for name, vals in choices.items():
            if name not in PARAM_NAMES:
                raise DesignSpaceError(f"unknown parameter {name!r}")
            k = PARAM_NAMES.index(name)
            if name == "hbm_placement":
                vals = _placement_values(vals)
            elif isinstance(vals, (str, int)) or not isinstance(vals, Iterable):
                vals = [vals]
            vals = tuple(vals)
            for v in vals:
                params[k].index(v)
            params[k] = replace(params[k], values=vals)
        return DesignSpace(tuple(params))

    def pinned(self, base: DesignPoint, free: Iterable[str] = ()) -> "DesignSpace":
        """Pin every parameter not in ``free`` to its value in ``base``."""
        free = set(free)
        return self.restrict(**{n: getattr(base, n) for n in PARAM_NAMES if n not in free})

    def with_max_chiplets(self, cap: int) -> "DesignSpace":
        vals = tuple(v for v in self["n_chiplets"].values if v <= cap)
        return self.restrict(n_chiplets=vals)

    def iter_actions(self):
        """All index vectors in lexicographic order."""
        grids = np.indices(self.cardinalities()).reshape(len(self.params), -1).T
        return grids


def _placement_values(vals):
    if isinstance(vals, int):
        return [vals]
    if isinstance(vals, (list, tuple)) and vals and all(isinstance(v, str) for v in vals):
        return [placement_code(vals)]
    return [v if isinstance(v, int) else placement_code(v) for v in vals]


TABLE_I_SPACE = DesignSpace()


def case_space(cap: int) -> DesignSpace:
    """Table I space with the chiplet count truncated to ``cap`` (64 or 128)."""
    return TABLE_I_SPACE.with_max_chiplets(cap)


# --- physical layout --------------------------------------------------------

@dataclass(frozen=True)
class HbmSite:
    kind: str  # "side", "middle" or "stacked"
    name: str
    row: int
    col: int


@dataclass(frozen=True)
class MeshLayout:
    m: int
    n: int
    footprints: int
    tiers: int
    hbm_sites: tuple[HbmSite, ...]

    @property
    def n_2p5d_hbm(self) -> int:
        return sum(1 for s in self.hbm_sites if s.kind != "stacked")


def mesh_dims(footprints: int) -> tuple[int, int]:
    """Factor pair (m, n), m <= n, of ``footprints`` with the smallest n - m."""
    m = math.isqrt(footprints)
    while footprints % m:
        m -= 1
    return m, footprints // m


@lru_cache(maxsize=None)
def _layout(footprints: int, tiers: int, placement: int) -> MeshLayout:
    m, n = mesh_dims(footprints)
    sites = []
    for name in placement_sites(placement):
        if name == "left":
            sites.append(HbmSite("side", name, (m - 1) // 2, -1))
        elif name == "right":
            sites.append(HbmSite("side", name, -(-(m - 1) // 2), n))
        elif name == "top":
            sites.append(HbmSite("side", name, -1, (n - 1) // 2))
        elif name == "bottom":
            sites.append(HbmSite("side", name, m, -(-(n - 1) // 2)))
        elif name == "middle":
            sites.append(HbmSite("middle", name, (m - 1) // 2, (n - 1) // 2))
        else:
            sites.append(HbmSite("stacked", name, 0, 0))
    return MeshLayout(m, n, footprints, tiers, tuple(sites))


def footprint_count(dp: DesignPoint) -> int:
    return -(-dp.n_chiplets // 2) if dp.tiers == 2 else dp.n_chiplets


def layout(dp: DesignPoint) -> MeshLayout:
    return _layout(footprint_count(dp), dp.tiers, dp.hbm_placement)


# --- package constraints and feasibility -------------------------------------

@dataclass(frozen=True)
class PackageConstraints:
    pkg_area: float = 900.0
    chiplet_spacing: float = 1.0
    max_area_per_chiplet: float = 400.0
    area_compute: float = 0.40
    area_sram: float = 0.40
    area_other: float = 0.20
    tsv_reserve: float = 2.0
    hbm_footprint: float = 26.0
    n_chiplets_max: int = 128

    def __post_init__(self):
        if abs(self.area_compute + self.area_sram + self.area_other - 1.0) > 1e-9:
            raise ValueError("area split must sum to 1")
        if self.max_area_per_chiplet > self.pkg_area:
            raise ValueError("max_area_per_chiplet exceeds pkg_area")
        if self.n_chiplets_max not in (64, 128):
            raise ValueError("n_chiplets_max must be 64 or 128")


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    area_per_chiplet: float
    reasons: tuple[str, ...] = ()
    ignored: tuple[str, ...] = ()


def available_area(lay: MeshLayout, pc: PackageConstraints) -> float:
    # spacing term taken literally as (m + n + 2) * spacing mm^2
    return pc.pkg_area - (lay.m + lay.n + 2) * pc.chiplet_spacing - lay.n_2p5d_hbm * pc.hbm_footprint


def area_per_chiplet(dp: DesignPoint, pc: PackageConstraints, lay: MeshLayout | None = None) -> float:
    lay = lay or layout(dp)
    return available_area(lay, pc) / lay.footprints


def ignored_fields(dp: DesignPoint, lay: MeshLayout | None = None) -> tuple[str, ...]:
    lay = lay or layout(dp)
    sites = dp.hbm_sites
    out = []
    if lay.footprints == 1:
        out += FIELDS_2P5D_AI
    uses_3d = (dp.tiers == 2 and dp.n_chiplets >= 2) or (
        dp.arch_type == "5.5D-mem-on-logic" and "stacked" in sites)
    if not uses_3d:
        out += FIELDS_3D
    if all(s == "stacked" for s in sites):
        out += FIELDS_2P5D_HBM
    return tuple(out)


def feasible(dp: DesignPoint, pc: PackageConstraints = PackageConstraints()) -> FeasibilityReport:
    lay = layout(dp)
    area = area_per_chiplet(dp, pc, lay)
    reasons = []
    if dp.n_chiplets > pc.n_chiplets_max:
        reasons.append(f"n_chiplets {dp.n_chiplets} above cap {pc.n_chiplets_max}")
    if area > pc.max_area_per_chiplet:
        reasons.append(f"area per chiplet {area:.3f} mm2 above {pc.max_area_per_chiplet} mm2")
    if area <= 0:
        reasons.append("no area left for AI chiplets")
    elif lay.tiers == 2 and area <= pc.tsv_reserve:
        reasons.append(f"area per chiplet {area:.3f} mm2 does not exceed TSV reserve")
    if "stacked" in dp.hbm_sites and dp.arch_type != "5.5D-mem-on-logic":
        reasons.append(f"stacked HBM requires 5.5D-mem-on-logic, got {dp.arch_type}")
    return FeasibilityReport(not reasons, area, tuple(reasons), ignored_fields(dp, lay))
