"""Analytical power / performance / area / cost model of a chiplet package.

All functions are pure.  Units: areas in mm^2, defect density per cm^2,
latencies in ps, bandwidths in bits/s, energies in pJ, throughput in ops/s.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

from .calibration import DEFAULT_CALIBRATION, Calibration, InterconnectSpec, PackagingCostCoeffs, TechNode, TimingParams
from .design_space import DesignPoint, MeshLayout, PackageConstraints, feasible, layout


class ZeroPEs(ValueError):
    pass


class TraceOutOfRange(ValueError):
    pass


FANOUT = {"HBM": 4, "AI": 1}


# --- yield and cost -----------------------------------------------------------

def die_yield(area: float, tech: TechNode) -> float:
    """Negative-binomial die yield ``(1 + d*A/alpha) ** -alpha``."""
    if area <= 0:
        raise ValueError("area must be positive")
    da = tech.defect_density * area / 100.0
    return (1.0 + da / tech.cluster_alpha) ** -tech.cluster_alpha


def cost_per_yielded_area(area: float, tech: TechNode) -> float:
    return tech.unit_price / die_yield(area, tech)


def cost_per_yielded_area_taylor(area: float, tech: TechNode) -> float:
    """Second-order series of :func:`cost_per_yielded_area` in ``d*A``."""
    da = tech.defect_density * area / 100.0
    a = tech.cluster_alpha
    return tech.unit_price * (1.0 + da + (a - 1.0) / (2.0 * a) * da * da)


# --- hops and latency ---------------------------------------------------------

def hops_ai_ai(lay: MeshLayout) -> int:
    return lay.m + lay.n - 2


@lru_cache(maxsize=None)
def hbm_hop_map(lay: MeshLayout) -> tuple[tuple[int, ...], ...]:
    """Per-cell hop count to the nearest HBM site (side sites sit one hop off the edge)."""
    if not lay.hbm_sites:
        raise ValueError("layout has no HBM site")
    return tuple(
        tuple(min(abs(i - s.row) + abs(j - s.col) for s in lay.hbm_sites) for j in range(lay.n))
        for i in range(lay.m)
    )


def hops_hbm_ai(lay: MeshLayout) -> int:
    return max(max(row) for row in hbm_hop_map(lay))


def link_latency(hops: float, ic: InterconnectSpec | float, tp: TimingParams) -> float:
    t_w = ic if isinstance(ic, (int, float)) else ic.t_w
    return hops * t_w + hops * tp.t_r + tp.t_c + tp.t_s


# --- throughput ---------------------------------------------------------------

def pe_count(area_per_chiplet: float, pc: PackageConstraints, tech: TechNode, tiers: int = 1) -> int:
    usable = area_per_chiplet - (pc.tsv_reserve if tiers == 2 else 0.0)
    pe = math.floor(usable * pc.area_compute / tech.pe_area + 1e-9)
    if pe < 1:
        raise ZeroPEs(f"usable compute area {usable * pc.area_compute:.4g} mm2 below one PE")
    return pe


def chiplet_peak_ops(area_per_chiplet: float, pc: PackageConstraints, tech: TechNode, u_chip: float,
                     tiers: int = 1, comm_cycles: float = 0.0, reuse_window: float | None = None) -> float:
    """Peak ops/s of one AI die; communication cycles are amortized over ``reuse_window`` MACs."""
    pe = pe_count(area_per_chiplet, pc, tech, tiers)
    rho = reuse_window if reuse_window is not None else math.isqrt(pe)
    cycles_per_op = tech.cycle_op + comm_cycles / rho
    return tech.freq / cycles_per_op * pe * u_chip


def bw_req(peak: float, src: str, n_operands: int = 2, data_width: int = 8) -> float:
    return FANOUT[src] * n_operands * data_width * peak


def bw_act(dr_gbps: float, links: int) -> float:
    return dr_gbps * 1e9 * links


def tbps(bits_per_s: float) -> float:
    """Report convention: Gbps totals divided by 1024."""
    return bits_per_s / 1e9 / 1024.0


def u_sys(act: float, req: float) -> float:
    if req <= 0:
        raise ValueError("required bandwidth must be positive")
    return min(1.0, act / req)


def system_ops(n_chiplets: int, peak: float, utilization: float) -> float:
    return peak * n_chiplets * utilization


# --- energy -------------------------------------------------------------------

def e_comm_bit(ic: InterconnectSpec, trace_mm: float | None = None) -> float:
    if ic.family == "3D":
        return ic.e_bit_min if ic.name == "FOVEROS" else 0.5 * (ic.e_bit_min + ic.e_bit_max)
    lo, hi = ic.trace_range
    if trace_mm is None or not lo <= trace_mm <= hi:
        raise TraceOutOfRange(f"{ic.name}: trace {trace_mm} mm outside [{lo}, {hi}]")
    return ic.e_bit_min + (trace_mm - lo) / (hi - lo) * (ic.e_bit_max - ic.e_bit_min)


def bits_per_op(n_operands: int = 2, data_width: int = 8, reuse_factor: float = 1.0) -> float:
    return n_operands * data_width / reuse_factor


def energy_per_op(e_bit: float, bits: float, tech: TechNode) -> float:
    if bits < 0:
        raise ValueError("bits per op must be non-negative")
    return e_bit * bits + tech.e_mac


# --- packaging cost -----------------------------------------------------------

@dataclass(frozen=True)
class LinkClass:
    name: str  # ai_2p5d, ai_3d, hbm_2p5d, hbm_3d
    ic: InterconnectSpec
    dr: float
    links: int
    trace: float | None
    src: str


def link_classes(dp: DesignPoint, lay: MeshLayout, cal: Calibration) -> list[LinkClass]:
    ics = cal.interconnects
    out = []
    if lay.footprints > 1:
        out.append(LinkClass("ai_2p5d", ics[dp.ic_2p5d_ai], dp.dr_2p5d_ai, dp.links_2p5d_ai,
                             dp.trace_2p5d_ai, "AI"))
    if lay.tiers == 2 and dp.n_chiplets >= 2:
        out.append(LinkClass("ai_3d", ics[dp.ic_3d], dp.dr_3d, dp.links_3d, None, "AI"))
    if lay.n_2p5d_hbm:
        out.append(LinkClass("hbm_2p5d", ics[dp.ic_2p5d_hbm], dp.dr_2p5d_hbm, dp.links_2p5d_hbm,
                             dp.trace_2p5d_hbm, "HBM"))
    if lay.n_2p5d_hbm < len(lay.hbm_sites):
        out.append(LinkClass("hbm_3d", ics[dp.ic_3d], dp.dr_3d, dp.links_3d, None, "HBM"))
    return out


def packaging_cost(classes: list[LinkClass], footprints: int, coeffs: PackagingCostCoeffs, a_p: float) -> float:
    """``mu0*A_P + mu1*L + mu2`` per link class (package area shared evenly), over assembly yield."""
    if a_p <= 0:
        raise ValueError("package area must be positive")
    share = a_p / len(classes)
    raw = 0.0
    for c in classes:
        k = coeffs.families[c.ic.name]
        raw += k.mu0 * share + k.mu1 * c.links + k.mu2
    return raw / coeffs.assembly_bond_yield ** footprints


# --- full evaluation ----------------------------------------------------------

@dataclass
class PpacResult:
    feasible: bool
    reward: float
    ops_per_sec_chiplet: float = 0.0
    ops_per_sec_system: float = 0.0
    u_sys: float = 0.0
    u_chip: float = 0.0
    L_ai_ai: float = 0.0
    L_hbm_ai: float = 0.0
    H_ai_ai: int = 0
    H_hbm_ai: int = 0
    bw_req: dict = field(default_factory=dict)
    bw_act: dict = field(default_factory=dict)
    E_op: float = 0.0
    E_comm_bit: float = 0.0
    die_cost_total: float = 0.0
    pkg_cost: float = 0.0
    area_per_chiplet: float = 0.0
    die_yield: float = 0.0
    pe_per_chiplet: int = 0
    mesh: tuple = (0, 0)
    footprints: int = 0
    reasons: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mesh"] = list(self.mesh)
        d["reasons"] = list(self.reasons)
        return d


def reward(t: float, c: float, e: float, w) -> float:
    return w.alpha * (t / w.t_ref) - w.beta * (c / w.c_ref) - w.gamma * (e / w.e_ref)


def evaluate(dp: DesignPoint, cal: Calibration = DEFAULT_CALIBRATION) -> PpacResult:
    pc, tech, mp = cal.package, cal.tech, cal.model
    rep = feasible(dp, pc)
    if not rep.feasible:
        return PpacResult(False, mp.penalty, area_per_chiplet=rep.area_per_chiplet, reasons=rep.reasons)
    lay = layout(dp)
    area = rep.area_per_chiplet
    try:
        pe = pe_count(area, pc, tech, lay.tiers)
    except ZeroPEs as exc:
        return PpacResult(False, mp.penalty, area_per_chiplet=area, reasons=(str(exc),))

    h_ai, h_hbm = hops_ai_ai(lay), hops_hbm_ai(lay)
    t_w = cal.interconnects[dp.ic_2p5d_ai].t_w
    l_ai = link_latency(h_ai, t_w, cal.timing)
    l_hbm = link_latency(h_hbm, cal.interconnects[dp.ic_2p5d_hbm].t_w, cal.timing)
    if lay.tiers == 2 and dp.n_chiplets >= 2:
        # the farthest die sits on the upper tier: one vertical hop more
        l_3d = cal.interconnects[dp.ic_3d].t_w + cal.timing.t_r
        l_ai += l_3d
        l_hbm += l_3d
    comm_cycles = max(l_ai, l_hbm) * 1e-12 * tech.freq
    rho = mp.reuse_window if mp.reuse_window is not None else math.isqrt(pe)
    peak = tech.freq / (tech.cycle_op + comm_cycles / rho) * pe * mp.u_chip

    classes = link_classes(dp, lay, cal)
    req, act, util = {}, {}, 1.0
    e_bits = []
    for c in classes:
        req[c.name] = bw_req(peak, c.src, mp.n_operands, mp.data_width)
        act[c.name] = bw_act(c.dr, c.links)
        util = min(util, u_sys(act[c.name], req[c.name]))
        e_bits.append(e_comm_bit(c.ic, c.trace))
    t_sys = system_ops(dp.n_chiplets, peak, util)
    e_bit = sum(e_bits) / len(e_bits)
    e_op = energy_per_op(e_bit, bits_per_op(mp.n_operands, mp.data_width, mp.reuse_factor), tech)
    c_pkg = packaging_cost(classes, lay.footprints, cal.packaging, pc.pkg_area)
    y = die_yield(area, tech)
    return PpacResult(
        feasible=True,
        reward=reward(t_sys, c_pkg, e_op, cal.weights),
        ops_per_sec_chiplet=peak,
        ops_per_sec_system=t_sys,
        u_sys=util,
        u_chip=mp.u_chip,
        L_ai_ai=l_ai,
        L_hbm_ai=l_hbm,
        H_ai_ai=h_ai,
        H_hbm_ai=h_hbm,
        bw_req=req,
        bw_act=act,
        E_op=e_op,
        E_comm_bit=e_bit,
        die_cost_total=dp.n_chiplets * area * tech.unit_price / y,
        pkg_cost=c_pkg,
        area_per_chiplet=area,
        die_yield=y,
        pe_per_chiplet=pe,
        mesh=(lay.m, lay.n),
        footprints=lay.footprints,
    )


# --- monolithic baseline ------------------------------------------------------

@dataclass
class MonolithicResult:
    area: float
    die_yield: float
    die_cost: float
    ops_per_sec: float
    E_op: float
    pkg_cost: float

    def to_dict(self) -> dict:
        return asdict(self)


def monolithic_baseline(area: float, cal: Calibration = DEFAULT_CALIBRATION, e_bit_onpkg: float | None = None,
                        hbm_ic: str = "EMIB", hbm_links: int = 5000) -> MonolithicResult:
    """Single large die.  Operand traffic to match a multi-chiplet system crosses the board,
    at ``off_board_factor`` times the on-package energy per bit."""
    if area <= 0:
        raise ValueError("area must be positive")
    tech, pc, mp = cal.tech, cal.package, cal.model
    y = die_yield(area, tech)
    pe = math.floor(area * pc.area_compute / tech.pe_area + 1e-9)
    ops = tech.freq / tech.cycle_op * pe * mp.u_chip
    if e_bit_onpkg is None:
        e_bit_onpkg = cal.interconnects[hbm_ic].e_bit_min
    e_op = energy_per_op(mp.off_board_factor * e_bit_onpkg,
                         bits_per_op(mp.n_operands, mp.data_width, mp.reuse_factor), tech)
    k = cal.packaging.families[hbm_ic]
    pkg = (k.mu0 * pc.pkg_area + k.mu1 * hbm_links + k.mu2) / cal.packaging.assembly_bond_yield
    return MonolithicResult(area, y, area * tech.unit_price / y, ops, e_op, pkg)


def compare_monolithic(dp: DesignPoint, cal: Calibration = DEFAULT_CALIBRATION,
                       res: PpacResult | None = None) -> dict:
    """Chiplet-vs-monolithic ratios at the same HBM attach (iso memory capacity)."""
    res = res or evaluate(dp, cal)
    hbm_ic = dp.ic_2p5d_hbm
    ic = cal.interconnects[hbm_ic]
    e_on = e_comm_bit(ic, dp.trace_2p5d_hbm) if ic.family == "2.5D" else e_comm_bit(ic)
    mono = monolithic_baseline(cal.model.monolithic_area, cal, e_on, hbm_ic, dp.links_2p5d_hbm)
    out = {"monolithic": mono.to_dict()}
    if not res.feasible:
        out.update(throughput_ratio=None, energy_efficiency_ratio=None, die_cost_ratio=None, pkg_cost_ratio=None)
        return out
    chiplet_die_cost = res.area_per_chiplet * cal.tech.unit_price / res.die_yield
    out.update(
        throughput_ratio=res.ops_per_sec_system / mono.ops_per_sec,
        energy_efficiency_ratio=mono.E_op / res.E_op,
        die_cost_ratio=mono.die_cost / chiplet_die_cost,
        pkg_cost_ratio=res.pkg_cost / mono.pkg_cost,
    )
    return out
