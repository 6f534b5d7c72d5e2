"""Command-line entry point: ``chiplet-gym {evaluate,optimize,enumerate,bench}``.

Exit codes: 0 success, 2 bad input (unparseable or schema-invalid files,
invalid flags, oversized enumeration), 3 runtime or optimizer failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time

from pathlib import Path

import jsonschema

from . import __version__
from .calibration import DEFAULT_CALIBRATION, Calibration, _data_path
from .design_space import CASE_I_POINT, DesignPoint, DesignSpaceError, case_space, layout
from .env import ChipletEnv, EnvConfig
from .exhaustive import CSV_HEADER, SpaceTooLarge, enumerate_space, ranked_rows, restricted_space
from .hybrid import HybridConfig, manifest as run_manifest, run_trials
from .ppac import compare_monolithic, evaluate
from .ppo import MlpParams, PPOConfig, train
from .runs import atomic_write, canonical_json
from .sa import SAConfig
from .sa import run as run_sa
from .workloads import builtin_benchmarks, load_workloads, tasks_per_joule, tasks_per_sec

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3


class InputError(Exception):
    pass


def schema(name: str) -> dict:
    return json.loads(_data_path(f"{name}.schema.json").read_text())


def _read_json(path, what: str):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"{what}: file not found: {path}")
    except json.JSONDecodeError as e:
        raise InputError(f"{what}: malformed JSON: {e}")


def _validate(obj, name: str, what: str):
    try:
        jsonschema.validate(obj, schema(name))
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise InputError(f"{what}: field {loc}: {e.message}")


def load_point(path) -> DesignPoint:
    d = _read_json(path, "design point")
    _validate(d, "design_point", "design point")
    try:
        return DesignPoint.from_dict(d)
    except DesignSpaceError as e:
        raise InputError(f"design point: {e}")


def _calibration(args) -> Calibration:
    if args.calib is None:
        cal = DEFAULT_CALIBRATION
    else:
        try:
            cal = Calibration.from_dict(_read_json(args.calib, "calibration"))
        except jsonschema.ValidationError as e:
            loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
            raise InputError(f"calibration: field {loc}: {e.message}")
        except (TypeError, ValueError) as e:
            raise InputError(f"calibration: {e}")
    if getattr(args, "weights", None):
        try:
            a, b, g = (float(x) for x in args.weights.split(","))
            cal = cal.with_weights(a, b, g)
        except ValueError as e:
            raise InputError(f"--weights expects three positive numbers a,b,g: {e}")
    return cal


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def _manifest(args, cal: Calibration, config: dict, outputs: list[str], t0: float, **extra) -> dict:
    return {
        "tool_version": __version__,
        "config_hash": config_hash({"calibration": cal.to_dict(), **config}),
        "calibration": args.calib,
        "command": list(sys.argv[1:]) if args.argv is None else list(args.argv),
        "outputs": outputs,
        "wall_time_s": time.perf_counter() - t0,
        **extra,
    }


# --- evaluate -------------------------------------------------------------------

def evaluation_report(dp: DesignPoint, cal: Calibration) -> dict:
    res = evaluate(dp, cal)
    lay = layout(dp)
    return {
        "point": dp.to_dict(),
        "result": res.to_dict(),
        "layout": {"rows": lay.m, "cols": lay.n, "footprints": lay.footprints, "tiers": lay.tiers,
                   "hbm_sites": [s.name for s in lay.hbm_sites]},
        "monolithic_comparison": compare_monolithic(dp, cal, res),
    }


def cmd_evaluate(args) -> int:
    cal = _calibration(args)
    dp = load_point(args.point)
    text = canonical_json(evaluation_report(dp, cal))
    _emit(args.out, text)
    return EXIT_OK


def _emit(out, text: str):
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


# --- optimize -------------------------------------------------------------------

def _opt_config(args) -> dict:
    if args.opt is None:
        return {}
    d = _read_json(args.opt, "optimizer config")
    _validate(d, "optimizer", "optimizer config")
    return d


def cmd_optimize(args) -> int:
    t0 = time.perf_counter()
    cal = _calibration(args)
    oc = _opt_config(args)
    try:
        sa_cfg = SAConfig(**oc.get("sa", {}), seed=args.seed)
        ppo_cfg = PPOConfig(**oc.get("ppo", {}), seed=args.seed)
        hy = dict(oc.get("hybrid", {}))
        rl_path = hy.pop("rl_params", None)
        rl_params = MlpParams.load(rl_path) if rl_path else None
        if "seeds" in hy:
            hy["seeds"] = tuple(hy["seeds"])
        else:
            hy["seeds"] = tuple(args.seed + k for k in range(hy.get("trial_max", 1)))
        hy_cfg = HybridConfig(sa=sa_cfg, ppo=ppo_cfg, case=args.case, rl_params=rl_params, **hy)
    except (TypeError, ValueError, KeyError) as e:
        raise InputError(f"optimizer config: {e}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {"mode": args.mode, "case": args.case, "seed": args.seed, "opt": oc}
    outputs, runs, traces = [], [], []

    def save_run(r, tag):
        if r.trace:
            p = out / f"trace_{tag}.csv"
            atomic_write(p, r.trace_csv())
            outputs.append(str(p))
            traces.append(str(p))
        else:
            traces.append(None)
        runs.append(r)

    try:
        env = ChipletEnv(cal, EnvConfig(case=args.case, seed=args.seed))
        if args.mode == "sa":
            best = run_sa(env.objective, env.space, sa_cfg)
            save_run(best, f"sa_seed{args.seed}")
        elif args.mode == "rl":
            best = train(env, ppo_cfg)
            save_run(best, f"rl_seed{args.seed}")
            p = out / "policy.json"
            atomic_write(p, json.dumps(best.policy.to_dict()))
            outputs.append(str(p))
        else:
            best = run_trials(hy_cfg, cal)
            for r in best.runs:
                save_run(r, f"{r.optimizer}_seed{r.seed}_trial{r.info.get('trial')}")
    except Exception as e:
        man = _manifest(args, cal, config, outputs, t0, status="failed", error=repr(e))
        atomic_write(out / "manifest.json", canonical_json(man))
        raise

    eval_cal = cal.with_case(args.case)
    p = out / "best_point.json"
    atomic_write(p, canonical_json(best.best_point.to_dict()))
    outputs.append(str(p))
    p = out / "result.json"
    atomic_write(p, canonical_json({**best.summary(), "ppac": evaluate(best.best_point, eval_cal).to_dict()}))
    outputs.append(str(p))
    outputs.append(str(out / "manifest.json"))
    man = _manifest(args, cal, config, outputs, t0, status="ok", **run_manifest(runs, best, traces))
    atomic_write(out / "manifest.json", canonical_json(man))
    print(canonical_json(best.summary()), end="")
    return EXIT_OK


# --- enumerate ------------------------------------------------------------------

def cmd_enumerate(args) -> int:
    cal = _calibration(args)
    spec = _read_json(args.restrict, "restriction") if args.restrict else {}
    _validate(spec, "restriction", "restriction")
    try:
        base = DesignPoint.from_dict(spec["base"]) if "base" in spec else CASE_I_POINT
        space = restricted_space(spec.get("free", {}), base, case_space(spec.get("case", 128)))
    except (DesignSpaceError, ValueError) as e:
        raise InputError(f"restriction: {e}")
    if "case" in spec:
        cal = cal.with_case(spec["case"])
    rows = enumerate_space(space, cal, limit=args.limit)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in ranked_rows(rows):
        w.writerow([format(v, ".9g") if isinstance(v, float) else v for v in row])
    _emit(args.out, buf.getvalue())
    return EXIT_OK


# --- bench ----------------------------------------------------------------------

BENCH_HEADER = ["system", "workload", "metric", "value"]


def bench_report(dp: DesignPoint, cal: Calibration, workloads) -> dict:
    res = evaluate(dp, cal)
    if not res.feasible:
        raise InputError(f"design point is infeasible: {'; '.join(res.reasons)}")
    cmp = compare_monolithic(dp, cal, res)
    mono = cmp["monolithic"]
    systems = {
        "chiplet": {"ops_per_sec": res.ops_per_sec_system, "E_op_pj": res.E_op},
        "monolithic": {"ops_per_sec": mono["ops_per_sec"], "E_op_pj": mono["E_op"]},
    }
    rows = []
    for name, s in systems.items():
        for w in workloads:
            rows.append({"system": name, "workload": w.name, "metric": "inferences_per_sec",
                         "value": tasks_per_sec(s["ops_per_sec"], w)})
            rows.append({"system": name, "workload": w.name, "metric": "inferences_per_joule",
                         "value": tasks_per_joule(s["E_op_pj"], w)})
    return {"point": dp.to_dict(), "systems": systems, "rows": rows,
            "ratios": {k: v for k, v in cmp.items() if k != "monolithic"}}


def cmd_bench(args) -> int:
    cal = _calibration(args)
    dp = load_point(args.point)
    if args.workloads:
        rows = _read_json(args.workloads, "workloads")
        try:
            ws = load_workloads(rows)
        except jsonschema.ValidationError as e:
            raise InputError(f"workloads: {e.message}")
    else:
        ws = builtin_benchmarks()
    rep = bench_report(dp, cal, ws)
    out = Path(args.out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    for r in rep["rows"]:
        w.writerow([r["system"], r["workload"], r["metric"], format(r["value"], ".9g")])
    atomic_write(out / "bench_report.json", canonical_json(rep))
    atomic_write(out / "bench.csv", buf.getvalue())
    return EXIT_OK


# --- entry ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chiplet-gym", description="Chiplet package design-space exploration")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--calib", help="calibration JSON (default: packaged calibration)")
        p.add_argument("--weights", help="reward weights alpha,beta,gamma (default 1,1,0.1)")

    p = sub.add_parser("evaluate", help="PPAC report for one design point")
    p.add_argument("point", help="design point JSON")
    p.add_argument("--out", help="report path (default: stdout)")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="run SA, PPO or the hybrid loop")
    p.add_argument("--mode", choices=("sa", "rl", "hybrid"), required=True)
    p.add_argument("--case", type=int, choices=(64, 128), default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--opt", help="optimizer config JSON")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("enumerate", help="rank every point of a restricted space")
    p.add_argument("restrict", nargs="?", help="restriction JSON (default: everything pinned)")
    p.add_argument("--out", help="ranked CSV path (default: stdout)")
    p.add_argument("--limit", type=int, default=10 ** 6, help=argparse.SUPPRESS)
    common(p)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("bench", help="per-workload throughput and energy efficiency vs monolithic")
    p.add_argument("point", help="design point JSON")
    p.add_argument("--workloads", help="workload list JSON (default: built-in benchmarks)")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except (InputError, SpaceTooLarge) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
