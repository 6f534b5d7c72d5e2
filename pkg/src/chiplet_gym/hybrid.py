"""Trial loop alternating SA and RL, a seeded multi-run farm, and final selection.

Every run is independent and seeded, so the farm can fan runs out to worker
processes; the reduction is an order-independent argmax with deterministic
tie-breaking, which makes the parallel result identical to the sequential one.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .calibration import DEFAULT_CALIBRATION, Calibration
from .design_space import DesignSpace
from .env import ChipletEnv, EnvConfig
from .ppac import evaluate
from .ppo import MlpParams, PPOConfig, infer, train
from .runs import OptimizerRun
from .sa import SAConfig
from .sa import run as run_sa


class EmptyInput(ValueError):
    pass


class TrialFailed(RuntimeError):
    def __init__(self, trial: int, optimizer: str, seed: int, cause: BaseException):
        super().__init__(f"trial {trial} ({optimizer}, seed {seed}) failed: {cause!r}")
        self.trial, self.optimizer, self.seed = trial, optimizer, seed


@dataclass(frozen=True)
class HybridConfig:
    trial_max: int = 1
    seeds: tuple[int, ...] = ()
    sa: SAConfig = SAConfig()
    ppo: PPOConfig = PPOConfig()
    case: int = 128
    n_workers: int = 1
    # trained policy to use in inference mode instead of training per trial
    rl_params: MlpParams | None = field(default=None, compare=False, repr=False)
    rl_inference_samples: int = 2048

    def __post_init__(self):
        if self.trial_max < 1:
            raise ValueError("trial_max must be >= 1")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be pairwise distinct")
        if self.seeds and len(self.seeds) < self.trial_max:
            raise ValueError("need one seed per trial")

    def trial_seeds(self) -> list[int]:
        return list(self.seeds[:self.trial_max]) if self.seeds else list(range(self.trial_max))


# one picklable unit of work: (optimizer, seed, calibration, case, space, cfg)
def _run_one(job) -> OptimizerRun:
    kind, seed, cal, case, space, cfg = job
    env = ChipletEnv(cal, EnvConfig(case=case, seed=seed), space=space)
    t0 = time.perf_counter()
    if kind == "sa":
        out = run_sa(env.objective, env.space, replace(cfg.sa, seed=seed))
    elif cfg.rl_params is not None:
        out = infer(cfg.rl_params, env, cfg.rl_inference_samples, seed)
    else:
        out = train(env, replace(cfg.ppo, seed=seed))
    out.info["wall_time_s"] = time.perf_counter() - t0
    return out


def _execute(jobs: list, n_workers: int) -> list[OptimizerRun]:
    if n_workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_run_one, jobs))


def _tie_key(run: OptimizerRun, cal: Calibration):
    res = evaluate(run.best_point, cal)
    return (-run.best_obj, res.pkg_cost, res.E_op, tuple(run.best_action))


def select_best(runs: list[OptimizerRun], cal: Calibration = DEFAULT_CALIBRATION) -> OptimizerRun:
    """Highest objective; ties go to lower package cost, then lower energy/op, then the smaller action vector."""
    if not runs:
        raise EmptyInput("no optimizer runs to select from")
    top = max(r.best_obj for r in runs)
    tied = [r for r in runs if r.best_obj == top]
    if len(tied) == 1:
        return tied[0]
    return min(tied, key=lambda r: _tie_key(r, cal))


def _with_provenance(best: OptimizerRun, runs: list[OptimizerRun], label: str, cal: Calibration) -> OptimizerRun:
    return OptimizerRun(label, best.seed, best.best_point, list(best.best_action), best.best_obj, {},
                        {"provenance": {"optimizer": best.optimizer, "seed": best.seed,
                                        "trial": best.info.get("trial")},
                         "n_runs": len(runs)})


def run_trials(cfg: HybridConfig, cal: Calibration = DEFAULT_CALIBRATION,
               space: DesignSpace | None = None) -> OptimizerRun:
    """``trial_max`` trials, each an SA run followed by an RL run with the trial's seed; keeps the overall best."""
    jobs, meta = [], []
    for trial, seed in enumerate(cfg.trial_seeds()):
        for kind in ("sa", "rl"):
            jobs.append((kind, seed, cal, cfg.case, space, cfg))
            meta.append((trial, kind, seed))
    runs = []
    if cfg.n_workers <= 1:
        for job, (trial, kind, seed) in zip(jobs, meta):
            try:
                r = _run_one(job)
            except Exception as e:
                raise TrialFailed(trial, kind, seed, e) from e
            r.info["trial"] = trial
            runs.append(r)
    else:
        for r, (trial, _, _) in zip(_execute(jobs, cfg.n_workers), meta):
            r.info["trial"] = trial
            runs.append(r)
    eval_cal = cal.with_case(cfg.case)
    out = _with_provenance(select_best(runs, eval_cal), runs, "hybrid", eval_cal)
    out.runs = runs
    return out


def farm(cal: Calibration = DEFAULT_CALIBRATION, case: int = 128, n_sa: int = 20, n_rl: int = 20,
         sa_cfg: SAConfig = SAConfig(), ppo_cfg: PPOConfig = PPOConfig(), seed0: int = 0,
         n_workers: int = 1, rl_params: MlpParams | None = None, space: DesignSpace | None = None,
         rl_inference_samples: int = 2048) -> tuple[OptimizerRun, list[OptimizerRun]]:
    """``n_sa`` SA runs and ``n_rl`` RL runs on consecutive seeds, then exhaustive selection over their outputs."""
    cfg = HybridConfig(sa=sa_cfg, ppo=ppo_cfg, case=case, n_workers=n_workers, rl_params=rl_params,
                       rl_inference_samples=rl_inference_samples)
    jobs = [("sa", seed0 + i, cal, case, space, cfg) for i in range(n_sa)]
    jobs += [("rl", seed0 + i, cal, case, space, cfg) for i in range(n_rl)]
    runs = _execute(jobs, n_workers)
    eval_cal = cal.with_case(case)
    return _with_provenance(select_best(runs, eval_cal), runs, "farm", eval_cal), runs


def manifest(runs: list[OptimizerRun], selected: OptimizerRun, trace_paths: list[str | None] | None = None) -> dict:
    trace_paths = trace_paths or [None] * len(runs)
    return {
        "runs": [{"optimizer": r.optimizer, "seed": r.seed, "best_obj": r.best_obj,
                  "best_point": r.best_point.to_dict(), "trace_path": p} for r, p in zip(runs, trace_paths)],
        "selected": selected.summary(),
    }
