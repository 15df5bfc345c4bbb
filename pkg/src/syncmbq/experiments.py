"""Seeded experiment runs and their CSV outputs.

Seeds fan out to a process pool when ``threads > 1``; results are always
gathered in seed order, so outputs do not depend on completion order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from syncmbq.artifacts import write_csv, write_q
from syncmbq.envs import EpisodicEnv
from syncmbq.learner import (
    EPISODE_COLUMNS,
    TRACE_COLUMNS,
    RunTrace,
    evaluate_greedy,
    greedy_agreement,
    moving_average,
    train,
)
from syncmbq.mdp import TabularMdp, value_iteration
from syncmbq.runfile import RunFile, RunFileError
from syncmbq.switched import COMPARISON_COLUMNS, ORACLE_TOL, ComparisonTrace, run_with_comparisons

SUMMARY_COLUMNS = ("metric", "mean", "std", "n")
PER_SEED_COLUMNS = ("seed", "success_rate", "final_inf_error", "greedy_match", "visited_all_at", "steps", "episodes")
COMPARE_SUMMARY_COLUMNS = (
    "seed", "visited_all_at", "warmup", "sandwich_ok", "max_w_inf_visited", "max_a_norm_visited",
    "max_q_abs", "ma_at_visit", "final_ma", "final_inf_error", "greedy_match",
)


def tabular_view(source: TabularMdp | EpisodicEnv) -> TabularMdp:
    return source if isinstance(source, TabularMdp) else source.mdp


def oracle(source: TabularMdp | EpisodicEnv) -> np.ndarray:
    q_star, _ = value_iteration(tabular_view(source), tolerance=ORACLE_TOL)
    return q_star


@dataclass
class SeedResult:
    seed: int
    trace: RunTrace
    success_rate: float | None
    final_inf_error: float
    greedy_match: bool


def train_seed(rf: RunFile, seed: int) -> SeedResult:
    source = rf.build_source()
    mdp = tabular_view(source)
    q_star = oracle(source)
    trace = train(source, rf.trainer_config(seed, mdp.num_pairs), q_star=q_star)
    success = None
    if isinstance(source, EpisodicEnv):
        success = evaluate_greedy(
            source, trace.q, rf.evaluation.episodes, rf.eval_len(), rf.evaluation.seed_offset + seed
        )
    err = float(np.max(np.abs(trace.q - q_star)))
    return SeedResult(seed, trace, success, err, greedy_agreement(trace.q, q_star) == 1.0)


def compare_seed(rf: RunFile, seed: int) -> ComparisonTrace:
    source = rf.build_source()
    if not isinstance(source, TabularMdp):
        raise RunFileError(f"compare needs a tabular environment, got {rf.environment.name!r}")
    return run_with_comparisons(source, rf.trainer_config(seed, source.num_pairs), oracle(source))


def _call(args):
    fn, rf, seed = args
    return fn(rf, seed)


def run_seeds(fn: Callable[[RunFile, int], object], rf: RunFile, threads: int = 1) -> list:
    """Apply ``fn(rf, seed)`` to every seed; results come back in seed order."""
    if threads <= 1 or len(rf.seeds) == 1:
        return [fn(rf, s) for s in rf.seeds]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_call, [(fn, rf, s) for s in rf.seeds]))


def summarize(values: list[float]) -> tuple[float, float, int]:
    """Mean and population standard deviation."""
    x = np.asarray(values, dtype=float)
    return float(x.mean()), float(x.std()), int(x.size)


# ---------------------------------------------------------------- writers


def _meta(rf: RunFile, command: str, **extra) -> dict:
    return {"command": command, "environment": rf.environment.name, "algorithm": rf.algorithm, **extra}


def _steps_taken(trace: RunTrace, rf: RunFile) -> int:
    if len(trace.episodes):
        return int(trace.episodes[-1, 1])
    return int(rf.trainer["total_steps"])


def write_train_outputs(rf: RunFile, results: list[SeedResult], out: str | Path) -> dict[str, float]:
    out = Path(out)
    window = rf.moving_average_window
    for r in results:
        meta = _meta(rf, "train", **r.trace.metadata)
        write_csv(out / f"trace_seed{r.seed}.csv", TRACE_COLUMNS, r.trace.records.tolist(), meta)
        if len(r.trace.episodes):
            ep = r.trace.episodes
            ma = moving_average(ep[:, 2], window)
            write_csv(
                out / f"episodes_seed{r.seed}.csv", EPISODE_COLUMNS + ("ma_return",),
                np.column_stack([ep, ma]).tolist(), meta,
            )
        write_q(out / f"q_seed{r.seed}.json", r.trace.q, seed=r.seed)
    rows = [
        (r.seed, r.success_rate, r.final_inf_error, r.greedy_match, r.trace.visited_all_at,
         _steps_taken(r.trace, rf), len(r.trace.episodes))
        for r in results
    ]
    write_csv(out / "per_seed.csv", PER_SEED_COLUMNS, rows, _meta(rf, "train", seeds=rf.seeds))
    summary = {}
    if all(r.success_rate is not None for r in results):
        summary["success_rate_pct"] = summarize([100.0 * r.success_rate for r in results])
    summary["final_inf_error"] = summarize([r.final_inf_error for r in results])
    summary["greedy_match"] = summarize([float(r.greedy_match) for r in results])
    write_csv(
        out / "summary.csv", SUMMARY_COLUMNS,
        [(name, *vals) for name, vals in summary.items()],
        _meta(rf, "train", seeds=rf.seeds),
    )
    return summary


def compare_rows(rf: RunFile, trace: ComparisonTrace, seed: int) -> tuple:
    steps = trace.steps
    err = trace.column("main_err")
    ma = moving_average(err, rf.moving_average_window)
    v = trace.visited_all_at
    after = steps >= v if v is not None else np.zeros(len(steps), dtype=bool)
    q_star = trace.extra["q_star"]
    return (
        seed, v, trace.warmup, trace.sandwich_ok,
        float(trace.column("w_inf")[after].max()) if after.any() else None,
        float(trace.column("a_norm")[after].max()) if after.any() else None,
        float(trace.q_max_abs.max()),
        float(ma[v - 1]) if v is not None else None,
        float(ma[-1]), float(err[-1]),
        greedy_agreement(trace.q, q_star) == 1.0,
    )


def write_compare_outputs(rf: RunFile, traces: list[ComparisonTrace], out: str | Path) -> list[tuple]:
    out = Path(out)
    stride = int(rf.trainer.get("log_stride", 100)) or 1
    curves, mas = [], []
    for seed, tr in zip(rf.seeds, traces):
        keep = (tr.steps % stride == 0) | (tr.steps == 1)
        if tr.visited_all_at is not None:
            keep |= tr.steps == tr.visited_all_at
        write_csv(
            out / f"comparison_seed{seed}.csv", COMPARISON_COLUMNS, tr.records[keep].tolist(),
            _meta(rf, "compare", **tr.metadata),
        )
        err = tr.column("main_err")
        curves.append(err)
        mas.append(moving_average(err, rf.moving_average_window))
    cols = ("step",) + tuple(f"err_seed{s}" for s in rf.seeds) + tuple(f"ma_seed{s}" for s in rf.seeds)
    steps = traces[0].steps
    write_csv(
        out / "error_curve.csv", cols, np.column_stack([steps, *curves, *mas]).tolist(),
        _meta(rf, "compare", window=rf.moving_average_window),
    )
    rows = [compare_rows(rf, tr, seed) for seed, tr in zip(rf.seeds, traces)]
    write_csv(out / "compare_summary.csv", COMPARE_SUMMARY_COLUMNS, rows, _meta(rf, "compare", seeds=rf.seeds))
    return rows
