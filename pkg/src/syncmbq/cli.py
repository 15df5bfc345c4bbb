"""Command-line front end.

    syncmbq solve MDP.json                      optimal Q via value iteration
    syncmbq train --config RUN.json             per-seed traces + summary
    syncmbq compare --config RUN.json           comparison-system traces
    syncmbq bound --epsilon ... --num-pairs ... sample-complexity report
    syncmbq verify --k ... --eps ...            Monte Carlo check of tail bounds
    syncmbq eval --env taxi --q Q.json          greedy success rate

Exit codes: 0 ok, 2 invalid input, 3 epsilon outside a bound's window,
4 soundness violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from syncmbq import bounds
from syncmbq.artifacts import read_q, write_csv, write_q
from syncmbq.envs import make_env, random_mdp
from syncmbq.errors import EpsOutOfValidity, MdpValidationError, SandwichViolation
from syncmbq.experiments import (
    compare_seed,
    run_seeds,
    train_seed,
    write_compare_outputs,
    write_train_outputs,
)
from syncmbq.learner import evaluate_greedy
from syncmbq.mdp import bellman_optimality, load_mdp, validate_mdp, value_iteration
from syncmbq.montecarlo import TAIL_NAMES, check_tails
from syncmbq.runfile import DEFAULT_EVAL_LEN, RunFile, RunFileError, parse_seeds

EXIT_OK, EXIT_INVALID, EXIT_WINDOW, EXIT_UNSOUND = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _emit(args, doc: dict, text: str) -> None:
    print(json.dumps(doc, indent=1, sort_keys=True) if args.json else text)


def _load_runfile(args) -> RunFile:
    if not args.config:
        raise CliError(f"{args.command} needs --config <run file>")
    rf = RunFile.load(args.config)
    if args.seeds:
        rf.seeds = parse_seeds(args.seeds)
    if args.out:
        rf.output_dir = args.out
    return rf


# ---------------------------------------------------------------- commands


def cmd_solve(args) -> int:
    mdp = load_mdp(args.mdp_file)
    validate_mdp(mdp)
    q, iters = value_iteration(mdp, tolerance=args.tolerance)
    residual = float(np.max(np.abs(bellman_optimality(mdp, q) - q)))
    out = Path(args.out) / "q_star.json" if args.out else None
    doc = {"iterations": iters, "residual": residual, "tolerance": args.tolerance, "discount": mdp.discount}
    if out is not None:
        write_q(out, q, **doc)
    _emit(args, {**doc, "q": q.tolist(), "path": str(out) if out else None},
          f"Q* ({mdp.num_states} states x {mdp.num_actions} actions), {iters} iterations, "
          f"residual {residual:.3e}\n{np.array2string(q, precision=6)}" + (f"\nwritten to {out}" if out else ""))
    return EXIT_OK


def cmd_train(args) -> int:
    rf = _load_runfile(args)
    results = run_seeds(train_seed, rf, args.threads)
    summary = write_train_outputs(rf, results, rf.output_dir)
    lines = [f"{name}: {m:.4f} +- {s:.4f} (n={n})" for name, (m, s, n) in summary.items()]
    _emit(args, {"output_dir": rf.output_dir, "summary": {k: list(v) for k, v in summary.items()}},
          "\n".join(lines + [f"outputs in {rf.output_dir}"]))
    return EXIT_OK


def cmd_compare(args) -> int:
    rf = _load_runfile(args)
    if rf.environment.episodic:
        raise CliError(f"compare needs a tabular environment with known dynamics, got {rf.environment.name!r}")
    traces = run_seeds(compare_seed, rf, args.threads)
    rows = write_compare_outputs(rf, traces, rf.output_dir)
    doc = {"output_dir": rf.output_dir, "seeds": [
        {"seed": r[0], "visited_all_at": r[1], "sandwich_ok": r[3], "final_ma": r[8]} for r in rows
    ]}
    _emit(args, doc, "\n".join(
        f"seed {r[0]}: visited at {r[1]}, sandwich ok {r[3]}, final moving-average error {r[8]:.4g}" for r in rows
    ) + f"\noutputs in {rf.output_dir}")
    return EXIT_OK


def cmd_bound(args) -> int:
    inputs = bounds.BoundInputs(args.epsilon, args.delta, args.gamma, args.alpha, args.d_min, args.num_pairs)
    tail_at = (args.tail_k, args.tail_eps if args.tail_eps is not None else args.epsilon) if args.tail_k else None
    report = bounds.sample_complexity(inputs, tail_at)
    _emit(args, report.to_dict(), report.table())
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise CliError(f"trials must be >= 1, got {args.trials}")
    mdp = random_mdp(args.num_states, args.num_actions, args.mdp_seed, args.gamma)
    d = np.full(mdp.num_pairs, 1.0 / mdp.num_pairs)
    which = tuple(b.strip() for b in args.bounds.split(",") if b.strip())
    checks = check_tails(mdp, d, args.k, args.eps, args.trials, args.seed, which)
    rows = [(c.bound, c.k, c.eps, c.trials, c.empirical, c.analytic, c.limit, c.vacuous, c.ok) for c in checks]
    if args.out:
        write_csv(Path(args.out) / "verify.csv",
                  ("bound", "k", "eps", "trials", "empirical", "analytic", "limit", "vacuous", "ok"), rows,
                  {"command": "verify", "mdp_seed": args.mdp_seed, "seed": args.seed})
    text = "\n".join(
        f"{c.bound}: empirical {c.empirical:.4f} vs analytic {c.analytic:.4g}"
        + (" (vacuous)" if c.vacuous else f" (limit {c.limit:.4g})") + ("  ok" if c.ok else "  VIOLATION")
        for c in checks
    )
    _emit(args, {"checks": [c.to_dict() for c in checks]}, text)
    return EXIT_OK if all(c.ok for c in checks) else EXIT_UNSOUND


def cmd_eval(args) -> int:
    if args.config:
        rf = RunFile.load(args.config)
        if not rf.environment.episodic:
            raise CliError("eval needs an episodic environment")
        env = rf.build_source()
        episodes = args.episodes or rf.evaluation.episodes
        max_len = args.max_episode_len or rf.eval_len()
        name = rf.environment.name
    elif args.env:
        env = make_env(args.env)
        episodes = args.episodes or 2000
        max_len = args.max_episode_len or DEFAULT_EVAL_LEN.get(args.env, 200)
        name = args.env
    else:
        raise CliError("eval needs --env or --config")
    if not args.q:
        raise CliError("eval needs at least one --q table")
    rows = []
    for i, path in enumerate(args.q):
        q = read_q(path)
        if q.shape != (env.num_states, env.num_actions):
            raise CliError(f"{path}: table shape {q.shape} does not match {name}")
        rows.append((i, path, evaluate_greedy(env, q, episodes, max_len, args.seed + i)))
    if args.out:
        write_csv(Path(args.out) / "eval.csv", ("index", "q_file", "success_rate"), rows,
                  {"command": "eval", "environment": name, "episodes": episodes, "max_episode_len": max_len})
    _emit(args, {"results": [{"q_file": p, "success_rate": s} for _, p, s in rows]},
          "\n".join(f"{p}: success rate {100 * s:.2f}%" for _, p, s in rows))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run file (JSON)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seeds", help="seed list, e.g. 0-19 or 1,5,9 (overrides the run file)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for seeds")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    parser = argparse.ArgumentParser(prog="syncmbq", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve an MDP file for Q*")
    p.add_argument("mdp_file")
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", parents=[common], help="train across seeds")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", parents=[common], help="co-evolve comparison systems across seeds")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bound", parents=[common], help="sample-complexity thresholds")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--d-min", type=float, required=True)
    p.add_argument("--num-pairs", type=int, required=True)
    p.add_argument("--tail-k", type=int, help="also evaluate the tail bounds at this k")
    p.add_argument("--tail-eps", type=float, help="tolerance for the tail bounds (default --epsilon)")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("verify", parents=[common], help="Monte Carlo check of the tail bounds")
    p.add_argument("--k", type=int, default=12_000)
    p.add_argument("--eps", type=float, default=1.7)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-states", type=int, default=4)
    p.add_argument("--num-actions", type=int, default=4)
    p.add_argument("--mdp-seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--bounds", default=",".join(TAIL_NAMES), help="subset of p,r,w")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", parents=[common], help="greedy success rate of saved Q tables")
    p.add_argument("--env", choices=("taxi", "frozenlake8x8"))
    p.add_argument("--q", nargs="+", help="Q-table JSON files")
    p.add_argument("--episodes", type=int)
    p.add_argument("--max-episode-len", type=int)
    p.add_argument("--seed", type=int, default=10_000)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EpsOutOfValidity as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"admissible eps^2 window: [{exc.window[0]:g}, {exc.window[1]:g}]", file=sys.stderr)
        return EXIT_WINDOW
    except SandwichViolation as exc:
        print(f"soundness violation: {exc}", file=sys.stderr)
        return EXIT_UNSOUND
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (MdpValidationError, RunFileError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
