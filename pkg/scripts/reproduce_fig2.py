"""Greedy success rates of SyncMBQ and Q-learning on Taxi and FrozenLake 8x8.

Trains every shipped Fig. 2 run file (two environments x two step sizes x two
algorithms, 20 seeds each), writes each run under ``<out>/<config name>/`` and
collects the mean and population standard deviation of the success rate in
``<out>/fig2_table.csv``.

    python3 scripts/reproduce_fig2.py [--out runs/fig2] [--threads 4]
"""

import argparse
from pathlib import Path

from syncmbq.artifacts import write_csv
from syncmbq.experiments import run_seeds, train_seed, write_train_outputs
from syncmbq.runfile import RunFile

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
ENVS = ("taxi", "frozenlake8x8")
ALPHAS = (0.1, 0.5)
ALGORITHMS = ("syncmbq", "qlearning")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/fig2")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seeds", type=int, help="use only the first N seeds of each run file")
    args = ap.parse_args()

    rows = []
    for env in ENVS:
        for alpha in ALPHAS:
            for algo in ALGORITHMS:
                name = f"{env}_{algo}_alpha{alpha}"
                rf = RunFile.load(CONFIGS / f"{name}.json")
                if args.seeds:
                    rf.seeds = rf.seeds[: args.seeds]
                results = run_seeds(train_seed, rf, args.threads)
                mean, std, n = write_train_outputs(rf, results, Path(args.out) / name)["success_rate_pct"]
                rows.append((env, alpha, algo, mean, std, n))
                print(f"{env:14s} alpha={alpha:<4} {algo:10s} {mean:6.2f} +- {std:5.2f} % (n={n})")
    write_csv(Path(args.out) / "fig2_table.csv", ("environment", "alpha", "algorithm", "mean_pct", "std_pct", "seeds"),
              rows, {"command": "reproduce_fig2"})


if __name__ == "__main__":
    main()
