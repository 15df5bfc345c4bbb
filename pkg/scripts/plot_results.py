"""Plot the CSVs written by the reproduction scripts (needs the ``plot`` extra).

    python3 scripts/plot_results.py --fig1 runs/fig1 --fig2 runs/fig2 --out plots
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from syncmbq.artifacts import read_csv, read_table  # noqa: E402


def plot_fig1(run_dir: Path, out: Path) -> None:
    _, cols, data = read_csv(run_dir / "error_curve.csv")
    steps = data[:, 0]
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, c in enumerate(cols):
        if c.startswith("ma_seed"):
            ax.plot(steps, data[:, i], lw=1, label=c.removeprefix("ma_"))
    ax.set_xscale("log")
    ax.set_xlabel("step k")
    ax.set_ylabel(r"moving average of $\|Q_k - Q^*\|_\infty$")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "fig1_error.png", dpi=150)

    first = sorted(run_dir.glob("comparison_seed*.csv"))[0]
    _, cols, data = read_csv(first)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, label in (("main_err", "SyncMBQ"), ("up_err", "upper system"), ("low_err", "lower system")):
        ax.plot(data[:, cols.index("step")], data[:, cols.index(name)], lw=1, label=label)
    ax.set_xscale("log")
    ax.set_xlabel("step k")
    ax.set_ylabel(r"$\infty$-norm error")
    ax.set_title(first.stem)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "fig1_comparison.png", dpi=150)


def plot_fig2(run_dir: Path, out: Path) -> None:
    _, rows = read_table(run_dir / "fig2_table.csv")
    cells = sorted({(r["environment"], r["alpha"]) for r in rows})
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.38
    for j, algo in enumerate(("syncmbq", "qlearning")):
        sel = {(r["environment"], r["alpha"]): r for r in rows if r["algorithm"] == algo}
        xs = [i + (j - 0.5) * width for i in range(len(cells))]
        ax.bar(xs, [float(sel[c]["mean_pct"]) for c in cells], width,
               yerr=[float(sel[c]["std_pct"]) for c in cells], capsize=3, label=algo)
    ax.set_xticks(range(len(cells)), [f"{e}\nalpha={a}" for e, a in cells])
    ax.set_ylabel("greedy success rate (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "fig2_success.png", dpi=150)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fig1", type=Path)
    ap.add_argument("--fig2", type=Path)
    ap.add_argument("--out", type=Path, default=Path("plots"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    if args.fig1:
        plot_fig1(args.fig1, args.out)
    if args.fig2:
        plot_fig2(args.fig2, args.out)


if __name__ == "__main__":
    main()
