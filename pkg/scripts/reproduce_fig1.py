"""Error of SyncMBQ on a random 4x4 MDP, with both comparison systems, over seven seeds.

Writes per-seed comparison traces, ``error_curve.csv`` and ``compare.csv``
into the output directory (default: the run file's ``output_dir``).

    python3 scripts/reproduce_fig1.py [--out runs/fig1] [--threads 4]
"""

import argparse
from pathlib import Path

from syncmbq.cli import main

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "fig1_random4x4.json"


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/fig1")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    raise SystemExit(main(["compare", "--config", str(CONFIG), "--out", args.out, "--threads", str(args.threads)]))
