"""Regenerate the small MDP fixtures and their golden Q* tables.

The golden tables are computed independently of the package: every
deterministic policy is evaluated exactly in rational arithmetic and the
best one is kept (a finite MDP always has an optimal deterministic policy).

    python3 scripts/make_fixtures.py [--out tests/fixtures]
"""

from __future__ import annotations

import argparse
import itertools
import json
from fractions import Fraction as F
from pathlib import Path

ONE_STATE = {
    "transition": [[[F(1)]]],
    "reward": [[F(1)]],
    "discount": F(9, 10),
}

TWO_STATE_CHAIN = {
    # s0 --a0, r=0--> s1; a1 idles in s0; s1 is absorbing and pays 1
    "transition": [
        [[F(0), F(1)], [F(1), F(0)]],
        [[F(0), F(1)], [F(0), F(1)]],
    ],
    "reward": [[F(0), F(0)], [F(1), F(1)]],
    "discount": F(9, 10),
}

TWO_STATE_STOCHASTIC = {
    # action 0 stays put, action 1 tries to switch state
    "transition": [
        [[F(1), F(0)], [F(1, 5), F(4, 5)]],
        [[F(0), F(1)], [F(1), F(0)]],
    ],
    "reward": [[F(0), F(0)], [F(1), F(1, 2)]],
    "discount": F(9, 10),
}

THREE_STATE = {
    "transition": [
        [[F(1, 2), F(1, 2), F(0)], [F(1, 4), F(1, 4), F(1, 2)]],
        [[F(1, 3), F(1, 3), F(1, 3)], [F(0), F(1, 5), F(4, 5)]],
        [[F(1, 2), F(0), F(1, 2)], [F(1, 10), F(3, 5), F(3, 10)]],
    ],
    "reward": [[F(1, 5), F(-1, 2)], [F(0), F(3, 4)], [F(1), F(-1, 4)]],
    "discount": F(1, 2),
}

INVALID_ROWS = {
    "num_states": 2, "num_actions": 1, "discount": 0.9,
    "reward": [0.0, 1.0],
    "transition": [0.5, 0.4, 0.0, 1.0],
}


def solve(P, v):
    """Gaussian elimination over the rationals: returns x with P x = v."""
    n = len(v)
    M = [row[:] + [v[i]] for i, row in enumerate(P)]
    for c in range(n):
        piv = next(r for r in range(c, n) if M[r][c] != 0)
        M[c], M[piv] = M[piv], M[c]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c] / M[c][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    return [M[i][n] / M[i][i] for i in range(n)]


def exact_q_star(mdp):
    P, R, g = mdp["transition"], mdp["reward"], mdp["discount"]
    S, A = len(P), len(P[0])
    best = None
    for pol in itertools.product(range(A), repeat=S):
        lhs = [[(1 if i == j else 0) - g * P[i][pol[i]][j] for j in range(S)] for i in range(S)]
        v = solve(lhs, [R[i][pol[i]] for i in range(S)])
        if best is None or all(a >= b for a, b in zip(v, best)):
            best = v
    return [[R[s][a] + g * sum(P[s][a][j] * best[j] for j in range(S)) for a in range(A)] for s in range(S)]


def to_json(mdp):
    P, R = mdp["transition"], mdp["reward"]
    S, A = len(P), len(P[0])
    return {
        "num_states": S, "num_actions": A, "discount": float(mdp["discount"]),
        "reward": [float(x) for row in R for x in row],
        "transition": [float(x) for plane in P for row in plane for x in row],
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "fixtures"))
    out = Path(ap.parse_args().out)
    out.mkdir(parents=True, exist_ok=True)
    for name, mdp in (("one_state", ONE_STATE), ("two_state_chain", TWO_STATE_CHAIN),
                      ("two_state_stochastic", TWO_STATE_STOCHASTIC), ("three_state", THREE_STATE)):
        (out / f"{name}.json").write_text(json.dumps(to_json(mdp), indent=1) + "\n")
        q = exact_q_star(mdp)
        golden = {"q": [[float(x) for x in row] for row in q], "exact": [[str(x) for x in row] for row in q]}
        (out / f"{name}_qstar.json").write_text(json.dumps(golden, indent=1) + "\n")
        print(name, golden["exact"])
    (out / "invalid_rows.json").write_text(json.dumps(INVALID_ROWS, indent=1) + "\n")


if __name__ == "__main__":
    main()
