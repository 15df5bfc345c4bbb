"""Finite MDPs, the greedy selector, the Bellman optimality operator and a
value-iteration oracle.

Q-tables are plain float arrays of shape ``(num_states, num_actions)``; their
row-major flattening is the state-action vector used throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from syncmbq.errors import (
    DiscountOutOfRange,
    NegativeProbability,
    NonConvergence,
    RowNotStochastic,
    SizeMismatch,
)

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Ground-truth finite MDP.

    transition: ``(S, A, S)`` array, ``transition[s, a, s']`` = P(s' | s, a).
    reward: ``(S, A)`` expected reward R(s, a).
    next_reward: optional ``(S, A, S)`` array of outcome rewards r(s, a, s').
        When given, ``reward`` must equal its expectation under ``transition``
        and samplers emit these; otherwise samplers emit ``reward[s, a]``.
    reward_bound: max |r| over reachable outcomes; computed when omitted.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    reward_bound: float | None = None
    next_reward: np.ndarray | None = None

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        R = np.array(self.reward, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise SizeMismatch(f"transition must have shape (S, A, S), got {P.shape}")
        if R.shape != P.shape[:2]:
            raise SizeMismatch(f"reward shape {R.shape} does not match {P.shape[:2]}")
        P.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "discount", float(self.discount))
        if self.next_reward is not None:
            NR = np.array(self.next_reward, dtype=float)
            if NR.shape != P.shape:
                raise SizeMismatch(f"next_reward shape {NR.shape} does not match {P.shape}")
            NR.setflags(write=False)
            object.__setattr__(self, "next_reward", NR)
        if self.reward_bound is None:
            if self.next_reward is not None:
                rmax = float(np.max(np.abs(np.where(P > 0, self.next_reward, 0.0))))
            else:
                rmax = float(np.max(np.abs(R))) if R.size else 0.0
            object.__setattr__(self, "reward_bound", rmax)
        else:
            object.__setattr__(self, "reward_bound", float(self.reward_bound))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_pairs(self) -> int:
        return self.num_states * self.num_actions

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_states, self.num_actions)

    def to_dict(self) -> dict:
        doc = {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "discount": self.discount,
            "reward_bound": self.reward_bound,
            "reward": self.reward.ravel().tolist(),
            "transition": self.transition.ravel().tolist(),
        }
        if self.next_reward is not None:
            doc["next_reward"] = self.next_reward.ravel().tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMdp":
        S, A = int(doc["num_states"]), int(doc["num_actions"])
        P = np.asarray(doc["transition"], dtype=float)
        R = np.asarray(doc["reward"], dtype=float)
        if P.size != S * A * S or R.size != S * A:
            raise SizeMismatch(
                f"flat arrays have {R.size} rewards / {P.size} transitions, "
                f"expected {S * A} / {S * A * S}"
            )
        nr = doc.get("next_reward")
        return cls(
            transition=P.reshape(S, A, S),
            reward=R.reshape(S, A),
            discount=doc["discount"],
            reward_bound=doc.get("reward_bound"),
            next_reward=None if nr is None else np.asarray(nr, dtype=float).reshape(S, A, S),
        )


def validate_mdp(mdp: TabularMdp) -> None:
    P = mdp.transition
    neg = np.argwhere(P < 0)
    if len(neg):
        s, a, sp = (int(i) for i in neg[0])
        raise NegativeProbability(s, a, sp, float(P[s, a, sp]))
    sums = P.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if len(bad):
        s, a = (int(i) for i in bad[0])
        raise RowNotStochastic(s, a, float(sums[s, a]))
    if not 0.0 < mdp.discount < 1.0:
        raise DiscountOutOfRange(mdp.discount)
    if np.any(np.abs(mdp.reward) > mdp.reward_bound + 1e-12):
        raise ValueError("reward exceeds reward_bound")


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise SizeMismatch(f"tables have shapes {a.shape} and {b.shape}")


def greedy_actions(q: np.ndarray) -> np.ndarray:
    """Greedy action per state; ties go to the lowest action index."""
    return np.argmax(q, axis=1)


def greedy_select(policy_source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Return V(s) = target(s, argmax_a policy_source(s, a))."""
    policy_source = np.asarray(policy_source)
    target = np.asarray(target)
    _check_same(policy_source, target)
    idx = greedy_actions(policy_source)
    return target[np.arange(target.shape[0]), idx]


def bellman_optimality(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != mdp.shape:
        raise SizeMismatch(f"table shape {q.shape} does not match MDP {mdp.shape}")
    return mdp.reward + mdp.discount * (mdp.transition @ q.max(axis=1))


def value_iteration(
    mdp: TabularMdp,
    tolerance: float = 1e-10,
    max_iterations: int = 10**7,
    q0: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """Iterate the Bellman operator until ``||Q - Q*|| <= tolerance`` is certified.

    Stops once the residual ``||TQ - Q||`` is at most ``tolerance * (1 - g) / g``
    and returns ``TQ``: its own residual is at most ``g`` times smaller, and
    by contraction ``||TQ - Q*|| <= g / (1 - g) * ||TQ - Q||`` is within tolerance.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    g = mdp.discount
    stop = tolerance * (1.0 - g) / g
    q = np.zeros(mdp.shape) if q0 is None else np.array(q0, dtype=float)
    for it in range(1, max_iterations + 1):
        tq = bellman_optimality(mdp, q)
        if np.max(np.abs(tq - q)) <= stop:
            return tq, it
        q = tq
    raise NonConvergence(f"value iteration did not reach residual {stop:g} in {max_iterations} iterations")


def inf_norm_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same(a, b)
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def save_mdp(mdp: TabularMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=1) + "\n")


def load_mdp(path: str | Path) -> TabularMdp:
    return TabularMdp.from_dict(json.loads(Path(path).read_text()))
