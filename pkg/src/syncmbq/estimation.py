"""Empirical transition and reward models built from observed transitions."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from syncmbq.envs import Transition
from syncmbq.errors import IndexOutOfRange, SizeMismatch


class EmpiricalModel:
    """Visit counts N(s, a), transition counts and reward sums.

    Counts are kept raw. The normalised estimates are cached and each
    ``record`` recomputes only the touched row from the integer counts, so
    there is no incremental floating-point drift. The compiled training
    loops write to the count arrays directly; the cache notices through
    ``total_steps`` and is rebuilt on next use.

    ``support`` / ``support_len`` list, per flattened pair, the next states
    seen so far (in order of first appearance).
    """

    def __init__(self, num_states: int, num_actions: int):
        S, A = num_states, num_actions
        self.num_states = S
        self.num_actions = A
        self.visit_counts = np.zeros((S, A), dtype=np.int64)
        self.transition_counts = np.zeros((S, A, S), dtype=np.int64)
        self.reward_sums = np.zeros((S, A))
        self.total_steps = 0
        self.support = np.zeros((S * A, S), dtype=np.int64)
        self.support_len = np.zeros(S * A, dtype=np.int64)
        self._phat: np.ndarray | None = None
        self._rhat: np.ndarray | None = None
        self._cache_steps = -1

    @classmethod
    def like(cls, mdp) -> "EmpiricalModel":
        return cls(mdp.num_states, mdp.num_actions)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_states, self.num_actions)

    def _check(self, s: int, a: int, sp: int | None = None) -> None:
        if not (0 <= s < self.num_states and 0 <= a < self.num_actions):
            raise IndexOutOfRange(f"pair ({s}, {a}) outside {self.shape}")
        if sp is not None and not 0 <= sp < self.num_states:
            raise IndexOutOfRange(f"next state {sp} outside [0, {self.num_states})")

    def record(self, s: int, a: int, next_state: int, reward: float) -> None:
        self._check(s, a, next_state)
        if self.transition_counts[s, a, next_state] == 0:
            p = s * self.num_actions + a
            self.support[p, self.support_len[p]] = next_state
            self.support_len[p] += 1
        fresh = self._cache_steps == self.total_steps
        self.visit_counts[s, a] += 1
        self.transition_counts[s, a, next_state] += 1
        self.reward_sums[s, a] += reward
        self.total_steps += 1
        if fresh:
            n = self.visit_counts[s, a]
            self._phat[s, a] = self.transition_counts[s, a] / n
            self._rhat[s, a] = self.reward_sums[s, a] / n
            self._cache_steps = self.total_steps

    def record_transition(self, t: Transition) -> None:
        self.record(t.state, t.action, t.next_state, t.reward)

    def phat_row(self, s: int, a: int) -> np.ndarray:
        self._check(s, a)
        n = self.visit_counts[s, a]
        if n == 0:
            return np.zeros(self.num_states)
        return self.transition_counts[s, a] / n

    def rhat(self, s: int, a: int) -> float:
        self._check(s, a)
        n = self.visit_counts[s, a]
        return float(self.reward_sums[s, a] / n) if n else 0.0

    def _refresh(self) -> None:
        if self._cache_steps != self.total_steps:
            n = np.maximum(self.visit_counts, 1)
            self._phat = self.transition_counts / n[..., None]
            self._rhat = self.reward_sums / n
            self._cache_steps = self.total_steps

    def phat(self) -> np.ndarray:
        """Full ``(S, A, S)`` estimate; unvisited pairs get all-zero rows. Read-only view."""
        self._refresh()
        view = self._phat.view()
        view.flags.writeable = False
        return view

    def rhat_all(self) -> np.ndarray:
        self._refresh()
        view = self._rhat.view()
        view.flags.writeable = False
        return view

    def expected_next(self, v: np.ndarray) -> np.ndarray:
        """Return ``(P_hat v)(s, a) = sum_s' P_hat(s'|s, a) v(s')`` as an ``(S, A)`` array."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.num_states,):
            raise SizeMismatch(f"state vector has shape {v.shape}, expected ({self.num_states},)")
        return self.phat() @ v

    def all_visited(self) -> bool:
        return bool(self.visit_counts.min() >= 1)

    def copy(self) -> "EmpiricalModel":
        other = EmpiricalModel(self.num_states, self.num_actions)
        other.visit_counts = self.visit_counts.copy()
        other.transition_counts = self.transition_counts.copy()
        other.reward_sums = self.reward_sums.copy()
        other.total_steps = self.total_steps
        other.support = self.support.copy()
        other.support_len = self.support_len.copy()
        return other

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "total_steps": self.total_steps,
            "visit_counts": self.visit_counts.ravel().tolist(),
            "transition_counts": self.transition_counts.ravel().tolist(),
            "reward_sums": self.reward_sums.ravel().tolist(),
        }

    @classmethod
    def from_counts(cls, transition_counts: np.ndarray, reward_sums: np.ndarray) -> "EmpiricalModel":
        """Build a model from an ``(S, A, S)`` count tensor and ``(S, A)`` reward sums.

        The support lists are rebuilt in increasing next-state order.
        """
        counts = np.asarray(transition_counts)
        if counts.ndim != 3 or counts.shape[0] != counts.shape[2]:
            raise SizeMismatch(f"transition counts must have shape (S, A, S), got {counts.shape}")
        if np.any(counts < 0) or not np.array_equal(counts, np.round(counts)):
            raise ValueError("transition counts must be non-negative integers")
        S, A, _ = counts.shape
        rsum = np.asarray(reward_sums, dtype=float)
        if rsum.shape != (S, A):
            raise SizeMismatch(f"reward sums have shape {rsum.shape}, expected {(S, A)}")
        model = cls(S, A)
        model.transition_counts = counts.astype(np.int64)
        model.visit_counts = model.transition_counts.sum(axis=2)
        model.reward_sums = rsum.copy()
        model.total_steps = int(model.visit_counts.sum())
        flat = model.transition_counts.reshape(S * A, S)
        for p in range(S * A):
            (nz,) = np.nonzero(flat[p])
            model.support[p, :nz.size] = nz
            model.support_len[p] = nz.size
        return model

    @classmethod
    def from_dict(cls, doc: dict) -> "EmpiricalModel":
        S, A = int(doc["num_states"]), int(doc["num_actions"])
        counts = np.asarray(doc["transition_counts"], dtype=np.int64).reshape(S, A, S)
        visits = np.asarray(doc["visit_counts"], dtype=np.int64).reshape(S, A)
        if not np.array_equal(counts.sum(axis=2), visits):
            raise ValueError("visit counts disagree with transition counts")
        if visits.sum() != int(doc["total_steps"]):
            raise ValueError("total_steps disagrees with visit counts")
        return cls.from_counts(counts, np.asarray(doc["reward_sums"], dtype=float).reshape(S, A))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmpiricalModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def record_transition(model: EmpiricalModel, t: Transition) -> None:
    model.record_transition(t)


def phat_row(model: EmpiricalModel, s: int, a: int) -> np.ndarray:
    return model.phat_row(s, a)


def rhat(model: EmpiricalModel, s: int, a: int) -> float:
    return model.rhat(s, a)


def all_visited(model: EmpiricalModel) -> bool:
    return model.all_visited()
