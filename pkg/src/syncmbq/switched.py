"""Switched-linear-system view of SyncMBQ and its comparison systems.

Writing ``Q~ = Q - Q*``, one SyncMBQ step reads

    Q~_{k+1} = (1 - a) Q~_k + a w_k + a g P_hat_k (Pi^{Q_k} Q_k - Pi^{Q*} Q*),

with the noise vector ``w_k = R_hat_k - R + g (P_hat_k - P) Pi^{Q*} Q*``.
Bounding the last bracket from above and below by ``Pi^{Q_k} Q~_k`` and
``Pi^{Q*} Q~_k`` gives two affine-free recursions

    upper: Q~U <- A^{Q_k} Q~U + a w_k,     lower: Q~L <- A^{Q*} Q~L + a w_k,
    A^{Q} x = (1 - a) x + a g P_hat_k Pi^{Q} x,

that sandwich the true error elementwise, because every ``A^Q`` is a
non-negative matrix. This module evaluates these quantities without forming
any matrix and co-evolves all three recursions on a shared sample stream.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from syncmbq.envs import IidSampler
from syncmbq.errors import SandwichViolation, SizeMismatch
from syncmbq.estimation import EmpiricalModel
from syncmbq.learner import TrainerConfig, _metadata
from syncmbq.mdp import TabularMdp, greedy_actions, value_iteration

COMPARISON_COLUMNS = ("step", "w_inf", "a_norm", "sandwich_ok", "up_err", "low_err", "main_err")
SANDWICH_TOL = 1e-9
ORACLE_TOL = 1e-12


def _check_table(x: np.ndarray, shape: tuple[int, int], what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != shape:
        raise SizeMismatch(f"{what} has shape {x.shape}, expected {shape}")
    return x


def _select(policy_source: np.ndarray, x: np.ndarray) -> np.ndarray:
    return x[np.arange(x.shape[0]), greedy_actions(policy_source)]


def noise_vector(model: EmpiricalModel, mdp: TabularMdp, q_star: np.ndarray) -> np.ndarray:
    """Estimation error of (R_hat, P_hat) along the greedy selection of Q*."""
    if model.shape != mdp.shape:
        raise SizeMismatch(f"model {model.shape} does not match MDP {mdp.shape}")
    q_star = _check_table(q_star, mdp.shape, "q_star")
    v_star = _select(q_star, q_star)
    drift = model.expected_next(v_star) - mdp.transition @ v_star
    return model.rhat_all() - mdp.reward + mdp.discount * drift


def a_matrix_apply(
    model: EmpiricalModel, policy_source: np.ndarray, x: np.ndarray, alpha: float, gamma: float
) -> np.ndarray:
    """Return ``(1 - alpha) x + alpha gamma P_hat Pi^{policy_source} x``."""
    policy_source = _check_table(policy_source, model.shape, "policy_source")
    x = _check_table(x, model.shape, "x")
    return (1.0 - alpha) * x + alpha * gamma * model.expected_next(_select(policy_source, x))


def a_matrix_inf_norm(model: EmpiricalModel, policy_source: np.ndarray, alpha: float, gamma: float) -> float:
    """Induced sup-norm of ``(1 - alpha) I + alpha gamma P_hat Pi^{policy_source}``.

    Every entry of the matrix is non-negative, so the absolute row sum of row
    (s, a) is ``(1 - alpha) + alpha gamma sum_{s'} P_hat(s'|s, a)``: the
    selector puts each next state's mass on exactly one column, so the row
    sum does not depend on which column. A visited row therefore sums to
    ``1 - (1 - gamma) alpha`` and an unvisited (all-zero) row to ``1 - alpha``.
    """
    _check_table(policy_source, model.shape, "policy_source")
    S, A = model.shape
    if S * A == 0:
        return 0.0
    counts = model.transition_counts.reshape(S * A, S)
    n = model.visit_counts.reshape(-1)
    mass = np.zeros(S * A)
    for p in np.flatnonzero(n):
        nxt = model.support[p, : model.support_len[p]]
        mass[p] = counts[p, nxt].sum() / n[p]
    return float(np.max((1.0 - alpha) + alpha * gamma * mass))


@dataclass
class ComparisonState:
    """Error iterates of the upper and lower comparison systems (both minus Q*)."""

    q_upper_tilde: np.ndarray
    q_lower_tilde: np.ndarray
    step: int = 0

    def __post_init__(self):
        self.q_upper_tilde = np.asarray(self.q_upper_tilde, dtype=float)
        self.q_lower_tilde = np.asarray(self.q_lower_tilde, dtype=float)
        if self.q_upper_tilde.shape != self.q_lower_tilde.shape or self.q_upper_tilde.ndim != 2:
            raise SizeMismatch(
                f"comparison iterates have shapes {self.q_upper_tilde.shape} and {self.q_lower_tilde.shape}"
            )

    @classmethod
    def start(cls, q0: np.ndarray, q_star: np.ndarray) -> "ComparisonState":
        """Both systems start at the main iterate's initial error Q_0 - Q*."""
        d = np.asarray(q0, dtype=float) - np.asarray(q_star, dtype=float)
        return cls(d.copy(), d.copy(), 0)


def comparison_step(
    state: ComparisonState,
    model: EmpiricalModel,
    q_current: np.ndarray,
    q_star: np.ndarray,
    w: np.ndarray,
    alpha: float,
    gamma: float,
) -> ComparisonState:
    """Advance both comparison systems; the upper one switches on Q_k, the lower on Q*."""
    shape = model.shape
    if state.q_upper_tilde.shape != shape:
        raise SizeMismatch(f"comparison state {state.q_upper_tilde.shape} does not match model {shape}")
    w = _check_table(w, shape, "w")
    upper = a_matrix_apply(model, q_current, state.q_upper_tilde, alpha, gamma) + alpha * w
    lower = a_matrix_apply(model, q_star, state.q_lower_tilde, alpha, gamma) + alpha * w
    return ComparisonState(upper, lower, state.step + 1)


@dataclass
class ComparisonTrace:
    """Per-step diagnostics of a co-evolved run.

    Row k describes transition k: ``w_inf`` and ``a_norm`` are evaluated on
    the model after recording it, and the three errors are those of the
    iterates after the step's update (no update happens during warm-up).
    """

    records: np.ndarray
    q: np.ndarray
    state: ComparisonState
    q_max_abs: np.ndarray
    metadata: dict
    warmup: int
    visited_all_at: int | None = None
    extra: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.records[:, COMPARISON_COLUMNS.index(name)]

    @property
    def steps(self) -> np.ndarray:
        return self.column("step").astype(np.int64)

    @property
    def sandwich_ok(self) -> bool:
        return bool(np.all(self.column("sandwich_ok") == 1.0))

    def window_event(self, k: int, m: int, eps_prime: float) -> bool:
        """True when ``||w_i|| <= eps_prime`` for every i in [m + ceil((k - m)/2), k]."""
        lo = m + -(-(k - m) // 2)
        steps = self.steps
        sel = (steps >= lo) & (steps <= k)
        return bool(np.all(self.column("w_inf")[sel] <= eps_prime))


def run_with_comparisons(
    mdp: TabularMdp,
    config: TrainerConfig,
    q_star: np.ndarray | None = None,
    tol: float = SANDWICH_TOL,
) -> ComparisonTrace:
    """SyncMBQ plus both comparison systems on one i.i.d. stream, checked every step.

    Raises :class:`SandwichViolation` if ``Q^L - tol <= Q <= Q^U + tol`` fails
    anywhere; this indicates a bug, not an expected outcome.
    """
    if config.sampler.mode != "iid":
        raise ValueError("comparison runs need an iid sampler")
    if config.algorithm != "syncmbq":
        raise ValueError("comparison systems are defined for syncmbq only")
    if config.total_steps is None:
        raise ValueError("comparison runs need total_steps")
    if abs(config.discount - mdp.discount) > 1e-15:
        raise ValueError("config discount differs from the MDP's discount")
    t0 = time.perf_counter()
    if q_star is None:
        q_star, _ = value_iteration(mdp, tolerance=ORACLE_TOL)
    q_star = _check_table(q_star, mdp.shape, "q_star")
    S, A = mdp.shape
    alpha, gamma = config.step_size, config.discount
    warmup = config.resolved_warmup()
    total = config.total_steps

    sampler = IidSampler(config.sampler, mdp)
    model = EmpiricalModel(S, A)
    q = np.full((S, A), float(config.q_init))
    state = ComparisonState.start(q, q_star)
    upper, lower = state.q_upper_tilde, state.q_lower_tilde

    rows = np.arange(S)
    star_idx = greedy_actions(q_star)
    v_star = q_star[rows, star_idx]
    pv_star = mdp.transition @ v_star
    records = np.zeros((total, len(COMPARISON_COLUMNS)))
    q_abs = np.zeros(total)
    visited_at = None
    k = 0
    while k < total:
        s_blk, a_blk, sp_blk, r_blk = sampler.draw_arrays(min(4096, total - k))
        for s, a, sp, r in zip(s_blk.tolist(), a_blk.tolist(), sp_blk.tolist(), r_blk.tolist()):
            k += 1
            model.record(s, a, sp, r)
            if visited_at is None and model.visit_counts.min() > 0:
                visited_at = k
            phat = model.phat()
            rhat = model.rhat_all()
            w = rhat - mdp.reward + gamma * (phat @ v_star - pv_star)
            mass = phat.sum(axis=2)
            a_norm = float(np.max((1.0 - alpha) + alpha * gamma * mass))
            if k > warmup:
                sel_q = greedy_actions(q)
                upper = (1.0 - alpha) * upper + alpha * gamma * (phat @ upper[rows, sel_q]) + alpha * w
                lower = (1.0 - alpha) * lower + alpha * gamma * (phat @ lower[rows, star_idx]) + alpha * w
                q = (1.0 - alpha) * q + alpha * (rhat + gamma * (phat @ q.max(axis=1)))
            err = q - q_star
            lo_bad = err < lower - tol
            hi_bad = err > upper + tol
            if lo_bad.any() or hi_bad.any():
                s_, a_ = np.argwhere(lo_bad | hi_bad)[0]
                raise SandwichViolation(
                    k, (int(s_), int(a_)),
                    float(lower[s_, a_] + q_star[s_, a_]), float(q[s_, a_]), float(upper[s_, a_] + q_star[s_, a_]),
                )
            up_err = float(np.max(np.abs(upper)))
            low_err = float(np.max(np.abs(lower)))
            main_err = float(np.max(np.abs(err)))
            if main_err > max(up_err, low_err) + tol:
                raise AssertionError(f"step {k}: ||Q~|| = {main_err} exceeds max(||Q~U||, ||Q~L||) = {max(up_err, low_err)}")
            records[k - 1] = (k, float(np.max(np.abs(w))), a_norm, 1.0, up_err, low_err, main_err)
            q_abs[k - 1] = float(np.max(np.abs(q)))

    return ComparisonTrace(
        records=records,
        q=q,
        state=ComparisonState(upper, lower, max(0, total - warmup)),
        q_max_abs=q_abs,
        metadata=_metadata(config, "tabular", warmup, time.perf_counter() - t0),
        warmup=warmup,
        visited_all_at=visited_at,
        extra={"model": model, "q_star": q_star},
    )
