"""Monte Carlo checks of the concentration bounds on a known MDP.

Each trial draws ``k`` i.i.d. transitions from its own seeded stream, builds
the empirical model from scratch, and measures the three deviations the
bounds speak about:

    p: ||(P_hat - P) Pi* Q*||,   r: ||R_hat - R||,   w: ||w_k||.

A bound is *sound* at (k, eps) when the observed tail frequency does not
exceed ``analytic + 3 sqrt(analytic (1 - analytic) / trials)``; bounds above
1 say nothing and are reported as vacuous.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from syncmbq import bounds
from syncmbq.envs import IidSampler, SamplerSpec, UniformStream
from syncmbq.errors import InvalidRange, SizeMismatch
from syncmbq.estimation import EmpiricalModel
from syncmbq.mdp import TabularMdp, greedy_select, value_iteration
from syncmbq.switched import ORACLE_TOL, noise_vector

TAIL_NAMES = ("p", "r", "w")
_LOG_BOUND = {"p": bounds.log_p_tail_bound, "r": bounds.log_r_tail_bound, "w": bounds.log_w_tail_bound}


@dataclass
class TailCheck:
    bound: str
    k: int
    eps: float
    trials: int
    empirical: float
    analytic: float
    limit: float
    vacuous: bool
    ok: bool

    def to_dict(self) -> dict:
        return asdict(self)


def trial_seeds(seed: int, trials: int) -> np.ndarray:
    """Independent per-trial seeds derived from one master seed."""
    return np.random.SeedSequence(int(seed)).generate_state(trials, dtype=np.uint64)


def _check_args(mdp: TabularMdp, distribution: np.ndarray, k: int, trials: int) -> np.ndarray:
    if trials < 1:
        raise InvalidRange(f"trials must be >= 1, got {trials}")
    if k < 1:
        raise InvalidRange(f"k must be >= 1, got {k}")
    d = np.asarray(distribution, dtype=float).ravel()
    if d.size != mdp.num_pairs:
        raise SizeMismatch(f"distribution has {d.size} entries, MDP has {mdp.num_pairs} pairs")
    return d


def trial_model(mdp: TabularMdp, spec: SamplerSpec, k: int) -> EmpiricalModel:
    """Empirical model after ``k`` i.i.d. transitions drawn with ``spec``."""
    S, A = mdp.shape
    s, a, sp, r = IidSampler(spec, mdp, UniformStream(spec.seed)).draw_arrays(k)
    pair = s * A + a
    counts = np.bincount(pair * S + sp, minlength=S * A * S).reshape(S, A, S)
    rsum = np.bincount(pair, weights=r, minlength=S * A).reshape(S, A)
    return EmpiricalModel.from_counts(counts, rsum)


def tail_deviations(
    mdp: TabularMdp,
    distribution: np.ndarray,
    k: int,
    trials: int,
    seed: int,
    q_star: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Per-trial sup-norm deviations for the ``p``, ``r`` and ``w`` quantities."""
    d = _check_args(mdp, distribution, k, trials)
    if q_star is None:
        q_star, _ = value_iteration(mdp, tolerance=ORACLE_TOL)
    v_star = greedy_select(q_star, q_star)
    pv_star = mdp.transition @ v_star
    out = {name: np.zeros(trials) for name in TAIL_NAMES}
    for i, ts in enumerate(trial_seeds(seed, trials)):
        model = trial_model(mdp, SamplerSpec("iid", d, seed=int(ts)), k)
        out["p"][i] = np.max(np.abs(model.expected_next(v_star) - pv_star))
        out["r"][i] = np.max(np.abs(model.rhat_all() - mdp.reward))
        out["w"][i] = np.max(np.abs(noise_vector(model, mdp, q_star)))
    return out


def _inputs(mdp: TabularMdp, d: np.ndarray, eps: float) -> bounds.BoundInputs:
    # delta and alpha do not enter the tail bounds; any admissible value works
    return bounds.BoundInputs(max(eps, 1e-300), 0.5, mdp.discount, 0.5, float(d.min()), mdp.num_pairs)


def analytic_tail(name: str, mdp: TabularMdp, distribution: np.ndarray, k: int, eps: float) -> float:
    d = np.asarray(distribution, dtype=float).ravel()
    return math.exp(min(_LOG_BOUND[name](k, eps, _inputs(mdp, d, eps)), 700.0))


def judge(name: str, k: int, eps: float, trials: int, empirical: float, analytic: float) -> TailCheck:
    if analytic > 1.0:
        return TailCheck(name, k, eps, trials, empirical, analytic, math.inf, True, True)
    limit = analytic + 3.0 * math.sqrt(analytic * (1.0 - analytic) / trials)
    return TailCheck(name, k, eps, trials, empirical, analytic, limit, False, empirical <= limit)


def check_tails(
    mdp: TabularMdp,
    distribution: np.ndarray,
    k: int,
    eps: float,
    trials: int,
    seed: int,
    which: tuple[str, ...] = TAIL_NAMES,
    q_star: np.ndarray | None = None,
) -> list[TailCheck]:
    """Compare empirical tail frequencies at (k, eps) with the analytic bounds.

    Raises :class:`~syncmbq.errors.EpsOutOfValidity` if eps is outside the
    window of any requested bound (checked before any sampling).
    """
    d = _check_args(mdp, distribution, k, trials)
    unknown = set(which) - set(TAIL_NAMES)
    if unknown:
        raise ValueError(f"unknown bounds {sorted(unknown)}; choose from {TAIL_NAMES}")
    analytic = {name: analytic_tail(name, mdp, d, k, eps) for name in which}
    dev = tail_deviations(mdp, d, k, trials, seed, q_star)
    return [judge(name, k, eps, trials, float(np.mean(dev[name] >= eps)), analytic[name]) for name in which]


def monte_carlo_w_tail(
    mdp: TabularMdp,
    distribution: np.ndarray,
    k: int,
    eps: float,
    trials: int,
    seed: int,
    q_star: np.ndarray | None = None,
) -> tuple[float, float]:
    """Fraction of trials with ``||w_k|| >= eps`` and the analytic bound at (k, eps)."""
    (check,) = check_tails(mdp, distribution, k, eps, trials, seed, ("w",), q_star)
    return check.empirical, check.analytic
