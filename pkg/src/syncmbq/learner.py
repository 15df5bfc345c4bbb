"""SyncMBQ, the Q-learning baseline, and greedy-policy evaluation.

Each training step first folds the observed transition into the empirical
model and then (after the warm-up stage) applies the damped full-table
update

    Q <- (1 - alpha) Q + alpha (R_hat + gamma P_hat max_a' Q(., a')).

Long runs go through the compiled loops in :mod:`syncmbq._kernels`; the
``engine="python"`` path uses the reference functions below step by step
and consumes the random stream identically.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from syncmbq import _kernels as K
from syncmbq.envs import (
    RNG_NAME,
    EpisodicEnv,
    EpsilonGreedySampler,
    IidSampler,
    SamplerSpec,
    Transition,
    UniformStream,
)
from syncmbq.errors import IndexOutOfRange, SizeMismatch
from syncmbq.estimation import EmpiricalModel
from syncmbq.mdp import TabularMdp, greedy_actions

IID_CHUNK = 1 << 15
EPISODIC_BUFFER = 1 << 18

TRACE_COLUMNS = ("step", "inf_error", "episode_return", "all_visited", "q_max_abs")
EPISODE_COLUMNS = ("episode", "step", "return", "success", "length")


@dataclass
class TrainerConfig:
    step_size: float
    sampler: SamplerSpec
    discount: float = 0.9
    algorithm: str = "syncmbq"
    warmup_steps: int | None = None
    total_steps: int | None = None
    total_episodes: int | None = None
    q_init: float = 0.0
    log_stride: int = 100
    delta: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.step_size < 1.0:
            raise ValueError(f"step_size must lie in (0, 1), got {self.step_size}")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")
        if self.algorithm not in ("syncmbq", "qlearning"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.total_steps is None and self.total_episodes is None:
            raise ValueError("set total_steps or total_episodes")
        for name in ("total_steps", "total_episodes"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ValueError(f"{name} must be positive, got {val}")
        if self.warmup_steps is not None and self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.log_stride < 0:
            raise ValueError("log_stride must be >= 0")

    def resolved_warmup(self) -> int:
        """Warm-up length; defaults to the visitation length m for iid sampling, 0 otherwise."""
        if self.warmup_steps is not None:
            return int(self.warmup_steps)
        if self.sampler.mode == "iid":
            from syncmbq.bounds import data_collection_length

            d = self.sampler.distribution
            return data_collection_length(float(d.min()), d.size, self.delta)
        return 0

    def to_dict(self) -> dict:
        doc = asdict(self)
        sp = doc.pop("sampler")
        doc["sampler"] = {
            "mode": sp["mode"],
            "epsilon": sp["epsilon"],
            "seed": sp["seed"],
            "tie_break": sp["tie_break"],
            "distribution": None if sp["distribution"] is None else np.asarray(sp["distribution"]).tolist(),
        }
        return doc

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunTrace:
    """Logged records of one run.

    ``records`` columns follow ``TRACE_COLUMNS``; ``episodes`` (episodic runs
    only) follows ``EPISODE_COLUMNS``.
    """

    records: np.ndarray
    q: np.ndarray
    metadata: dict
    episodes: np.ndarray = field(default_factory=lambda: np.zeros((0, len(EPISODE_COLUMNS))))
    model: EmpiricalModel | None = None
    visited_all_at: int | None = None

    @property
    def steps(self) -> np.ndarray:
        return self.records[:, 0].astype(np.int64)

    @property
    def inf_error(self) -> np.ndarray:
        return self.records[:, 1]

    @property
    def q_max_abs(self) -> np.ndarray:
        return self.records[:, 4]


# ---------------------------------------------------------------- single steps


def syncmbq_step(
    q: np.ndarray,
    model: EmpiricalModel,
    alpha: float,
    gamma: float,
    terminal: np.ndarray | None = None,
) -> np.ndarray:
    """One SyncMBQ update of every entry; unvisited pairs only decay by (1 - alpha).

    ``terminal`` marks states whose bootstrap value is taken as zero.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != model.shape:
        raise SizeMismatch(f"table shape {q.shape} does not match model {model.shape}")
    v = q.max(axis=1)
    if terminal is not None:
        v = np.where(terminal, 0.0, v)
    return (1.0 - alpha) * q + alpha * (model.rhat_all() + gamma * model.expected_next(v))


def qlearning_step(q: np.ndarray, t: Transition, alpha: float, gamma: float) -> np.ndarray:
    q = np.array(q, dtype=float)
    S, A = q.shape
    if not (0 <= t.state < S and 0 <= t.action < A and 0 <= t.next_state < S):
        raise IndexOutOfRange(f"transition {t} outside table of shape {q.shape}")
    target = t.reward if t.terminal else t.reward + gamma * q[t.next_state].max()
    q[t.state, t.action] += alpha * (target - q[t.state, t.action])
    return q


# ---------------------------------------------------------------- runs


def _iid_visitation_step(pairs_seen: np.ndarray, pairs: np.ndarray, step0: int) -> int | None:
    """Update ``pairs_seen`` with a block; return the global step at which the
    last unseen pair first appears, if the block completes visitation."""
    uniq, first = np.unique(pairs, return_index=True)
    new = ~pairs_seen[uniq]
    pairs_seen[uniq] = True
    if pairs_seen.all():
        return step0 + int(first[new].max()) + 1 if new.any() else None
    return None


def _check_iterate_bound(trace: RunTrace, reward_bound: float, gamma: float, q_init: float) -> None:
    bound = reward_bound / (1.0 - gamma)
    if abs(q_init) > bound or trace.records.size == 0:
        return
    worst = float(np.max(trace.q_max_abs))
    if worst > bound * (1 + 1e-12) + 1e-12:
        raise AssertionError(f"iterate bound broken: max |Q_k| = {worst} > {bound}")


def _metadata(config: TrainerConfig, source_name: str, warmup: int, elapsed: float) -> dict:
    return {
        "source": source_name,
        "algorithm": config.algorithm,
        "seed": config.sampler.seed,
        "rng": RNG_NAME,
        "config_hash": config.digest(),
        "warmup_steps": warmup,
        "wall_time_s": round(elapsed, 3),
    }


def _run_iid(mdp: TabularMdp, config: TrainerConfig, q_star, engine: str) -> RunTrace:
    if config.total_steps is None:
        raise ValueError("iid runs need total_steps")
    if abs(config.discount - mdp.discount) > 1e-15:
        raise ValueError("config discount differs from the MDP's discount")
    t0 = time.perf_counter()
    sampler = IidSampler(config.sampler, mdp)
    warmup = config.resolved_warmup()
    S, A = mdp.shape
    q = np.full((S, A), float(config.q_init))
    model = EmpiricalModel(S, A)
    has_star = q_star is not None
    qs = np.asarray(q_star, dtype=float) if has_star else np.zeros((S, A))
    stride = config.log_stride
    total = config.total_steps
    seen = np.zeros(S * A, dtype=bool)
    visited_at = None
    alpha, gamma = config.step_size, config.discount
    rows = []

    if engine == "compiled":
        terminal = np.zeros(S, dtype=np.bool_)
        v = np.zeros(S)
        done = 0
        while done < total:
            n = min(IID_CHUNK, total - done)
            s, a, sp, r = sampler.draw_arrays(n)
            if visited_at is None:
                visited_at = _iid_visitation_step(seen, s * A + a, done)
            if config.algorithm == "syncmbq":
                log = np.zeros((n // stride + 1 if stride else 1, 4))
                n_log = K.iid_chunk(
                    s, a, sp, r, done, q, model.transition_counts, model.visit_counts,
                    model.reward_sums, model.support, model.support_len,
                    alpha, gamma, warmup, terminal, v, stride, qs, has_star, log, 0,
                )
                rows.append(log[:n_log])
            else:
                for i in range(n):
                    k = done + i + 1
                    t = Transition(int(s[i]), int(a[i]), int(sp[i]), float(r[i]), False, k)
                    model.visit_counts[t.state, t.action] += 1
                    q = qlearning_step(q, t, alpha, gamma)
                    if stride and k % stride == 0:
                        rows.append(np.array([[k, np.max(np.abs(q - qs)) if has_star else np.nan,
                                               float(model.all_visited()), np.max(np.abs(q))]]))
            done += n
        model.total_steps = int(model.visit_counts.sum())
        rec = np.concatenate(rows) if rows else np.zeros((0, 4))
    elif engine == "python":
        for k in range(1, total + 1):
            t = sampler.sample()
            if visited_at is None:
                visited_at = _iid_visitation_step(seen, np.array([t.state * A + t.action]), k - 1)
            if config.algorithm == "syncmbq":
                model.record_transition(t)
                if k > warmup:
                    q = syncmbq_step(q, model, alpha, gamma)
            else:
                model.visit_counts[t.state, t.action] += 1
                q = qlearning_step(q, t, alpha, gamma)
            if stride and k % stride == 0:
                err = float(np.max(np.abs(q - qs))) if has_star else np.nan
                rows.append([k, err, float(model.all_visited()), float(np.max(np.abs(q)))])
        rec = np.array(rows, dtype=float).reshape(-1, 4)
    else:
        raise ValueError(f"unknown engine {engine!r}")

    records = np.column_stack([rec[:, 0], rec[:, 1], np.full(len(rec), np.nan), rec[:, 2], rec[:, 3]])
    trace = RunTrace(
        records=records,
        q=q,
        metadata=_metadata(config, "tabular", warmup, time.perf_counter() - t0),
        model=model if config.algorithm == "syncmbq" else None,
        visited_all_at=visited_at,
    )
    _check_iterate_bound(trace, mdp.reward_bound, gamma, config.q_init)
    return trace


def _run_episodic(env: EpisodicEnv, config: TrainerConfig, q_star, engine: str) -> RunTrace:
    t0 = time.perf_counter()
    spec = config.sampler
    S, A = env.num_states, env.num_actions
    warmup = config.resolved_warmup()
    q = np.full((S, A), float(config.q_init))
    model = EmpiricalModel(S, A)
    has_star = q_star is not None
    qs = np.asarray(q_star, dtype=float) if has_star else np.zeros((S, A))
    stride = config.log_stride
    max_episodes = config.total_episodes if config.total_episodes is not None else np.iinfo(np.int64).max
    max_steps = config.total_steps if config.total_steps is not None else np.iinfo(np.int64).max
    alpha, gamma = config.step_size, config.discount
    algo = K.SYNCMBQ if config.algorithm == "syncmbq" else K.QLEARNING
    stream = UniformStream(spec.seed)

    if engine == "compiled":
        ist = np.zeros(7, dtype=np.int64)
        ist[K.CUR] = -1
        fst = np.array([0.0, np.nan])
        v = np.zeros(S)
        step_logs, ep_logs = [], []
        while ist[K.EPISODES] < max_episodes and ist[K.TOTAL] < max_steps:
            stream.ensure(EPISODIC_BUFFER)
            room = (stream.buf.size - stream.pos) // 2 + 2
            step_log = np.zeros((room // max(stride, 1) + 2, 5))
            ep_log = np.zeros((room, 5))
            ist[K.N_STEP_LOG] = 0
            ist[K.N_EP_LOG] = 0
            stream.pos = K.episodic_chunk(
                stream.buf, stream.pos, ist, fst,
                q, model.transition_counts, model.visit_counts, model.reward_sums,
                model.support, model.support_len,
                env.support_next, env.support_cum, env.support_reward,
                env.terminal, env.success, env.start_cum,
                spec.epsilon, spec.tie_break == "random", alpha, gamma, algo, warmup, env.max_episode_steps,
                max_episodes, max_steps, v, stride, qs, has_star, step_log, ep_log,
            )
            step_logs.append(step_log[:ist[K.N_STEP_LOG]])
            ep_logs.append(ep_log[:ist[K.N_EP_LOG]])
        records = np.concatenate(step_logs)
        episodes = np.concatenate(ep_logs)
    elif engine == "python":
        sampler = EpsilonGreedySampler(spec, env, stream)
        rows, eps_rows = [], []
        ep_ret, last_ret, n_eps, k = 0.0, np.nan, 0, 0
        while n_eps < max_episodes and k < max_steps:
            if sampler.state is None:
                ep_ret = 0.0
            t = sampler.sample(q)
            k = t.step_index
            ep_ret += t.reward
            if algo == K.SYNCMBQ:
                model.record_transition(t)
                if k > warmup:
                    q = syncmbq_step(q, model, alpha, gamma, env.terminal)
            else:
                model.visit_counts[t.state, t.action] += 1
                q = qlearning_step(q, t, alpha, gamma)
            if sampler.state is None:
                eps_rows.append([n_eps, k, ep_ret, float(env.success[t.next_state]), sampler.episode_steps])
                n_eps += 1
                last_ret = ep_ret
            if stride and k % stride == 0:
                err = float(np.max(np.abs(q - qs))) if has_star else np.nan
                rows.append([k, err, last_ret, float(model.all_visited()), float(np.max(np.abs(q)))])
        records = np.array(rows, dtype=float).reshape(-1, 5)
        episodes = np.array(eps_rows, dtype=float).reshape(-1, 5)
    else:
        raise ValueError(f"unknown engine {engine!r}")

    model.total_steps = int(model.visit_counts.sum())
    visited = records[:, 3] > 0 if len(records) else np.zeros(0, dtype=bool)
    trace = RunTrace(
        records=records,
        q=q,
        metadata=_metadata(config, env.name, warmup, time.perf_counter() - t0),
        episodes=episodes,
        model=model if config.algorithm == "syncmbq" else None,
        visited_all_at=int(records[np.argmax(visited), 0]) if visited.any() else None,
    )
    _check_iterate_bound(trace, env.mdp.reward_bound, gamma, config.q_init)
    return trace


def train(source, config: TrainerConfig, q_star: np.ndarray | None = None, engine: str = "compiled") -> RunTrace:
    """Run ``config.algorithm`` on a TabularMdp (iid sampling) or an EpisodicEnv (epsilon-greedy)."""
    if isinstance(source, TabularMdp):
        if config.sampler.mode != "iid":
            raise ValueError("tabular sources need an iid sampler")
        return _run_iid(source, config, q_star, engine)
    if isinstance(source, EpisodicEnv):
        if config.sampler.mode != "epsilon_greedy":
            raise ValueError("episodic sources need an epsilon_greedy sampler")
        return _run_episodic(source, config, q_star, engine)
    raise TypeError(f"unsupported source {type(source).__name__}")


def run_syncmbq(source, config: TrainerConfig, q_star=None, engine: str = "compiled") -> RunTrace:
    if config.algorithm != "syncmbq":
        raise ValueError("config.algorithm must be 'syncmbq'")
    return train(source, config, q_star, engine)


def run_qlearning(source, config: TrainerConfig, q_star=None, engine: str = "compiled") -> RunTrace:
    if config.algorithm != "qlearning":
        raise ValueError("config.algorithm must be 'qlearning'")
    return train(source, config, q_star, engine)


# ---------------------------------------------------------------- evaluation


def evaluate_greedy(env: EpisodicEnv, q: np.ndarray, episodes: int, max_episode_len: int, seed: int) -> float:
    """Success rate of the greedy policy of ``q`` over independent episodes.

    Episodes run in lock-step; each step consumes one uniform per episode.
    Episodes cut off at ``max_episode_len`` count as failures.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    stream = UniformStream(seed)
    policy = greedy_actions(np.asarray(q))
    state = np.searchsorted(env.start_cum, stream.take(episodes), side="right")
    active = np.ones(episodes, dtype=bool)
    won = np.zeros(episodes, dtype=bool)
    for _ in range(max_episode_len):
        u = stream.take(episodes)
        a = policy[state]
        cum = env.support_cum[state, a]
        j = (cum <= u[:, None]).sum(axis=1)
        nxt = env.support_next[state, a, j]
        state = np.where(active, nxt, state)
        hit = active & env.terminal[state]
        won |= hit & env.success[state]
        active &= ~hit
        if not active.any():
            break
    return float(won.mean())


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average; early entries average over what is available.

    A window longer than the series gives the running mean of the full prefix,
    so the last entry is then the full-series mean.
    """
    x = np.asarray(x, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def greedy_agreement(q: np.ndarray, q_ref: np.ndarray) -> float:
    """Fraction of states whose greedy actions coincide."""
    return float(np.mean(greedy_actions(q) == greedy_actions(q_ref)))


def nan_to_none(x: float):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x
