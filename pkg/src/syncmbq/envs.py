"""Sampling sources: random MDPs, FrozenLake 8x8, Taxi, the i.i.d. state-action
sampler and the epsilon-greedy episodic sampler.

All randomness is drawn from a :class:`UniformStream`, a buffered stream of
uniform doubles from a seeded PCG64 generator. Every sampler consumes a fixed,
documented number of uniforms per draw, so the compiled training loops in
:mod:`syncmbq._kernels` can replay exactly the same stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from syncmbq.errors import InvalidDimensions, ModeMismatch, SizeMismatch
from syncmbq.mdp import TabularMdp

RNG_NAME = "numpy.PCG64"
STREAM_CHUNK = 1 << 16

FROZENLAKE_8X8 = (
    "SFFFFFFF",
    "FFFFFFFF",
    "FFFHFFFF",
    "FFFFFHFF",
    "FFFHFFFF",
    "FHHFFFHF",
    "FHFFHFHF",
    "FFFHFFFG",
)

TAXI_MAP = (
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
)
TAXI_DEPOTS = ((0, 0), (0, 4), (4, 0), (4, 3))


class UniformStream:
    """Seeded stream of uniforms on [0, 1), generated in fixed-size chunks.

    ``buf[pos:]`` holds the not-yet-consumed values; compiled loops read the
    buffer directly and hand back the new position.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self.buf = self._rng.random(STREAM_CHUNK)
        self.pos = 0

    def ensure(self, n: int) -> None:
        """Make at least ``n`` unconsumed values available."""
        if self.buf.size - self.pos >= n:
            return
        rest = self.buf[self.pos:]
        chunks = [rest]
        have = rest.size
        while have < n:
            chunks.append(self._rng.random(STREAM_CHUNK))
            have += STREAM_CHUNK
        self.buf = np.concatenate(chunks)
        self.pos = 0

    def take(self, n: int) -> np.ndarray:
        self.ensure(n)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def next(self) -> float:
        if self.pos >= self.buf.size:
            self.ensure(1)
        u = self.buf[self.pos]
        self.pos += 1
        return float(u)


def cumulative(probs: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis for inverse-CDF sampling.

    The entry of the last positive probability (and everything after it) is
    set to +inf, so ``searchsorted(cum, u, "right")`` never runs past the
    support because of rounding in the row sum.
    """
    probs = np.asarray(probs, dtype=float)
    cum = np.cumsum(probs, axis=-1)
    positive = probs > 0
    idx = np.arange(probs.shape[-1])
    last = np.where(positive, idx, -1).max(axis=-1, keepdims=True)
    return np.where(idx >= np.maximum(last, 0), np.inf, cum)


# ---------------------------------------------------------------- transitions


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    next_state: int
    reward: float
    terminal: bool = False
    step_index: int = 0


# ---------------------------------------------------------------- episodic env


class EpisodicEnv:
    """Episodic environment backed by an exact tabular model.

    ``mdp`` is the tabular view: terminal states are absorbing with zero
    reward, so value iteration on it yields the episodic Q*. Stepping samples
    from the same probabilities through a compact support table.
    """

    def __init__(
        self,
        name: str,
        mdp: TabularMdp,
        terminal: np.ndarray,
        success: np.ndarray,
        start_distribution: np.ndarray,
        max_episode_steps: int,
    ):
        self.name = name
        self.mdp = mdp
        self.terminal = np.asarray(terminal, dtype=bool)
        self.success = np.asarray(success, dtype=bool)
        self.start_distribution = np.asarray(start_distribution, dtype=float)
        self.max_episode_steps = int(max_episode_steps)
        self.start_cum = cumulative(self.start_distribution)
        self._build_support()

    @property
    def num_states(self) -> int:
        return self.mdp.num_states

    @property
    def num_actions(self) -> int:
        return self.mdp.num_actions

    def _build_support(self) -> None:
        P = self.mdp.transition
        S, A, _ = P.shape
        width = int((P > 0).sum(axis=2).max())
        nxt = np.zeros((S, A, width), dtype=np.int64)
        prob = np.zeros((S, A, width))
        rew = np.zeros((S, A, width))
        nr = self.mdp.next_reward
        for s in range(S):
            for a in range(A):
                (sup,) = np.nonzero(P[s, a])
                k = sup.size
                nxt[s, a, :k] = sup
                nxt[s, a, k:] = sup[-1]
                prob[s, a, :k] = P[s, a, sup]
                r = nr[s, a, sup] if nr is not None else np.full(k, self.mdp.reward[s, a])
                rew[s, a, :k] = r
                rew[s, a, k:] = r[-1]
        self.support_next = nxt
        self.support_prob = prob
        self.support_cum = cumulative(prob)
        self.support_reward = rew

    def reset(self, stream: UniformStream) -> int:
        """Draw a start state; consumes one uniform."""
        return int(np.searchsorted(self.start_cum, stream.next(), side="right"))

    def step(self, state: int, action: int, stream: UniformStream) -> tuple[int, float, bool]:
        """Sample one transition; consumes one uniform."""
        j = int(np.searchsorted(self.support_cum[state, action], stream.next(), side="right"))
        nxt = int(self.support_next[state, action, j])
        return nxt, float(self.support_reward[state, action, j]), bool(self.terminal[nxt])

    def __repr__(self) -> str:
        return f"EpisodicEnv({self.name!r}, S={self.num_states}, A={self.num_actions})"


# ---------------------------------------------------------------- generators


def random_mdp(num_states: int, num_actions: int, seed: int, discount: float = 0.9) -> TabularMdp:
    """Random MDP with an absorbing zero-reward terminal state ``num_states - 1``.

    Transition rows normalise positive uniform draws; outcome rewards
    r(s, a, s') are uniform on [-1, 1], so the expected rewards lie in [-1, 1]
    as well. State 0 is the designated start.
    """
    if num_states < 2 or num_actions < 1:
        raise InvalidDimensions(f"need num_states >= 2 and num_actions >= 1, got {num_states}, {num_actions}")
    rng = np.random.default_rng(seed)
    S, A = num_states, num_actions
    raw = 1.0 - rng.random((S, A, S))  # (0, 1]
    P = raw / raw.sum(axis=2, keepdims=True)
    r = rng.uniform(-1.0, 1.0, size=(S, A, S))
    term = S - 1
    P[term] = 0.0
    P[term, :, term] = 1.0
    r[term] = 0.0
    R = np.einsum("ijk,ijk->ij", P, r)
    return TabularMdp(transition=P, reward=R, discount=discount, next_reward=r)


def frozenlake8x8(discount: float = 0.9, max_episode_steps: int = 200) -> EpisodicEnv:
    """Slippery FrozenLake on the standard 8x8 map.

    Actions: 0 left, 1 down, 2 right, 3 up. The intended move and both
    perpendicular moves each happen with probability 1/3; moving into a wall
    leaves the agent in place. Holes and the goal end the episode; reaching
    the goal pays 1.
    """
    desc = FROZENLAKE_8X8
    n = len(desc)
    S, A = n * n, 4
    moves = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}
    cells = "".join(desc)
    terminal = np.array([c in "HG" for c in cells])
    success = np.array([c == "G" for c in cells])
    goal = cells.index("G")
    P = np.zeros((S, A, S))
    NR = np.zeros((S, A, S))
    for s in range(S):
        if terminal[s]:
            P[s, :, s] = 1.0
            continue
        row, col = divmod(s, n)
        for a in range(A):
            for b in ((a - 1) % 4, a, (a + 1) % 4):
                dr, dc = moves[b]
                r2 = min(max(row + dr, 0), n - 1)
                c2 = min(max(col + dc, 0), n - 1)
                P[s, a, r2 * n + c2] += 1.0 / 3.0
            NR[s, a, goal] = 1.0
    R = np.einsum("ijk,ijk->ij", P, NR)
    mdp = TabularMdp(transition=P, reward=R, discount=discount, next_reward=NR, reward_bound=1.0)
    start = np.zeros(S)
    start[cells.index("S")] = 1.0
    return EpisodicEnv("frozenlake8x8", mdp, terminal, success, start, max_episode_steps)


def taxi_encode(row: int, col: int, passenger: int, destination: int) -> int:
    return ((row * 5 + col) * 5 + passenger) * 4 + destination


def taxi_decode(state: int) -> tuple[int, int, int, int]:
    state, dest = divmod(state, 4)
    state, passenger = divmod(state, 5)
    row, col = divmod(state, 5)
    return row, col, passenger, dest


def taxi(discount: float = 0.9, max_episode_steps: int = 200) -> EpisodicEnv:
    """Deterministic Taxi on the standard 5x5 map with four depots.

    Actions: 0 south, 1 north, 2 east, 3 west, 4 pickup, 5 dropoff. Each step
    costs 1; an illegal pickup or dropoff costs 10; dropping the passenger at
    the destination pays 20 and ends the episode. Passenger location 4 means
    in the taxi. Episodes start uniformly in one of the 300 states with the
    passenger waiting at a depot other than the destination.
    """
    S, A = 500, 6
    desc = TAXI_MAP
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    terminal = np.zeros(S, dtype=bool)
    start = np.zeros(S)
    for s in range(S):
        row, col, pas, dest = taxi_decode(s)
        if pas == dest:
            terminal[s] = True
            P[s, :, s] = 1.0
            continue
        if pas < 4:
            start[s] = 1.0
        for a in range(A):
            r2, c2, p2 = row, col, pas
            reward = -1.0
            if a == 0:
                r2 = min(row + 1, 4)
            elif a == 1:
                r2 = max(row - 1, 0)
            elif a == 2 and desc[1 + row][2 * col + 2] == ":":
                c2 = min(col + 1, 4)
            elif a == 3 and desc[1 + row][2 * col] == ":":
                c2 = max(col - 1, 0)
            elif a == 4:
                if pas < 4 and (row, col) == TAXI_DEPOTS[pas]:
                    p2 = 4
                else:
                    reward = -10.0
            elif a == 5:
                if pas == 4 and (row, col) == TAXI_DEPOTS[dest]:
                    p2 = dest
                    reward = 20.0
                elif pas == 4 and (row, col) in TAXI_DEPOTS:
                    p2 = TAXI_DEPOTS.index((row, col))
                else:
                    reward = -10.0
            P[s, a, taxi_encode(r2, c2, p2, dest)] = 1.0
            R[s, a] = reward
    start /= start.sum()
    mdp = TabularMdp(transition=P, reward=R, discount=discount, reward_bound=20.0)
    return EpisodicEnv("taxi", mdp, terminal, terminal.copy(), start, max_episode_steps)


ENVIRONMENTS = {"frozenlake8x8": frozenlake8x8, "taxi": taxi}


def make_env(name: str, **kwargs) -> EpisodicEnv:
    try:
        return ENVIRONMENTS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown episodic environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None


# ---------------------------------------------------------------- samplers


@dataclass
class SamplerSpec:
    mode: str
    distribution: np.ndarray | None = None
    epsilon: float = 0.1
    seed: int = 0
    tie_break: str = "random"

    def __post_init__(self):
        if self.mode not in ("iid", "epsilon_greedy"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if self.mode == "iid":
            if self.distribution is None:
                raise ValueError("iid sampler needs a state-action distribution")
            d = np.asarray(self.distribution, dtype=float).ravel()
            if np.any(d < 0) or abs(d.sum() - 1.0) > 1e-12:
                raise ValueError("distribution must be non-negative and sum to 1")
            self.distribution = d
        elif not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.tie_break not in ("random", "lowest"):
            raise ValueError(f"tie_break must be 'random' or 'lowest', got {self.tie_break!r}")
        self.seed = int(self.seed)

    @property
    def d_min(self) -> float:
        return float(self.distribution.min())

    @classmethod
    def uniform(cls, num_pairs: int, seed: int = 0) -> "SamplerSpec":
        return cls("iid", np.full(num_pairs, 1.0 / num_pairs), seed=seed)


class IidSampler:
    """Draws (s, a) ~ d and s' ~ P(.|s, a); two uniforms per transition."""

    def __init__(self, spec: SamplerSpec, mdp: TabularMdp, stream: UniformStream | None = None):
        if spec.mode != "iid":
            raise ModeMismatch(f"IidSampler needs an iid spec, got {spec.mode!r}")
        if spec.distribution.size != mdp.num_pairs:
            raise SizeMismatch(f"distribution has {spec.distribution.size} entries, MDP has {mdp.num_pairs} pairs")
        self.spec = spec
        self.mdp = mdp
        self.stream = stream or UniformStream(spec.seed)
        self.pair_cum = cumulative(spec.distribution)
        self.next_cum = cumulative(mdp.transition.reshape(mdp.num_pairs, -1))
        nr = mdp.next_reward
        self._reward = (
            nr.reshape(mdp.num_pairs, -1) if nr is not None
            else np.repeat(mdp.reward.reshape(-1, 1), mdp.num_states, axis=1)
        )
        self.steps = 0

    def draw_arrays(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised draw of ``n`` transitions: (states, actions, next_states, rewards)."""
        u = self.stream.take(2 * n).reshape(n, 2)
        pairs = np.searchsorted(self.pair_cum, u[:, 0], side="right")
        cum = self.next_cum[pairs]
        nxt = (cum <= u[:, 1:2]).sum(axis=1)
        s, a = np.divmod(pairs, self.mdp.num_actions)
        self.steps += n
        return s, a, nxt, self._reward[pairs, nxt]

    def sample(self) -> Transition:
        s, a, nxt, r = self.draw_arrays(1)
        return Transition(int(s[0]), int(a[0]), int(nxt[0]), float(r[0]), False, self.steps)


def iid_sample(sampler: IidSampler) -> Transition:
    return sampler.sample()


class EpsilonGreedySampler:
    """Behaviour-policy sampler on an episodic environment.

    Uniform budget per call: one to reset if no episode is running, then
    always three: the explore coin, the action draw (uniform action when
    exploring, otherwise the pick among tied greedy actions) and the
    environment step. Ties among greedy actions are broken uniformly at
    random unless ``spec.tie_break == "lowest"``. Episodes end on a terminal
    state or after ``env.max_episode_steps`` steps.
    """

    def __init__(self, spec: SamplerSpec, env: EpisodicEnv, stream: UniformStream | None = None):
        if spec.mode != "epsilon_greedy":
            raise ModeMismatch(f"EpsilonGreedySampler needs an epsilon_greedy spec, got {spec.mode!r}")
        self.spec = spec
        self.env = env
        self.stream = stream or UniformStream(spec.seed)
        self.state: int | None = None
        self.episode_steps = 0
        self.steps = 0

    def choose(self, q: np.ndarray, state: int) -> int:
        coin, c = self.stream.next(), self.stream.next()
        if coin < self.spec.epsilon:
            return min(int(c * self.env.num_actions), self.env.num_actions - 1)
        row = q[state]
        (ties,) = np.nonzero(row == row.max())
        if self.spec.tie_break == "lowest":
            return int(ties[0])
        return int(ties[min(int(c * ties.size), ties.size - 1)])

    def sample(self, q: np.ndarray) -> Transition:
        if self.state is None:
            self.state = self.env.reset(self.stream)
            self.episode_steps = 0
        s = self.state
        a = self.choose(q, s)
        nxt, r, term = self.env.step(s, a, self.stream)
        self.steps += 1
        self.episode_steps += 1
        if term or self.episode_steps >= self.env.max_episode_steps:
            self.state = None
        else:
            self.state = nxt
        return Transition(s, a, nxt, r, term, self.steps)


def egreedy_sample(sampler: EpsilonGreedySampler, q: np.ndarray) -> Transition:
    return sampler.sample(q)
