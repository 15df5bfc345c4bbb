"""Closed-form concentration bounds and the sample-complexity thresholds.

Tail bounds are evaluated in the log domain; the linear value is
``exp(log_value)`` and may underflow to 0 or exceed 1 (a vacuous bound is
returned as-is, never clamped).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from syncmbq.errors import EpsOutOfValidity, InvalidRange, NonConvergence


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _check_window(eps: float, hi: float, what: str) -> None:
    if eps < 0 or eps * eps > hi:
        raise EpsOutOfValidity(eps, (0.0, hi), what)


# ---------------------------------------------------------------- tail bounds


def log_hoeffding_tail(n: int, eps: float, a: float, b: float) -> float:
    if n < 1 or not b > a or eps < 0:
        raise InvalidRange(f"need n >= 1, b > a, eps >= 0; got n={n}, [{a}, {b}], eps={eps}")
    return math.log(2.0) - 2.0 * n * eps * eps / (b - a) ** 2


def hoeffding_tail(n: int, eps: float, a: float, b: float) -> float:
    """Two-sided Hoeffding bound 2 exp(-2 n eps^2 / (b - a)^2) on a mean of n bounded variables."""
    return _exp(log_hoeffding_tail(n, eps, a, b))


def visitation_window(B: float) -> float:
    return 1.59 / B


def visitation_adjusted_tail(A: float, B: float, eps: float, k: int, d: float) -> float:
    """Lift a per-visit-count tail ``A exp(-t B eps^2)`` to k i.i.d. draws with visit probability d.

    Result: ``A exp(-k d B eps^2 / 2) + exp(-k d)``, valid for eps^2 <= 1.59 / B.
    """
    if not (A > 0 and B > 0):
        raise InvalidRange("A and B must be positive")
    if not 0 < d <= 1 or k < 1:
        raise InvalidRange(f"need 0 < d <= 1 and k >= 1, got d={d}, k={k}")
    _check_window(eps, visitation_window(B), "visitation-adjusted tail")
    return A * _exp(-k * d * B * eps * eps / 2.0) + _exp(-k * d)


@dataclass(frozen=True)
class BoundInputs:
    epsilon: float
    delta: float
    gamma: float
    alpha: float
    d_min: float
    num_pairs: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidRange(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise InvalidRange(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.gamma < 1:
            raise InvalidRange(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 < self.alpha < 1:
            raise InvalidRange(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.d_min <= 1:
            raise InvalidRange(f"d_min must lie in (0, 1], got {self.d_min}")
        if self.num_pairs < 1:
            raise InvalidRange(f"num_pairs must be >= 1, got {self.num_pairs}")
        if self.d_min * self.num_pairs > 1 + 1e-12:
            raise InvalidRange("d_min * num_pairs cannot exceed 1")


def pr_window(gamma: float) -> float:
    return min(3.0, 3.0 / (1.0 - gamma) ** 2)


def w_window(gamma: float) -> float:
    return min(12.0, 12.0 * gamma**2 / (1.0 - gamma) ** 2)


def theorem_window(gamma: float) -> float:
    return 36.0 / (1.0 - gamma) ** 2 * min(12.0, 3.0 * gamma**2 / (1.0 - gamma) ** 2)


def _pr_args(k: int, eps: float, inputs: BoundInputs) -> None:
    if k < 1:
        raise InvalidRange(f"k must be >= 1, got {k}")
    _check_window(eps, pr_window(inputs.gamma), "P_hat/R_hat concentration")


def log_p_tail_bound(k: int, eps: float, inputs: BoundInputs) -> float:
    _pr_args(k, eps, inputs)
    g = inputs.gamma
    return math.log(3 * inputs.num_pairs) - k * inputs.d_min * (1 - g) ** 2 * eps * eps / 4.0


def p_tail_bound(k: int, eps: float, inputs: BoundInputs) -> float:
    """Bound on P(||(P_hat_k - P) Pi* Q*||_inf >= eps)."""
    return _exp(log_p_tail_bound(k, eps, inputs))


def log_r_tail_bound(k: int, eps: float, inputs: BoundInputs) -> float:
    _pr_args(k, eps, inputs)
    return math.log(3 * inputs.num_pairs) - k * inputs.d_min * eps * eps / 4.0


def r_tail_bound(k: int, eps: float, inputs: BoundInputs) -> float:
    """Bound on P(||R_hat_k - R||_inf >= eps)."""
    return _exp(log_r_tail_bound(k, eps, inputs))


def log_w_tail_bound(k: int, eps: float, inputs: BoundInputs) -> float:
    if k < 1:
        raise InvalidRange(f"k must be >= 1, got {k}")
    _check_window(eps, w_window(inputs.gamma), "noise concentration")
    g = inputs.gamma
    return math.log(6 * inputs.num_pairs) - k * inputs.d_min * (1 - g) ** 2 * eps * eps / 16.0


def w_tail_bound(k: int, eps: float, inputs: BoundInputs) -> float:
    """Bound on P(||w_k||_inf >= eps)."""
    return _exp(log_w_tail_bound(k, eps, inputs))


# ---------------------------------------------------------------- sample complexity


def data_collection_length(d_min: float, num_pairs: int, delta: float) -> int:
    """Warm-up length m = ceil(ln(2 |S||A| / delta) / d_min)."""
    if not 0 < d_min <= 1 or num_pairs < 1 or not 0 < delta < 1:
        raise InvalidRange(f"need 0 < d_min <= 1, num_pairs >= 1, 0 < delta < 1; got {d_min}, {num_pairs}, {delta}")
    return math.ceil(math.log(2 * num_pairs / delta) / d_min)


def e3_threshold(m: int, inputs: BoundInputs, max_iter: int = 200) -> int:
    """Smallest integer k with k >= m + 2 + C ln(24 k |S||A| / delta).

    Iterates k <- ceil(rhs(k)) from the log-free lower bound m + 2; the map is
    increasing, so the sequence climbs monotonically to the least solution.
    """
    i = inputs
    C = 1152.0 / (i.epsilon**2 * (1 - i.gamma) ** 4 * i.d_min)

    def rhs(k: int) -> float:
        return m + 2 + C * math.log(24.0 * k * i.num_pairs / i.delta)

    k = m + 2
    for _ in range(max_iter):
        nxt = math.ceil(rhs(k))
        if nxt <= k:
            return k
        k = nxt
    raise NonConvergence(f"E3 threshold did not settle within {max_iter} iterations (last k={k})")


@dataclass
class BoundReport:
    m: int
    threshold_e1: int
    threshold_e2: int
    threshold_e3: int
    k_star: int
    eps_valid: bool
    eps_window: tuple[float, float]
    inputs: dict
    tails: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["eps_window"] = list(self.eps_window)
        return doc

    def table(self) -> str:
        rows = [
            ("m (data collection)", self.m),
            ("E1 threshold", self.threshold_e1),
            ("E2 threshold", self.threshold_e2),
            ("E3 threshold", self.threshold_e3),
            ("k_star", self.k_star),
            ("eps valid", self.eps_valid),
            ("eps^2 window", f"[{self.eps_window[0]:g}, {self.eps_window[1]:g}]"),
        ]
        for name, val in self.tails.items():
            rows.append((name, f"{val['value']:.6g} (log {val['log']:.6g})"))
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {val}" for name, val in rows)


def sample_complexity(inputs: BoundInputs, tail_at: tuple[int, float] | None = None) -> BoundReport:
    """Evaluate m and the three step thresholds; k_star is their maximum.

    With ``tail_at=(k, eps)`` the report also carries the P_hat, R_hat and w
    tail bounds at that point (omitted when eps is outside a bound's validity window).
    """
    i = inputs
    hi = theorem_window(i.gamma)
    if i.epsilon**2 > hi:
        raise EpsOutOfValidity(i.epsilon, (0.0, hi), "sample complexity")
    g, a, eps = i.gamma, i.alpha, i.epsilon
    m = data_collection_length(i.d_min, i.num_pairs, i.delta)
    e1 = math.ceil(m + math.log(6.0 / (eps * (1 - g))) / (a * (1 - g)))
    e2 = math.ceil(4.0 / ((1 - g) * a) * math.log(6.0 / (eps * (1 - g) ** 2)) + m)
    e3 = e3_threshold(m, i)
    # thresholds may sit below m when their log terms are negative
    k_star = max(m, e1, e2, e3)
    tails = {}
    if tail_at is not None:
        k, te = tail_at
        for name, fn in (("p_tail", log_p_tail_bound), ("r_tail", log_r_tail_bound), ("w_tail", log_w_tail_bound)):
            try:
                lv = fn(k, te, i)
            except EpsOutOfValidity:
                continue
            tails[name] = {"k": k, "eps": te, "log": lv, "value": _exp(lv)}
    return BoundReport(m, e1, e2, e3, k_star, True, (0.0, hi), asdict(i), tails)


def error_decomposition(k: int, m: int, alpha: float, gamma: float, eps_prime: float) -> tuple[float, float, float]:
    """The three terms bounding the comparison-system error after step k.

    E1 = 2/(1-g) exp(-(1-g) a (k-m+1)), transient of the initial condition;
    E2 = 2/(1-g)^2 (1-(1-g) a)^(k-m-ceil((k-m)/2)), early-noise tail;
    E3 = 2/(1-g) eps_prime, late-noise contribution.
    """
    if k < m:
        raise InvalidRange(f"need k >= m, got k={k}, m={m}")
    g, a = gamma, alpha
    e1 = 2.0 / (1 - g) * math.exp(-(1 - g) * a * (k - m + 1))
    half = -(-(k - m) // 2)
    e2 = 2.0 / (1 - g) ** 2 * (1 - (1 - g) * a) ** (k - m - half)
    e3 = 2.0 / (1 - g) * eps_prime
    return e1, e2, e3
