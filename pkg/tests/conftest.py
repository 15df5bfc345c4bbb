from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from syncmbq.mdp import TabularMdp, load_mdp

FIXTURES = Path(__file__).parent / "fixtures"
SHIPPED_MDPS = ("one_state", "two_state_chain", "two_state_stochastic", "three_state")

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def fixture_mdp(name: str) -> TabularMdp:
    return load_mdp(FIXTURES / f"{name}.json")


def golden_q(name: str) -> np.ndarray:
    return np.asarray(json.loads((FIXTURES / f"{name}_qstar.json").read_text())["q"])


def dense_mdp(rng: np.random.Generator, S: int, A: int, gamma: float, sparsity: float = 0.0) -> TabularMdp:
    raw = rng.random((S, A, S))
    if sparsity:
        raw = np.where(rng.random((S, A, S)) < sparsity, 0.0, raw)
        raw[..., 0] += 1e-3  # keep every row non-empty
    P = raw / raw.sum(axis=2, keepdims=True)
    R = rng.uniform(-1, 1, size=(S, A))
    return TabularMdp(P, R, gamma)


@st.composite
def mdps(draw, max_states: int = 5, max_actions: int = 4):
    S = draw(st.integers(1, max_states))
    A = draw(st.integers(1, max_actions))
    gamma = draw(st.floats(0.05, 0.98))
    seed = draw(st.integers(0, 2**32 - 1))
    sparsity = draw(st.sampled_from([0.0, 0.5]))
    return dense_mdp(np.random.default_rng(seed), S, A, gamma, sparsity)


def tables(shape: tuple[int, int], scale: float = 10.0):
    n = shape[0] * shape[1]
    return st.lists(st.floats(-scale, scale), min_size=n, max_size=n).map(lambda v: np.reshape(v, shape))


@pytest.fixture
def chain():
    return fixture_mdp("two_state_chain")


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE: list[str] = []


def report(tag: str, ok: bool, detail: str) -> None:
    """Record (and print) one pass/fail line for the acceptance summary."""
    line = f"[C{tag}] {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s[2:s.index("]")])):
            terminalreporter.write_line(line)
