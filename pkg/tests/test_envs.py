import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from syncmbq import InvalidDimensions, ModeMismatch, SizeMismatch, validate_mdp
from syncmbq.envs import (
    EpsilonGreedySampler,
    IidSampler,
    SamplerSpec,
    UniformStream,
    cumulative,
    frozenlake8x8,
    iid_sample,
    make_env,
    random_mdp,
    taxi,
    taxi_decode,
    taxi_encode,
)
from syncmbq.mdp import greedy_actions, value_iteration


def mc_tol(p, n, z=4.0):
    return z * np.sqrt(p * (1 - p) / n)


@pytest.fixture(scope="module")
def lake():
    return frozenlake8x8()


@pytest.fixture(scope="module")
def cab():
    return taxi()


class TestUniformStream:
    def test_deterministic(self):
        a, b = UniformStream(3), UniformStream(3)
        np.testing.assert_array_equal(a.take(100_000), b.take(100_000))

    def test_chunking_is_invisible(self):
        a, b = UniformStream(5), UniformStream(5)
        whole = a.take(200_000)
        parts = np.concatenate([b.take(70_000), [b.next()], b.take(129_999)])
        np.testing.assert_array_equal(whole, parts)


class TestCumulative:
    def test_last_positive_is_infinite(self):
        cum = cumulative(np.array([0.3, 0.7, 0.0]))
        assert cum[0] == pytest.approx(0.3)
        assert np.isinf(cum[1]) and np.isinf(cum[2])

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=8).filter(lambda v: sum(v) > 0), st.floats(0, 1, exclude_max=True))
    def test_draw_lands_on_support(self, w, u):
        p = np.asarray(w) / np.sum(w)
        j = int(np.searchsorted(cumulative(p), u, side="right"))
        assert p[j] > 0


class TestRandomMdp:
    def test_shape_and_validity(self):
        mdp = random_mdp(4, 4, seed=7)
        assert mdp.shape == (4, 4)
        validate_mdp(mdp)
        np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)

    def test_same_seed_identical(self):
        a, b = random_mdp(4, 4, 7), random_mdp(4, 4, 7)
        np.testing.assert_array_equal(a.transition, b.transition)
        np.testing.assert_array_equal(a.next_reward, b.next_reward)

    def test_different_seed_differs(self):
        assert not np.array_equal(random_mdp(4, 4, 7).transition, random_mdp(4, 4, 8).transition)

    @given(st.integers(2, 8), st.integers(1, 5), st.integers(0, 10_000))
    def test_terminal_row_absorbing(self, S, A, seed):
        mdp = random_mdp(S, A, seed)
        t = S - 1
        np.testing.assert_array_equal(mdp.transition[t], np.eye(S)[[t] * A])
        np.testing.assert_array_equal(mdp.reward[t], 0.0)
        assert mdp.reward_bound <= 1.0
        np.testing.assert_allclose(mdp.reward, np.einsum("ijk,ijk->ij", mdp.transition, mdp.next_reward))

    def test_bad_dimensions(self):
        with pytest.raises(InvalidDimensions):
            random_mdp(1, 4, 0)
        with pytest.raises(InvalidDimensions):
            random_mdp(4, 0, 0)


class TestFrozenLake:
    def test_sizes(self, lake):
        assert (lake.num_states, lake.num_actions) == (64, 4)
        validate_mdp(lake.mdp)

    def test_goal_adjacent_step_hits_goal_one_third(self, lake):
        # cell 55 sits directly above the goal (63); moving down reaches it w.p. 1/3
        n = 100_000
        stream = UniformStream(11)
        hits = sum(lake.step(55, 1, stream)[0] == 63 for _ in range(n))
        assert abs(hits / n - 1 / 3) <= mc_tol(1 / 3, n)
        assert lake.mdp.transition[55, 1, 63] == pytest.approx(1 / 3)

    def test_support_is_at_most_three_cells(self, lake):
        assert ((lake.mdp.transition > 0).sum(axis=2) <= 3).all()

    def test_episode_return_is_zero_or_one(self, lake):
        stream = UniformStream(0)
        for _ in range(200):
            s, total = lake.reset(stream), 0.0
            for _ in range(lake.max_episode_steps):
                s, r, done = lake.step(s, int(stream.next() * 4), stream)
                total += r
                if done:
                    break
            assert total in (0.0, 1.0)

    def test_empirical_frequencies_match_model(self, lake):
        n = 100_000
        stream = UniformStream(2)
        for s, a in [(0, 2), (27, 3), (54, 1)]:
            counts = np.bincount([lake.step(s, a, stream)[0] for _ in range(n)], minlength=64) / n
            p = lake.mdp.transition[s, a]
            assert np.all(np.abs(counts - p) <= mc_tol(p, n) + 1e-12)


class TestTaxi:
    def test_sizes(self, cab):
        assert (cab.num_states, cab.num_actions) == (500, 6)
        validate_mdp(cab.mdp)
        assert np.count_nonzero(cab.start_distribution) == 300

    def test_encoding_roundtrip(self):
        for s in range(500):
            assert taxi_encode(*taxi_decode(s)) == s

    def test_deterministic(self, cab):
        assert np.all(cab.mdp.transition.max(axis=2) == 1.0)

    def test_illegal_dropoff_costs_ten_and_continues(self, cab):
        checked = 0
        for s in range(500):
            row, col, pas, dest = taxi_decode(s)
            if cab.terminal[s] or (pas == 4 and (row, col) in ((0, 0), (0, 4), (4, 0), (4, 3))):
                continue
            nxt, r, done = cab.step(s, 5, UniformStream(0))
            assert r == -10.0 and not done and nxt == s
            checked += 1
        assert checked > 300

    def test_successful_dropoff(self, cab):
        s = taxi_encode(0, 4, 4, 1)  # passenger in taxi at G, destination G
        nxt, r, done = cab.step(s, 5, UniformStream(0))
        assert r == 20.0 and done and cab.success[nxt]

    def test_optimal_rollout_matches_oracle_value(self, cab):
        q, _ = value_iteration(cab.mdp, tolerance=1e-10)
        pi = greedy_actions(q)
        g = cab.mdp.discount
        start = taxi_encode(2, 2, 0, 3)
        s, ret, disc = start, 0.0, 1.0
        for _ in range(50):
            s_next, r, done = cab.step(s, int(pi[s]), UniformStream(0))
            ret += disc * r
            disc *= g
            s = s_next
            if done:
                break
        assert done
        assert ret == pytest.approx(q[start].max(), abs=1e-8)

    def test_make_env_unknown(self):
        with pytest.raises(ValueError):
            make_env("cartpole")


class TestIidSampler:
    def test_uniform_pair_frequencies(self):
        mdp = random_mdp(4, 4, 7)
        sampler = IidSampler(SamplerSpec.uniform(16, seed=1), mdp)
        n = 100_000
        s, a, _, _ = sampler.draw_arrays(n)
        freq = np.bincount(s * 4 + a, minlength=16) / n
        se = np.sqrt((1 / 16) * (15 / 16) / n)
        assert np.all(np.abs(freq - 1 / 16) <= 3 * se)

    def test_next_state_frequencies(self):
        mdp = random_mdp(4, 4, 7)
        d = np.zeros(16)
        d[6] = 1.0
        sampler = IidSampler(SamplerSpec("iid", d, seed=4), mdp)
        n = 100_000
        s, a, nxt, r = sampler.draw_arrays(n)
        assert np.all(s == 1) and np.all(a == 2)
        freq = np.bincount(nxt, minlength=4) / n
        p = mdp.transition[1, 2]
        assert np.all(np.abs(freq - p) <= mc_tol(p, n))
        np.testing.assert_array_equal(r, mdp.next_reward[1, 2, nxt])

    def test_point_mass(self):
        mdp = random_mdp(3, 2, 0)
        d = np.zeros(6)
        d[0] = 1.0
        sampler = IidSampler(SamplerSpec("iid", d), mdp)
        for _ in range(100):
            t = iid_sample(sampler)
            assert (t.state, t.action) == (0, 0)

    def test_determinism_and_vector_scalar_agreement(self):
        mdp = random_mdp(4, 3, 1)
        a = IidSampler(SamplerSpec.uniform(12, seed=9), mdp)
        b = IidSampler(SamplerSpec.uniform(12, seed=9), mdp)
        s, ac, nx, r = a.draw_arrays(500)
        for i in range(500):
            t = b.sample()
            assert (t.state, t.action, t.next_state, t.reward) == (s[i], ac[i], nx[i], r[i])

    def test_errors(self):
        mdp = random_mdp(3, 2, 0)
        with pytest.raises(SizeMismatch):
            IidSampler(SamplerSpec.uniform(5), mdp)
        with pytest.raises(ModeMismatch):
            IidSampler(SamplerSpec("epsilon_greedy"), mdp)
        with pytest.raises(ValueError):
            SamplerSpec("iid", np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            SamplerSpec("iid")


class TestEpsilonGreedy:
    def _freq(self, env, eps, row, n=100_000, seed=0):
        q = np.zeros((env.num_states, env.num_actions))
        q[0] = row
        sampler = EpsilonGreedySampler(SamplerSpec("epsilon_greedy", epsilon=eps, seed=seed), env)
        return np.bincount([sampler.choose(q, 0) for _ in range(n)], minlength=env.num_actions) / n

    def test_pure_exploration_uniform(self, lake):
        freq = self._freq(lake, 1.0, [0, 5, 0, 0])
        assert np.all(np.abs(freq - 0.25) <= mc_tol(0.25, 100_000))

    def test_pure_exploitation(self, lake):
        freq = self._freq(lake, 0.0, [0, 5, 0, 0], n=5_000)
        assert freq[1] == 1.0

    def test_epsilon_point_one(self, lake):
        freq = self._freq(lake, 0.1, [0, 5, 0, 0])
        assert abs(freq[1] - 0.925) <= mc_tol(0.925, 100_000)

    def test_random_tie_break_spreads_over_ties(self, lake):
        freq = self._freq(lake, 0.0, [0, 0, 0, 0], n=40_000)
        assert np.all(np.abs(freq - 0.25) <= mc_tol(0.25, 40_000))

    def test_lowest_tie_break(self, lake):
        q = np.zeros((64, 4))
        sampler = EpsilonGreedySampler(SamplerSpec("epsilon_greedy", epsilon=0.0, tie_break="lowest"), lake)
        assert all(sampler.choose(q, 0) == 0 for _ in range(1000))

    def test_episodes_restart_after_terminal(self, cab):
        sampler = EpsilonGreedySampler(SamplerSpec("epsilon_greedy", epsilon=1.0, seed=3), cab)
        q = np.zeros((500, 6))
        prev = None
        for _ in range(5_000):
            t = sampler.sample(q)
            if prev is not None and not prev.terminal and sampler.episode_steps > 1:
                assert t.state == prev.next_state
            prev = t
        assert sampler.steps == 5_000

    def test_determinism(self, cab):
        q = np.zeros((500, 6))
        runs = []
        for _ in range(2):
            sampler = EpsilonGreedySampler(SamplerSpec("epsilon_greedy", seed=5), cab)
            runs.append([sampler.sample(q) for _ in range(2_000)])
        assert runs[0] == runs[1]

    def test_mode_mismatch(self, cab):
        with pytest.raises(ModeMismatch):
            EpsilonGreedySampler(SamplerSpec.uniform(3000), cab)
