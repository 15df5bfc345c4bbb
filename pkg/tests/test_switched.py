import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixture_mdp, golden_q, mdps
from syncmbq.envs import IidSampler, SamplerSpec, random_mdp
from syncmbq.errors import SandwichViolation, SizeMismatch
from syncmbq.estimation import EmpiricalModel
from syncmbq.learner import TrainerConfig, train
from syncmbq.mdp import greedy_actions, value_iteration
from syncmbq.switched import (
    ComparisonState,
    a_matrix_apply,
    a_matrix_inf_norm,
    comparison_step,
    noise_vector,
    run_with_comparisons,
)


def sampled_model(mdp, n, seed=0, d=None):
    d = np.full(mdp.num_pairs, 1.0 / mdp.num_pairs) if d is None else d
    s, a, sp, r = IidSampler(SamplerSpec("iid", d, seed=seed), mdp).draw_arrays(n)
    m = EmpiricalModel.like(mdp)
    for i in range(n):
        m.record(int(s[i]), int(a[i]), int(sp[i]), float(r[i]))
    return m


def dense_a(model, policy_source, alpha, gamma):
    """Materialise (1 - alpha) I + alpha gamma P_hat Pi as an (SA, SA) matrix."""
    S, A = model.shape
    pi = np.zeros((S, S * A))
    pi[np.arange(S), np.arange(S) * A + greedy_actions(policy_source)] = 1.0
    return (1 - alpha) * np.eye(S * A) + alpha * gamma * model.phat().reshape(S * A, S) @ pi


def config(mdp, seed=0, steps=2000, alpha=0.1, warmup=None):
    return TrainerConfig(alpha, SamplerSpec.uniform(mdp.num_pairs, seed=seed), discount=mdp.discount,
                         total_steps=steps, warmup_steps=warmup, log_stride=50)


class TestNoiseVector:
    def test_exact_model_gives_zero(self):
        mdp = fixture_mdp("two_state_stochastic")
        scale = 1 * 2 * 3 * 4 * 5 * 7 * 8 * 9 * 10
        counts = np.rint(mdp.transition * scale)
        np.testing.assert_allclose(counts.sum(axis=2), scale)  # rational rows are representable
        model = EmpiricalModel.from_counts(counts, mdp.reward * counts.sum(axis=2))
        np.testing.assert_allclose(noise_vector(model, mdp, golden_q("two_state_stochastic")), 0.0, atol=1e-12)

    def test_empty_model(self):
        mdp = fixture_mdp("three_state")
        q_star = golden_q("three_state")
        w = noise_vector(EmpiricalModel.like(mdp), mdp, q_star)
        expected = -mdp.reward - mdp.discount * mdp.transition @ q_star.max(axis=1)
        np.testing.assert_allclose(w, expected, atol=1e-14)

    @given(mdps(max_states=4, max_actions=3), st.integers(0, 1000))
    def test_naive_bound_after_visitation(self, mdp, seed):
        model = sampled_model(mdp, 40 * mdp.num_pairs, seed)
        if not model.all_visited():
            return
        q_star, _ = value_iteration(mdp, tolerance=1e-12)
        r_max = mdp.reward_bound
        assert np.max(np.abs(noise_vector(model, mdp, q_star))) <= 2 * r_max / (1 - mdp.discount) + 1e-9

    def test_size_mismatch(self):
        mdp = fixture_mdp("three_state")
        with pytest.raises(SizeMismatch):
            noise_vector(EmpiricalModel(2, 2), mdp, golden_q("three_state"))


class TestAMatrix:
    def one_state_model(self):
        m = EmpiricalModel(1, 1)
        m.record(0, 0, 0, 0.0)
        return m

    def test_zero_vector(self):
        m = sampled_model(random_mdp(3, 2, 0), 50)
        np.testing.assert_array_equal(a_matrix_apply(m, np.zeros((3, 2)), np.zeros((3, 2)), 0.1, 0.9), 0.0)

    def test_zero_step_size_is_identity(self):
        x = np.arange(6.0).reshape(3, 2)
        m = sampled_model(random_mdp(3, 2, 0), 50)
        np.testing.assert_array_equal(a_matrix_apply(m, x, x, 0.0, 0.9), x)

    def test_one_state_hand_value(self):
        assert a_matrix_apply(self.one_state_model(), np.zeros((1, 1)), np.ones((1, 1)), 0.1, 0.9)[0, 0] == \
            pytest.approx(0.99)

    @given(mdps(max_states=4, max_actions=3), st.integers(0, 1000), st.floats(0.01, 0.99), st.data())
    def test_matches_dense_matrix(self, mdp, seed, alpha, data):
        model = sampled_model(mdp, 5 * mdp.num_pairs, seed)
        src = np.asarray(data.draw(st.lists(st.floats(-5, 5), min_size=mdp.num_pairs, max_size=mdp.num_pairs)))
        x = np.asarray(data.draw(st.lists(st.floats(-5, 5), min_size=mdp.num_pairs, max_size=mdp.num_pairs)))
        src, x = src.reshape(mdp.shape), x.reshape(mdp.shape)
        M = dense_a(model, src, alpha, mdp.discount)
        np.testing.assert_allclose(a_matrix_apply(model, src, x, alpha, mdp.discount).ravel(), M @ x.ravel(),
                                   atol=1e-12)
        assert np.all(M >= 0)
        assert a_matrix_inf_norm(model, src, alpha, mdp.discount) == pytest.approx(np.abs(M).sum(axis=1).max())

    @given(mdps(max_states=4, max_actions=3), st.integers(0, 1000), st.data())
    def test_order_preserving(self, mdp, seed, data):
        model = sampled_model(mdp, 5 * mdp.num_pairs, seed)
        n = mdp.num_pairs
        x = np.asarray(data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n))).reshape(mdp.shape)
        bump = np.asarray(data.draw(st.lists(st.floats(0, 5), min_size=n, max_size=n))).reshape(mdp.shape)
        src = np.random.default_rng(seed).random(mdp.shape)
        lo = a_matrix_apply(model, src, x, 0.3, mdp.discount)
        hi = a_matrix_apply(model, src, x + bump, 0.3, mdp.discount)
        assert np.all(hi >= lo - 1e-12)

    @given(mdps(max_states=4, max_actions=3), st.integers(0, 1000), st.floats(0.01, 0.99), st.data())
    def test_linearity(self, mdp, seed, alpha, data):
        model = sampled_model(mdp, 3 * mdp.num_pairs, seed)
        rng = np.random.default_rng(seed)
        src, x, y = (rng.normal(size=mdp.shape) for _ in range(3))
        c = data.draw(st.floats(-3, 3))
        lhs = a_matrix_apply(model, src, c * x + y, alpha, mdp.discount)
        rhs = c * a_matrix_apply(model, src, x, alpha, mdp.discount) + a_matrix_apply(model, src, y, alpha, mdp.discount)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_norm_after_visitation_is_exact(self):
        mdp = random_mdp(4, 4, 2024)
        model = sampled_model(mdp, 400)
        assert model.all_visited()
        q = np.random.default_rng(0).random(mdp.shape)
        assert a_matrix_inf_norm(model, q, 0.1, 0.9) == pytest.approx(1 - 0.1 * 0.1, abs=1e-15)
        assert a_matrix_inf_norm(model, q, 0.1, 0.9) <= 0.99 + 1e-15

    def test_norm_with_unvisited_pair(self):
        mdp = random_mdp(3, 2, 0)
        d = np.full(6, 0.2)
        d[5] = 0.0
        model = sampled_model(mdp, 200, d=d)
        assert model.visit_counts[2, 1] == 0
        M = dense_a(model, np.zeros((3, 2)), 0.1, 0.9)
        assert np.abs(M[5]).sum() == pytest.approx(0.9)
        assert a_matrix_inf_norm(model, np.zeros((3, 2)), 0.1, 0.9) == pytest.approx(0.99)

    def test_empty_model_norm(self):
        assert a_matrix_inf_norm(EmpiricalModel(2, 2), np.zeros((2, 2)), 0.25, 0.9) == 0.75


class TestComparisonStep:
    def test_zero_equilibrium(self):
        mdp = random_mdp(3, 2, 1)
        model = sampled_model(mdp, 100)
        state = ComparisonState(np.zeros((3, 2)), np.zeros((3, 2)))
        rng = np.random.default_rng(0)
        for _ in range(50):
            state = comparison_step(state, model, rng.normal(size=(3, 2)), rng.normal(size=(3, 2)),
                                    np.zeros((3, 2)), 0.1, 0.9)
        np.testing.assert_array_equal(state.q_upper_tilde, 0.0)
        np.testing.assert_array_equal(state.q_lower_tilde, 0.0)
        assert state.step == 50

    @given(st.integers(0, 1000), st.floats(0.05, 0.9), st.floats(0.1, 0.95))
    @settings(max_examples=25)
    def test_geometric_decay_without_noise(self, seed, alpha, gamma):
        mdp = random_mdp(4, 3, seed, discount=gamma)
        model = sampled_model(mdp, 300, seed)
        if not model.all_visited():
            return
        rng = np.random.default_rng(seed)
        x0 = rng.normal(size=mdp.shape)
        state = ComparisonState(x0, x0)
        rate = 1 - (1 - gamma) * alpha
        for k in range(1, 80):
            state = comparison_step(state, model, rng.normal(size=mdp.shape), rng.normal(size=mdp.shape),
                                    np.zeros(mdp.shape), alpha, gamma)
            bound = rate ** k * np.max(np.abs(x0)) * (1 + 1e-12)
            assert np.max(np.abs(state.q_upper_tilde)) <= bound
            assert np.max(np.abs(state.q_lower_tilde)) <= bound

    def test_size_mismatch(self):
        with pytest.raises(SizeMismatch):
            ComparisonState(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(SizeMismatch):
            comparison_step(ComparisonState(np.zeros((2, 2)), np.zeros((2, 2))), EmpiricalModel(3, 2),
                            np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 2)), 0.1, 0.9)


class TestRunWithComparisons:
    def test_one_state_all_three_coincide(self):
        mdp = fixture_mdp("one_state")
        trace = run_with_comparisons(mdp, config(mdp, steps=300, warmup=1))
        up, lo, main = (trace.column(c) for c in ("up_err", "low_err", "main_err"))
        np.testing.assert_allclose(up, main, atol=1e-12)
        np.testing.assert_allclose(lo, main, atol=1e-12)

    @given(mdps(max_states=5, max_actions=3), st.integers(0, 1000), st.floats(0.05, 0.6))
    @settings(max_examples=15)
    def test_sandwich_on_random_mdps(self, mdp, seed, alpha):
        trace = run_with_comparisons(mdp, config(mdp, seed, steps=1500, alpha=alpha))
        assert trace.sandwich_ok
        assert np.all(trace.column("main_err") <= np.maximum(trace.column("up_err"), trace.column("low_err")) + 1e-9)

    def test_matches_plain_training(self):
        mdp = random_mdp(4, 4, 2024)
        cfg = config(mdp, seed=3, steps=5000)
        trace = run_with_comparisons(mdp, cfg)
        np.testing.assert_allclose(trace.q, train(mdp, cfg).q, atol=1e-12, rtol=0)

    def test_logged_diagnostics_after_visitation(self):
        mdp = random_mdp(4, 4, 2024)
        trace = run_with_comparisons(mdp, config(mdp, seed=1, steps=3000))
        after = trace.steps >= trace.visited_all_at
        assert np.all(trace.column("a_norm")[after] <= 0.99 + 1e-15)
        assert np.all(trace.column("w_inf")[after] <= 2 * mdp.reward_bound / 0.1 + 1e-9)
        assert np.all(trace.q_max_abs <= mdp.reward_bound / 0.1)

    def test_starts_at_initial_error(self):
        mdp = random_mdp(3, 2, 4)
        trace = run_with_comparisons(mdp, TrainerConfig(0.1, SamplerSpec.uniform(6), total_steps=20,
                                                        warmup_steps=20, q_init=1.0))
        q_star = trace.extra["q_star"]
        np.testing.assert_allclose(trace.state.q_upper_tilde, 1.0 - q_star)
        np.testing.assert_allclose(trace.state.q_lower_tilde, 1.0 - q_star)

    def test_violation_is_reported(self):
        mdp = random_mdp(3, 2, 4)
        with pytest.raises(SandwichViolation) as exc:
            run_with_comparisons(mdp, config(mdp, steps=10), tol=-1.0)
        assert exc.value.step == 1

    def test_window_event(self):
        mdp = random_mdp(3, 2, 4)
        trace = run_with_comparisons(mdp, config(mdp, steps=400, warmup=20))
        w = trace.column("w_inf")
        lo = 20 + (400 - 20 + 1) // 2
        worst = w[lo - 1:].max()
        assert trace.window_event(400, 20, worst)
        assert not trace.window_event(400, 20, worst * 0.999)

    def test_rejects_bad_configs(self):
        mdp = random_mdp(3, 2, 4)
        with pytest.raises(ValueError):
            run_with_comparisons(mdp, TrainerConfig(0.1, SamplerSpec.uniform(6), total_steps=10,
                                                    algorithm="qlearning"))
        with pytest.raises(ValueError):
            run_with_comparisons(random_mdp(3, 2, 4, discount=0.5), config(mdp))
