import json

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from lds_lab.errors import RankDeficiencyError, ValidationError
from lds_lab.estimation import (
    ParamMask,
    analytic_best_in_class,
    estimate,
    least_squares_masked,
    population_risk,
    top_left_mask,
    unstable_thresholds,
)
from lds_lab.model_core import JordanSpec, StateSpaceModel, make_jordan_system, random_similarity, simulate


def risk_oracle(model, A_hat, T):
    """Direct sum over t of tr(D Gamma_t D^T) with Gamma_t unrolled from scratch."""
    D = A_hat - model.A
    G = model.Sigma_init.copy()
    total = 0.0
    for _ in range(T - 1):
        total += np.trace(D @ G @ D.T)
        G = model.A @ G @ model.A.T + model.Sigma_W
    return total


class TestMask:
    def test_top_left(self):
        mask = top_left_mask(7, 3)
        assert mask.d_m == 9
        assert mask.free[:3, :3].all() and mask.free.sum() == 9

    @pytest.mark.parametrize("k", [0, 8])
    def test_bad_k(self, k):
        with pytest.raises(ValidationError):
            top_left_mask(7, k)

    def test_fixed_at_free_rejected(self):
        with pytest.raises(ValidationError):
            ParamMask(np.eye(2, dtype=bool), np.eye(2))

    def test_json(self):
        mask = ParamMask(np.array([[1, 0], [1, 1]], dtype=bool), [[0, 0.5], [0, 0]])
        back = ParamMask.from_json(json.loads(json.dumps(mask.to_json())))
        npt.assert_array_equal(back.free, mask.free)
        npt.assert_array_equal(back.fixed_values, mask.fixed_values)
        tl = ParamMask.from_json({"type": "top_left", "k": 2}, d_x=3)
        npt.assert_array_equal(tl.free, top_left_mask(3, 2).free)


class TestLeastSquares:
    def test_noiseless_recovery(self):
        A = np.array([[0.5, 0.2, 0.0], [-0.1, 0.9, 0.3], [0.0, 0.0, 0.7]])
        m = StateSpaceModel(A, np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)), np.eye(3))
        X, _ = simulate(m, 5, 4, seed=2)
        npt.assert_allclose(least_squares_masked(X, top_left_mask(3, 3)), A, atol=1e-10)

    def test_pinned_entries_kept(self):
        mask = ParamMask(np.array([[1, 0], [0, 1]], dtype=bool), [[0, 0.3], [0.1, 0]])
        m = make_jordan_system(JordanSpec(((0.5, 2),)), 1.0)
        X, _ = simulate(m, 10, 50, seed=0)
        A_hat = least_squares_masked(X, mask)
        assert A_hat[0, 1] == 0.3 and A_hat[1, 0] == 0.1

    def test_ridge_shrinks(self):
        m = make_jordan_system(JordanSpec(((0.5, 2),)), 1.0)
        X, _ = simulate(m, 10, 20, seed=0)
        mask = top_left_mask(2, 2)
        a = least_squares_masked(X, mask)
        b = least_squares_masked(X, mask, ridge=1e6)
        assert np.abs(b).sum() < np.abs(a).sum()

    def test_rank_deficient(self):
        m = StateSpaceModel(np.eye(2), np.eye(2), np.diag([1.0, 0.0]), np.zeros((2, 2)), np.diag([1.0, 0.0]))
        X, _ = simulate(m, 5, 10, seed=0)
        with pytest.raises(RankDeficiencyError) as exc:
            least_squares_masked(X, top_left_mask(2, 2))
        assert exc.value.row == 0

    def test_needs_states(self):
        m = make_jordan_system(JordanSpec(((0.5, 1),)), 1.0, sigma_v=1.0)
        _, Y = simulate(m, 5, 3, seed=0)
        with pytest.raises(ValidationError):
            least_squares_masked(Y, top_left_mask(1, 1))

    def test_converges_to_analytic(self):
        m = make_jordan_system(JordanSpec(((0.5, 2),)), 1.0)
        mask = top_left_mask(2, 1)
        A_opt, _ = analytic_best_in_class(m, mask, 20)
        X, _ = simulate(m, 20, 10_000, seed=13)
        A_hat = least_squares_masked(X, mask)
        assert np.linalg.norm(A_hat - A_opt, 2) <= 0.05


class TestRisk:
    @given(st.integers(2, 30), st.integers(0, 2**31))
    def test_population_risk_matches_oracle(self, T, seed):
        m = make_jordan_system(JordanSpec(((1.0, 2), (0.4, 1))), 1.0)
        A_hat = np.random.default_rng(seed).normal(size=(3, 3))
        npt.assert_allclose(population_risk(m, A_hat, T), risk_oracle(m, A_hat, T), rtol=1e-10)

    def test_full_mask_zero_risk(self, fig1a_model):
        A_opt, total = analytic_best_in_class(fig1a_model, top_left_mask(7, 7), 200)
        assert total == 0.0
        npt.assert_array_equal(A_opt, fig1a_model.A)

    def test_analytic_matches_grid(self):
        m = make_jordan_system(JordanSpec(((1.0, 2), (0.4, 1))), 1.0)
        mask = top_left_mask(3, 1)
        A_opt, total = analytic_best_in_class(m, mask, 30)
        grid = np.linspace(A_opt[0, 0] - 0.5, A_opt[0, 0] + 0.5, 2001)
        risks = []
        for a in grid:
            A_hat = np.zeros((3, 3))
            A_hat[0, 0] = a
            risks.append(risk_oracle(m, A_hat, 30))
        i = int(np.argmin(risks))
        assert abs(grid[i] - A_opt[0, 0]) <= grid[1] - grid[0]
        npt.assert_allclose(total, risks[i], rtol=1e-6)

    def test_analytic_matches_numerical_optimiser(self):
        m = make_jordan_system(JordanSpec(((0.9, 3),)), 1.0)
        mask = top_left_mask(3, 2)
        A_opt, total = analytic_best_in_class(m, mask, 15)

        def f(v):
            A_hat = np.zeros((3, 3))
            A_hat[:2, :2] = v.reshape(2, 2)
            return risk_oracle(m, A_hat, 15)

        res = minimize(f, np.zeros(4), method="BFGS", options={"gtol": 1e-10})
        npt.assert_allclose(res.x.reshape(2, 2), A_opt[:2, :2], atol=1e-5)
        npt.assert_allclose(res.fun, total, rtol=1e-6)

    def test_figure_1a_thresholds(self, fig1a_model):
        risks = {k: analytic_best_in_class(fig1a_model, top_left_mask(7, k), 200)[1] / 200 for k in range(1, 8)}
        assert risks[4] < 1 and risks[3] > 10
        assert risks[7] == 0
        assert all(risks[k] > risks[k + 1] for k in range(4, 7))

    @given(st.integers(2, 25), st.integers(1, 3), st.integers(0, 1000))
    def test_monte_carlo_dominates(self, T, k, seed):
        m = make_jordan_system(JordanSpec(((1.0, 2), (0.5, 1))), 1.0)
        mask = top_left_mask(3, k)
        _, best = analytic_best_in_class(m, mask, T)
        X, _ = simulate(m, T, 20, seed=seed)
        rep = estimate(X, m, mask)
        assert rep.total_risk >= best * (1 - 1e-9) - 1e-12

    def test_nested_classes_monotone(self, fig1a_model):
        for T in (25, 100):
            vals = [analytic_best_in_class(fig1a_model, top_left_mask(7, k), T)[1] for k in range(1, 8)]
            assert all(a >= b - 1e-9 * max(a, 1) for a, b in zip(vals, vals[1:]))

    def test_monte_carlo_figure_1a(self, fig1a_model):
        X, _ = simulate(fig1a_model, 200, 200, seed=1)
        r4 = estimate(X, fig1a_model, top_left_mask(7, 4)).per_step_risk
        r3 = estimate(X, fig1a_model, top_left_mask(7, 3)).per_step_risk
        assert r4 < 1.0 and r3 > 10.0

    def test_similarity_robustness(self, fig1a_model):
        # every conjugate has the same k = d_X minimum, and a full mask still
        # recovers the conjugated matrix exactly
        base = analytic_best_in_class(fig1a_model, top_left_mask(7, 7), 50)[1]
        for seed in range(20):
            conj = random_similarity(fig1a_model, seed=seed, kappa_max=100)
            A_opt, total = analytic_best_in_class(conj, top_left_mask(7, 7), 50)
            assert total == base == 0.0
            npt.assert_allclose(A_opt, conj.A)


class TestThresholds:
    @pytest.mark.parametrize(
        "blocks,expected",
        [
            (((1.0, 4), (0.4, 1), (0.4, 1), (0.4, 1)), (16, 12)),
            (((0.5, 3),), (0, 0)),
            (((1.0, 2), (1.0, 3), (-1.0, 1)), (26, 20)),
            (((1.1, 4), (0.4, 3)), (16, 12)),
        ],
    )
    def test_examples(self, blocks, expected):
        assert unstable_thresholds(JordanSpec(blocks)) == expected
