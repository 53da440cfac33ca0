import json

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm, ortho_group

from lds_lab.errors import NumericalError, ValidationError
from lds_lab.kalman import exact_innovation_covariances
from lds_lab.model_core import StateSpaceModel, output_covariance, scalar_random_walk, simulate
from lds_lab.risk_kl import gaussian_kl_full_obs, gaussian_kl_hidden, sequential_kl


def full(a, q=1.0, s0=1.0):
    a = np.atleast_2d(a)
    d = a.shape[0]
    q = q * np.eye(d) if np.isscalar(q) else q
    return StateSpaceModel(a, np.eye(d), q, np.zeros((d, d)), s0 * np.eye(d))


def random_hidden(seed, d_x=2, d_y=1):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d_x, d_x))
    A *= rng.uniform(0.2, 1.0) / max(abs(np.linalg.eigvals(A)))
    B = rng.normal(size=(d_x, d_x))
    return StateSpaceModel(A, rng.normal(size=(d_y, d_x)), B @ B.T + 0.1 * np.eye(d_x),
                           rng.uniform(0.2, 2.0) * np.eye(d_y), np.eye(d_x))


def schur_kl_oracle(P, Q, T):
    """Sum of per-step predictive KLs, each from explicit conditional moments."""
    d = P.d_y
    cp, cq = output_covariance(P, T), output_covariance(Q, T)
    total = 0.0
    for t in range(T):
        past, cur = slice(0, t * d), slice(t * d, (t + 1) * d)
        if t == 0:
            bp = bq = np.zeros((0, d))
            Sp, Sq = cp[cur, cur], cq[cur, cur]
        else:
            bp = np.linalg.solve(cp[past, past], cp[past, cur])
            bq = np.linalg.solve(cq[past, past], cq[past, cur])
            Sp = cp[cur, cur] - cp[cur, past] @ bp
            Sq = cq[cur, cur] - cq[cur, past] @ bq
        gap = bp - bq
        E = gap.T @ cp[past, past] @ gap
        Sq_inv = np.linalg.inv(Sq)
        total += 0.5 * (np.trace(Sq_inv @ Sp) - np.log(np.linalg.det(Sq_inv @ Sp)) - d + np.trace(Sq_inv @ E))
    return total


class TestFullObservation:
    def test_identical(self):
        r = gaussian_kl_full_obs(full(0.5), full(0.5), 30)
        assert r.total_kl == 0.0 and r.prediction_risk_lb == 0.0

    def test_scalar_closed_form(self):
        r = gaussian_kl_full_obs(full(1.0), full(0.9), 20)
        npt.assert_allclose(r.total_kl, 0.5 * 0.01 * sum(range(1, 20)), rtol=1e-12)
        npt.assert_allclose(r.prediction_risk_lb, 0.01 * sum(range(1, 20)), rtol=1e-12)
        assert r.cov_term == 0.0

    def test_scalar_monte_carlo(self):
        P = full(1.0)
        X, _ = simulate(P, 20, 100_000, seed=31)
        x = X.data[:, :, 0]
        llr = (norm.logpdf(x[:, 1:], x[:, :-1], 1.0) - norm.logpdf(x[:, 1:], 0.9 * x[:, :-1], 1.0)).sum(axis=1)
        se = llr.std() / np.sqrt(llr.size)
        assert abs(llr.mean() - gaussian_kl_full_obs(P, full(0.9), 20).total_kl) <= 3 * se

    def test_cov_term(self):
        r = gaussian_kl_full_obs(full(0.5, q=2.0), full(0.5, q=1.0), 11)
        npt.assert_allclose(r.cov_term / 10, 0.5 * (2 - np.log(2) - 1), rtol=1e-12)
        npt.assert_allclose(0.5 * (2 - np.log(2) - 1), 0.1534264097, atol=1e-9)
        w = np.random.default_rng(0).normal(scale=np.sqrt(2.0), size=200_000)
        llr = norm.logpdf(w, 0, np.sqrt(2.0)) - norm.logpdf(w, 0, 1.0)
        assert abs(llr.mean() - 0.1534264097) <= 3 * llr.std() / np.sqrt(w.size)

    def test_initial_state_term(self):
        r = gaussian_kl_full_obs(full(0.5, s0=2.0), full(0.5, s0=1.0), 5)
        npt.assert_allclose(r.cov_term, 0.5 * (2 - np.log(2) - 1))

    def test_rejects_hidden(self):
        with pytest.raises(ValidationError):
            gaussian_kl_full_obs(scalar_random_walk(1, 1), full(1.0), 5)

    def test_singular_q(self):
        with pytest.raises(NumericalError):
            gaussian_kl_full_obs(full(0.5), full(0.5, q=0.0), 5)

    @given(st.integers(0, 10_000))
    def test_orthogonal_invariance(self, seed):
        rng = np.random.default_rng(seed)
        A_p, A_q = rng.normal(size=(3, 3)) * 0.3, rng.normal(size=(3, 3)) * 0.3
        B = rng.normal(size=(3, 3))
        Wp = B @ B.T + np.eye(3)
        U = ortho_group.rvs(3, random_state=seed)
        a = gaussian_kl_full_obs(full(A_p, Wp), full(A_q), 15)
        b = gaussian_kl_full_obs(full(U @ A_p @ U.T, U @ Wp @ U.T), full(U @ A_q @ U.T), 15)
        npt.assert_allclose(b.total_kl, a.total_kl, rtol=1e-8)


class TestHidden:
    def test_identical(self):
        r = gaussian_kl_hidden(scalar_random_walk(1, 1), scalar_random_walk(1, 1), 20)
        assert abs(r.total_kl) <= 1e-9

    def test_random_walks_differing_in_r(self):
        P, Q = scalar_random_walk(1, 1), scalar_random_walk(1, 2)
        r = gaussian_kl_hidden(P, Q, 20)
        npt.assert_allclose(r.total_kl, sequential_kl(P, Q, 20).total_kl, rtol=1e-8)
        npt.assert_allclose(r.total_kl, schur_kl_oracle(P, Q, 20), rtol=1e-8)
        assert r.total_kl == pytest.approx(r.mean_term + r.cov_term, abs=1e-9)

    @given(st.integers(0, 10_000), st.integers(2, 30), st.integers(1, 2))
    def test_chain_rule(self, seed, T, d_y):
        P, Q = random_hidden(seed, d_y=d_y), random_hidden(seed + 1, d_y=d_y)
        r = gaussian_kl_hidden(P, Q, T)
        assert r.total_kl >= -1e-9
        npt.assert_allclose(r.total_kl, schur_kl_oracle(P, Q, T), rtol=1e-8, atol=1e-10)
        assert abs(r.total_kl - r.mean_term - r.cov_term) <= 1e-8 * max(1.0, r.total_kl)

    def test_embedded_full_observation(self):
        eps = 1e-6
        P = StateSpaceModel([[1.0]], [[1.0]], [[1.0]], [[eps]], [[1.0]])
        Q = StateSpaceModel([[0.9]], [[1.0]], [[1.0]], [[eps]], [[1.0]])
        hidden = gaussian_kl_hidden(P, Q, 20).total_kl
        npt.assert_allclose(hidden, gaussian_kl_full_obs(full(1.0), full(0.9), 20).total_kl, rtol=1e-3)

    @given(st.integers(0, 10_000))
    def test_orthogonal_state_change(self, seed):
        P, Q = random_hidden(seed), random_hidden(seed + 7)
        U = ortho_group.rvs(2, random_state=seed)

        def rot(m):
            return m.with_(A=U @ m.A @ U.T, C=m.C @ U.T, Sigma_W=U @ m.Sigma_W @ U.T,
                           Sigma_init=U @ m.Sigma_init @ U.T)

        a, b = gaussian_kl_hidden(P, Q, 12), gaussian_kl_hidden(rot(P), rot(Q), 12)
        npt.assert_allclose(b.total_kl, a.total_kl, rtol=1e-8, atol=1e-12)

    @given(st.integers(0, 10_000), st.integers(2, 25))
    def test_lower_bound_consistency(self, seed, T):
        P, Q = random_hidden(seed), random_hidden(seed + 3)
        r = gaussian_kl_hidden(P, Q, T)
        M = max(np.linalg.eigvalsh(S).max() for S in exact_innovation_covariances(Q, T))
        assert r.cov_term >= -1e-9
        assert r.total_kl >= r.prediction_risk_lb / (2 * M) - 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            gaussian_kl_hidden(random_hidden(0, d_y=1), random_hidden(1, d_y=2), 5)

    def test_report_json(self):
        r = gaussian_kl_hidden(scalar_random_walk(1, 1), scalar_random_walk(1, 2), 5)
        obj = json.loads(json.dumps(r.to_json()))
        assert set(obj) == {"total_kl", "mean_term", "cov_term", "prediction_risk_lb", "T"}
