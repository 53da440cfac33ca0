"""Steady-state Kalman prediction for models with noisy observations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InexactRepresentationWarning, ValidationError
from .model_core import StateSpaceModel, output_covariance


@dataclass(frozen=True, eq=False)
class SteadyStateFilter:
    """Fixed point of the one-step predictor Riccati recursion.

    ``Sigma_ss`` is the prediction error covariance of X_t given Y_{1:t-1}.
    """

    Sigma_ss: np.ndarray
    L: np.ndarray
    A_cl: np.ndarray
    rho: float
    innovation_cov: np.ndarray

    def to_json(self) -> dict:
        return {
            "Sigma_ss": self.Sigma_ss.tolist(),
            "L": self.L.tolist(),
            "rho": self.rho,
            "innovation_cov": self.innovation_cov.tolist(),
        }


def riccati_map(model: StateSpaceModel, S: np.ndarray) -> np.ndarray:
    A, C = model.A, model.C
    innov = C @ S @ C.T + model.Sigma_V
    K = A @ S @ C.T
    out = A @ S @ A.T + model.Sigma_W - K @ np.linalg.solve(innov, K.T)
    return 0.5 * (out + out.T)


def is_observable(A: np.ndarray, C: np.ndarray, tol: float = 1e-10) -> bool:
    d = A.shape[0]
    blocks, M = [], C
    for _ in range(d):
        blocks.append(M)
        M = M @ A
    O = np.vstack(blocks)
    w = np.linalg.eigvalsh(O.T @ O)
    return bool(w.min() > tol * max(w.max(), 1.0))


def spectral_radius(M: np.ndarray, n: int = 200) -> float:
    """||M^n||^{1/n} with per-step renormalisation; exact for 1x1."""
    if M.shape == (1, 1):
        return float(abs(M[0, 0]))
    B = np.eye(M.shape[0])
    log_scale = 0.0
    for _ in range(n):
        B = B @ M
        nb = np.linalg.norm(B, 2)
        if nb == 0.0:
            return 0.0
        B /= nb
        log_scale += np.log(nb)
    return float(np.exp(log_scale / n))


def solve_dare(model: StateSpaceModel, tol: float = 1e-14, max_iter: int = 100_000) -> SteadyStateFilter:
    """Iterate the Riccati map from Sigma_W to its fixed point."""
    if model.d_y and np.linalg.eigvalsh(model.Sigma_V).min() <= 0:
        raise ValidationError("Sigma_V must be positive definite")
    if not is_observable(model.A, model.C):
        raise ValidationError("(C, A) is not observable")
    S = model.Sigma_W.copy()
    for _ in range(max_iter):
        S_next = riccati_map(model, S)
        if np.max(np.abs(S_next - S)) <= tol * max(1.0, np.max(np.abs(S_next))):
            S = S_next
            break
        S = S_next
    else:
        raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} steps")
    C = model.C
    innov = C @ S @ C.T + model.Sigma_V
    L = np.linalg.solve(innov, C @ S @ model.A.T).T
    A_cl = model.A - L @ C
    return SteadyStateFilter(S, L, A_cl, spectral_radius(A_cl), 0.5 * (innov + innov.T))


def riccati_residual(model: StateSpaceModel, ssf: SteadyStateFilter) -> float:
    """Relative residual of the fixed-point equation."""
    r = riccati_map(model, ssf.Sigma_ss) - ssf.Sigma_ss
    return float(np.linalg.norm(r) / max(np.linalg.norm(ssf.Sigma_ss), 1e-300))


def filter_coeffs(model: StateSpaceModel, ssf: SteadyStateFilter, n: int) -> np.ndarray:
    """Predictor weights M_1..M_n, stacked as (n, d_Y, d_Y).

    E[Y_t | Y_{1:t-1}] = sum_k M_k Y_{t-k} with M_k = C A_cl^{k-1} L; the
    exponent k-1 is the one that matches the exact finite-horizon predictor.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    out = np.empty((n, model.d_y, model.d_y))
    P = ssf.L
    for k in range(n):
        out[k] = model.C @ P
        P = ssf.A_cl @ P
    return out


def with_steady_state_init(model: StateSpaceModel, ssf: SteadyStateFilter | None = None) -> StateSpaceModel:
    if ssf is None:
        ssf = solve_dare(model)
    return model.with_(Sigma_init=ssf.Sigma_ss)


def _is_steady_initialised(model: StateSpaceModel, ssf: SteadyStateFilter, rtol: float = 1e-8) -> bool:
    diff = np.max(np.abs(model.Sigma_init - ssf.Sigma_ss))
    return diff <= rtol * max(1.0, np.max(np.abs(ssf.Sigma_ss)))


def kalman_prediction_mse(model: StateSpaceModel, T: int, ssf: SteadyStateFilter | None = None) -> np.ndarray:
    """Innovation covariances for t = 1..T, shape (T, d_Y, d_Y).

    Constant under steady-state initialisation. Otherwise an
    :class:`InexactRepresentationWarning` is issued and the steady-state value
    is still returned.
    """
    if ssf is None:
        ssf = solve_dare(model)
    if not _is_steady_initialised(model, ssf):
        warnings.warn(
            "Sigma_init differs from Sigma_ss; the time-invariant predictor is not exact",
            InexactRepresentationWarning,
            stacklevel=2,
        )
    return np.broadcast_to(ssf.innovation_cov, (T, model.d_y, model.d_y)).copy()


def exact_innovation_covariances(model: StateSpaceModel, T: int) -> np.ndarray:
    """Finite-horizon innovation covariances from a block LDL^T of Cov(Y_{1:T})."""
    d = model.d_y
    Cy = output_covariance(model, T)
    Lc = np.linalg.cholesky(Cy)
    out = np.empty((T, d, d))
    for t in range(T):
        blk = Lc[t * d : (t + 1) * d, t * d : (t + 1) * d]
        out[t] = blk @ blk.T
    return out
