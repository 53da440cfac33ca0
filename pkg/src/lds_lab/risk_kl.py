"""KL divergence between the output laws of two Gaussian state-space models."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, ValidationError
from .model_core import COV_CAP, StateSpaceModel, output_covariance, state_covariance


@dataclass(frozen=True)
class KLReport:
    """All quantities in nats. ``prediction_risk_lb`` is the unweighted
    sum of squared predictor differences (no constant applied)."""

    total_kl: float
    mean_term: float
    cov_term: float
    prediction_risk_lb: float
    T: int

    def to_json(self) -> dict:
        return asdict(self)


def _gauss_kl_cov(S_p: np.ndarray, S_q: np.ndarray) -> float:
    """0.5 [tr(S_q^{-1} S_p) - logdet(S_q^{-1} S_p) - d] for zero-mean Gaussians."""
    try:
        cq = sla.cho_factor(S_q, lower=True)
    except np.linalg.LinAlgError:
        raise NumericalError("Q covariance is singular") from None
    cp = np.linalg.cholesky(S_p)
    tr = np.trace(sla.cho_solve(cq, S_p))
    logdet = 2 * (np.log(np.diag(cp)).sum() - np.log(np.diag(cq[0])).sum())
    return float(0.5 * (tr - logdet - S_p.shape[0]))


def gaussian_kl_full_obs(P: StateSpaceModel, Q: StateSpaceModel, T: int) -> KLReport:
    """KL(P || Q) for X_{1:T} of two fully observed models.

    The cov term includes the initial-state contribution
    KL(N(0, Sigma_init^P) || N(0, Sigma_init^Q)), which vanishes when the
    initial covariances agree.
    """
    if not (P.is_full_observation and Q.is_full_observation):
        raise ValidationError("both models must be fully observed")
    if P.d_x != Q.d_x:
        raise ValidationError("models have different state dimensions")
    if T < 1:
        raise ValidationError("T must be >= 1")
    try:
        Wq_inv = np.linalg.inv(sla.cholesky(Q.Sigma_W, lower=True))
    except np.linalg.LinAlgError:
        raise NumericalError("Sigma_W of Q is singular") from None
    Wq_inv = Wq_inv.T @ Wq_inv
    G = state_covariance(P, T)[: T - 1].sum(axis=0) if T > 1 else np.zeros((P.d_x, P.d_x))
    D = P.A - Q.A
    DGD = D @ G @ D.T
    mean_term = 0.5 * float(np.trace(DGD @ Wq_inv))
    lb = float(np.trace(DGD))
    cov_term = (T - 1) * _gauss_kl_cov(P.Sigma_W, Q.Sigma_W)
    if np.any(P.Sigma_init != Q.Sigma_init):
        cov_term += _gauss_kl_cov(P.Sigma_init, Q.Sigma_init)
    return KLReport(float(mean_term + cov_term), mean_term, float(cov_term), lb, T)


def _innovation_form(cov: np.ndarray, d: int, T: int):
    """Block factorisation Cov = L D L^T with unit block-lower L.

    Returns B = L^{-1} (row block t of B Y is the innovation of Y_t) and the
    innovation covariances D_t.
    """
    Lc = np.linalg.cholesky(cov)
    diag = [Lc[t * d : (t + 1) * d, t * d : (t + 1) * d] for t in range(T)]
    # B = blkdiag(Lc_tt) Lc^{-1}
    Linv = sla.solve_triangular(Lc, np.eye(cov.shape[0]), lower=True)
    B = sla.block_diag(*diag) @ Linv
    return B, [g @ g.T for g in diag]


def sequential_kl(P: StateSpaceModel, Q: StateSpaceModel, T: int, cap: int = COV_CAP) -> KLReport:
    """Chain-rule evaluation: sum over t of the expected predictive KL of Y_t | Y_{1:t-1}."""
    d = P.d_y
    cp, cq = output_covariance(P, T, cap), output_covariance(Q, T, cap)
    Bp, Sp = _innovation_form(cp, d, T)
    Bq, Sq = _innovation_form(cq, d, T)
    # predictor gap E_P[Y_t|past] - E_Q[Y_t|past] = (Bq - Bp)_t Y
    gap = Bq - Bp
    gap_cov = gap @ cp
    mean_term = cov_term = lb = 0.0
    for t in range(T):
        rows = slice(t * d, (t + 1) * d)
        cov_term += _gauss_kl_cov(Sp[t], Sq[t])
        E = gap_cov[rows] @ gap[rows].T
        E = 0.5 * (E + E.T)
        mean_term += 0.5 * float(np.trace(sla.solve(Sq[t], E, assume_a="pos")))
        lb += float(np.trace(E))
    return KLReport(float(mean_term + cov_term), float(mean_term), float(cov_term), float(lb), T)


def gaussian_kl_hidden(P: StateSpaceModel, Q: StateSpaceModel, T: int, cap: int = COV_CAP) -> KLReport:
    """KL between the joint Gaussian laws of Y_{1:T}.

    ``total_kl`` is the joint formula; the mean/cov split and the prediction
    risk come from the chain-rule decomposition.
    """
    if P.d_y != Q.d_y:
        raise ValidationError("models have different observation dimensions")
    cp, cq = output_covariance(P, T, cap), output_covariance(Q, T, cap)
    total = _gauss_kl_cov(cp, cq)
    seq = sequential_kl(P, Q, T, cap)
    return KLReport(float(total), seq.mean_term, seq.cov_term, seq.prediction_risk_lb, T)
