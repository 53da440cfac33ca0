"""Excess risk of finite-window linear predictors and its lower bounds.

All three quantities compare a window-h predictor sum_{k<=h} F_k Y_{t-k}
with the Kalman predictor sum_k M_k Y_{t-k}, summed over t = 1..T-1, with
Y_s = 0 for s <= 0 (``padding="zero"``) or only over t >= h+1
(``padding="drop"``). Writing the Kalman predictor as its in-window part plus
the tail sum_{k>h} M_k Y_{t-k}, every quantity is a projection residual of
that tail onto the window:

* ``optimal_truncated_filter``: one F shared by all t.
* ``per_step_relaxed_bound``: a fresh F per t.
* ``schur_lower_bound``: a fresh F per t, with the observation noise removed
  from both tail and window (the Schur complement R11 - R12 R22^{-1} R21).

Each is a lower bound for the one before it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, ValidationError
from .kalman import SteadyStateFilter, filter_coeffs, kalman_prediction_mse, solve_dare
from .model_core import COV_CAP, StateSpaceModel, output_covariance

log = logging.getLogger(__name__)

_R22_RIDGE = 1e-12


@dataclass(frozen=True, eq=False)
class FilterHypothesis:
    """Window-h filter; ``F[k-1]`` multiplies Y_{t-k}."""

    h: int
    F: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if self.h < 1 or F.ndim != 3 or F.shape[0] != self.h:
            raise ValidationError("F must have shape (h, d_Y, d_Y) with h >= 1")
        if not np.all(np.isfinite(F)):
            raise ValidationError("filter taps must be finite")
        object.__setattr__(self, "F", F)


@dataclass(frozen=True, eq=False)
class ToeplitzBlocks:
    """L (lower-triangular ones) and R = L L^T partitioned after the first h indices."""

    N: int
    h: int
    L: np.ndarray
    R: np.ndarray

    @property
    def R11(self):
        return self.R[: self.h, : self.h]

    @property
    def R12(self):
        return self.R[: self.h, self.h :]

    @property
    def R21(self):
        return self.R[self.h :, : self.h]

    @property
    def R22(self):
        return self.R[self.h :, self.h :]

    @property
    def L11(self):
        return self.L[: self.h, : self.h]

    @property
    def L21(self):
        return self.L[self.h :, : self.h]

    @property
    def L22(self):
        return self.L[self.h :, self.h :]


# --------------------------------------------------------------------------
# shared machinery


@dataclass
class _Setup:
    d: int
    T: int
    h: int
    M: np.ndarray  # (T, d, d), M[k-1] = M_k
    cov: np.ndarray  # Cov(Y_{1:T}) with a trailing zero block for padding
    innov: np.ndarray  # (T, d, d)


def _prepare(model, T, h, ssf, cov_cap, cov=None):
    if T < 2:
        raise ValidationError("T must be at least 2")
    if not 1 <= h:
        raise ValidationError("h must be at least 1")
    if ssf is None:
        ssf = solve_dare(model)
    if cov is None:
        cov = output_covariance(model, T, cap=cov_cap)
    d = model.d_y
    padded = np.zeros((cov.shape[0] + d, cov.shape[0] + d))
    padded[: cov.shape[0], : cov.shape[0]] = cov
    M = filter_coeffs(model, ssf, T)
    innov = kalman_prediction_mse(model, T, ssf)
    return _Setup(d, T, h, M, padded, innov)


def _times(T, h, padding):
    if padding == "zero":
        return range(1, T)
    if padding == "drop":
        return range(h + 1, T)
    raise ValidationError(f"padding must be 'zero' or 'drop', got {padding!r}")


def _lag_index(s: _Setup, t: int) -> np.ndarray:
    """Element indices of [Y_{t-1}, ..., Y_{t-h}]; pre-sample lags point at the zero block."""
    d, pad_block = s.d, s.T
    blocks = np.array([t - k - 1 if t - k >= 1 else pad_block for k in range(1, s.h + 1)])
    return (blocks[:, None] * d + np.arange(d)[None, :]).ravel()


class _Tail:
    """Covariances of the Kalman tail sum_{k=h+1}^{t-1} M_k Y_{t-k} for every t.

    W stacks the tail weights of all t (block row t-1, block column s-1 holds
    M_{t-s} when t-s > h); U = cov W^T then gives every needed covariance by
    slicing.
    """

    def __init__(self, s: _Setup, cov: np.ndarray):
        d, T, h = s.d, s.T, s.h
        n = T * d
        lag = np.subtract.outer(np.arange(T), np.arange(T))  # t - s
        W4 = np.zeros((T, T, d, d))
        sel = lag > h
        W4[sel] = s.M[lag[sel] - 1]
        W = W4.transpose(0, 2, 1, 3).reshape(n, n)
        self.s, self.cov, self.W = s, cov, W
        self.U = np.zeros((cov.shape[0], n))
        self.U[:n] = cov[:n, :n] @ W.T

    def terms(self, t: int):
        s, d = self.s, self.s.d
        lag = _lag_index(s, t)
        if t - 1 <= s.h:
            return None, None, lag
        rows = slice((t - 1) * d, t * d)
        tv = self.W[rows] @ self.U[:, rows][: s.T * d]
        return 0.5 * (tv + tv.T), self.U[lag, rows], lag


def _residual(tail_var, cross, S, ridge=False):
    """tr(tail_var - cross^T S^+ cross) restricted to non-padded lags."""
    keep = np.flatnonzero(np.diag(S) > 0)
    if keep.size == 0:
        return float(np.trace(tail_var))
    S = S[np.ix_(keep, keep)]
    b = cross[keep]
    if ridge:
        S = _regularise(S)
    x = sla.solve(S, b, assume_a="pos")
    return float(np.trace(tail_var) - np.trace(b.T @ x))


def _regularise(S):
    w = np.linalg.eigvalsh(S)
    if w.min() <= _R22_RIDGE * max(w.max(), 1.0) * 1e3:
        log.warning("near-singular window covariance; adding %.0e*I", _R22_RIDGE)
        return S + _R22_RIDGE * np.eye(S.shape[0])
    return S


# --------------------------------------------------------------------------
# operations


def optimal_truncated_filter(
    model: StateSpaceModel,
    T: int,
    h: int,
    padding: str = "zero",
    method: str = "orthogonality",
    ssf: SteadyStateFilter | None = None,
    cov: np.ndarray | None = None,
    cov_cap: int = COV_CAP,
) -> tuple[FilterHypothesis, float, float]:
    """Best shared window-h filter; returns (filter, excess_total, excess_total / (T-1)).

    ``method="orthogonality"`` minimises sum_t E||Y_t - F lags_t||^2 and
    subtracts the innovation variances. ``method="explicit"`` regresses the
    Kalman tail directly; it avoids the large cancellation of the first
    route and is used as its cross-check.
    """
    if not 1 <= h <= T - 1:
        raise ValidationError(f"h must be in [1, T-1], got h={h}, T={T}")
    s = _prepare(model, T, h, ssf, cov_cap, cov)
    d = s.d
    times = _times(T, h, padding)
    n_lag = h * d
    S = np.zeros((n_lag, n_lag))
    if method == "orthogonality":
        c = np.zeros((n_lag, d))
        v = 0.0
        innov = 0.0
        for t in times:
            lag = _lag_index(s, t)
            cur = np.arange((t - 1) * d, t * d)
            S += s.cov[np.ix_(lag, lag)]
            c += s.cov[np.ix_(lag, cur)]
            v += np.trace(s.cov[np.ix_(cur, cur)])
            innov += np.trace(s.innov[t - 1])
        keep = np.flatnonzero(np.diag(S) > 0)
        F = np.zeros((d, n_lag))
        if keep.size:
            F[:, keep] = sla.solve(S[np.ix_(keep, keep)], c[keep], assume_a="pos").T
        excess = v - float(np.trace(F @ c)) - innov
    elif method == "explicit":
        b = np.zeros((n_lag, d))
        tail = 0.0
        tails = _Tail(s, s.cov)
        for t in times:
            tv, cross, lag = tails.terms(t)
            S += s.cov[np.ix_(lag, lag)]
            if tv is not None:
                b += cross
                tail += np.trace(tv)
        keep = np.flatnonzero(np.diag(S) > 0)
        D = np.zeros((d, n_lag))
        if keep.size:
            D[:, keep] = sla.solve(S[np.ix_(keep, keep)], b[keep], assume_a="pos").T
        excess = tail - float(np.trace(D @ b))
        F = D + np.concatenate(list(s.M[:h]), axis=1)
    else:
        raise ValidationError(f"unknown method {method!r}")
    if not np.isfinite(excess):
        raise NumericalError("excess risk is not finite")
    excess = max(excess, 0.0)
    taps = F.reshape(d, h, d).transpose(1, 0, 2)
    return FilterHypothesis(h, taps), excess, excess / (T - 1)


def filter_excess(
    model: StateSpaceModel,
    T: int,
    filt: FilterHypothesis,
    padding: str = "zero",
    ssf: SteadyStateFilter | None = None,
    cov: np.ndarray | None = None,
) -> float:
    """Excess risk sum_t E||sum_k F_k Y_{t-k} - E[Y_t | Y_{1:t-1}]||^2 of a given filter."""
    s = _prepare(model, T, filt.h, ssf, COV_CAP, cov)
    h = filt.h
    D = np.concatenate(list(filt.F - s.M[:h]), axis=1)
    total = 0.0
    tails = _Tail(s, s.cov)
    for t in _times(T, h, padding):
        tv, cross, lag = tails.terms(t)
        Sl = s.cov[np.ix_(lag, lag)]
        total += float(np.trace(D @ Sl @ D.T))
        if tv is not None:
            total += float(np.trace(tv) - 2 * np.trace(D @ cross))
    return total


def per_step_relaxed_bound(
    model: StateSpaceModel,
    T: int,
    h: int,
    padding: str = "zero",
    ssf: SteadyStateFilter | None = None,
    cov: np.ndarray | None = None,
    cov_cap: int = COV_CAP,
) -> np.ndarray:
    """Per-t minimum excess with a fresh filter at every t; entry t-1 is time t.

    Times excluded by ``padding="drop"`` are reported as 0.
    """
    s = _prepare(model, T, h, ssf, cov_cap, cov)
    out = np.zeros(T - 1)
    tails = _Tail(s, s.cov)
    for t in _times(T, h, padding):
        tv, cross, lag = tails.terms(t)
        if tv is not None:
            out[t - 1] = max(_residual(tv, cross, s.cov[np.ix_(lag, lag)]), 0.0)
    return out


def schur_lower_bound(
    model: StateSpaceModel,
    T: int,
    h: int,
    padding: str = "zero",
    ssf: SteadyStateFilter | None = None,
    cov: np.ndarray | None = None,
    cov_cap: int = COV_CAP,
    per_step: bool = False,
):
    """Noise-free Schur-complement bound, summed over t (or per t if ``per_step``).

    At each t the tail and window are built from C X instead of Y, i.e. from
    Cov(Y_{1:T}) minus Sigma_V on the diagonal blocks.
    """
    s = _prepare(model, T, h, ssf, cov_cap, cov)
    d = s.d
    cx = s.cov.copy()
    for b in range(T):
        cx[b * d : (b + 1) * d, b * d : (b + 1) * d] -= model.Sigma_V
    out = np.zeros(T - 1)
    tails = _Tail(s, cx)
    for t in _times(T, h, padding):
        tv, cross, lag = tails.terms(t)
        if tv is not None:
            out[t - 1] = max(_residual(tv, cross, cx[np.ix_(lag, lag)], ridge=True), 0.0)
    return out if per_step else float(out.sum())


# --------------------------------------------------------------------------
# lemmas on the lower-triangular all-ones matrix


def toeplitz_blocks(N: int, h: int) -> ToeplitzBlocks:
    if not 1 <= h < N:
        raise ValidationError(f"need 1 <= h < N, got N={N}, h={h}")
    L = np.tril(np.ones((N, N)))
    return ToeplitzBlocks(N, h, L, L @ L.T)


def lemma_toeplitz_closed_forms(N: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed forms of R22^{-1} and of the cross term R12 R22^{-1} R21.

    R22^{-1} is the second-difference matrix of size N-h whose corner
    entries are 2 - h/(h+1) and 1 (a single entry 1/(h+1) when N-h = 1).
    The cross term is outer(v, v)/(h+1) with v = (1, ..., h).
    """
    if not 1 <= h < N:
        raise ValidationError(f"need 1 <= h < N, got N={N}, h={h}")
    n = N - h
    if n == 1:
        inv = np.array([[1.0 / (h + 1)]])
    else:
        inv = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
        inv[-1, -1] = 1.0
        inv[0, 0] = 2.0 - h / (h + 1)
    v = np.arange(1, h + 1, dtype=float)
    return inv, np.outer(v, v) / (h + 1)


def lemma_toeplitz_brute_force(N: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    tb = toeplitz_blocks(N, h)
    inv = np.linalg.inv(tb.R22)
    return inv, tb.R12 @ inv @ tb.R21


def geometric_vector(rho: float, h: int) -> np.ndarray:
    """(rho^{h-1}, ..., rho, 1)."""
    return np.array([rho ** (h - i) for i in range(1, h + 1)], dtype=float)


def lemma_quadratic_forms(rho: float, N: int, h: int) -> tuple[float, float]:
    """theta^T R11 theta and theta^T R12 R22^{-1} R21 theta for the geometric theta.

    q11 = sum_{l=1}^{h} (sum_{j=1}^{h-l+1} rho^{j-1})^2
    q_cross = (sum_{j=1}^{h} j rho^{h-j})^2 / (h+1)

    Neither depends on N beyond the requirement h < N.
    """
    if not 1 <= h < N:
        raise ValidationError(f"need 1 <= h < N, got N={N}, h={h}")
    q11 = 0.0
    for l in range(1, h + 1):
        q11 += sum(rho ** (j - 1) for j in range(1, h - l + 2)) ** 2
    q_cross = sum(j * rho ** (h - j) for j in range(1, h + 1)) ** 2 / (h + 1)
    return float(q11), float(q_cross)


def lemma_quadratic_brute_force(rho: float, N: int, h: int) -> tuple[float, float]:
    tb = toeplitz_blocks(N, h)
    theta = geometric_vector(rho, h)
    q11 = theta @ tb.R11 @ theta
    q_cross = theta @ tb.R12 @ np.linalg.solve(tb.R22, tb.R21 @ theta)
    return float(q11), float(q_cross)
