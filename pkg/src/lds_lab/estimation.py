"""Masked-linear hypothesis classes for fully observed systems.

A mask picks which entries of the transition matrix the learner may fit;
all other entries are pinned to ``fixed_values`` (zero by default).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, RankDeficiencyError, ValidationError
from .model_core import JordanSpec, StateSpaceModel, TrajectoryBatch, state_covariance


@dataclass(frozen=True, eq=False)
class ParamMask:
    free: np.ndarray
    fixed_values: np.ndarray

    def __post_init__(self):
        free = np.array(self.free, dtype=bool)
        fixed = np.array(self.fixed_values, dtype=float)
        if free.ndim != 2 or free.shape[0] != free.shape[1] or fixed.shape != free.shape:
            raise ValidationError("mask and fixed values must be matching square matrices")
        if np.any(fixed[free] != 0):
            raise ValidationError("fixed_values must be zero at free positions")
        free.setflags(write=False)
        fixed.setflags(write=False)
        object.__setattr__(self, "free", free)
        object.__setattr__(self, "fixed_values", fixed)

    @property
    def d_x(self) -> int:
        return self.free.shape[0]

    @property
    def d_m(self) -> int:
        return int(self.free.sum())

    def to_json(self) -> dict:
        return {"type": "explicit", "free": self.free.astype(int).tolist(),
                "fixed_values": self.fixed_values.tolist()}

    @classmethod
    def from_json(cls, obj: dict, d_x: int | None = None) -> "ParamMask":
        kind = obj.get("type")
        if kind == "top_left":
            if d_x is None:
                raise ValidationError("top_left mask needs the state dimension")
            return top_left_mask(d_x, int(obj["k"]))
        if kind == "explicit":
            free = np.array(obj["free"], dtype=bool)
            fixed = obj.get("fixed_values")
            return cls(free, np.zeros(free.shape) if fixed is None else fixed)
        raise ValidationError(f"unknown mask type {kind!r}")


@dataclass(frozen=True, eq=False)
class EstimateReport:
    A_hat: np.ndarray
    per_step_risk: float
    total_risk: float
    T: int
    m: int
    seed: int
    overflowed: bool = False


def top_left_mask(d_x: int, k: int) -> ParamMask:
    """Free entries exactly on the leading k x k block."""
    if not 1 <= k <= d_x:
        raise ValidationError(f"k must be in [1, {d_x}], got {k}")
    free = np.zeros((d_x, d_x), dtype=bool)
    free[:k, :k] = True
    return ParamMask(free, np.zeros((d_x, d_x)))


def _spd_solve(G: np.ndarray, b: np.ndarray, row: int) -> np.ndarray:
    # Jacobi scaling keeps Cholesky usable when coordinates differ by many
    # orders of magnitude (unstable Jordan modes).
    d = np.sqrt(np.diag(G))
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise RankDeficiencyError(f"Gram matrix for row {row} is singular", row=row)
    Gs = G / np.outer(d, d)
    try:
        cf = sla.cho_factor(Gs, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError):
        raise RankDeficiencyError(f"Gram matrix for row {row} is rank deficient", row=row) from None
    if np.linalg.cond(Gs) > 1e13:
        raise RankDeficiencyError(f"Gram matrix for row {row} is numerically singular", row=row)
    return sla.cho_solve(cf, b / d) / d


def least_squares_masked(states: TrajectoryBatch, mask: ParamMask, ridge: float = 0.0) -> np.ndarray:
    """Row-wise least squares for X_{t+1} ~ A X_t over the free entries of each row."""
    if states.kind != "state":
        raise ValidationError("least squares needs a state batch")
    if ridge < 0:
        raise ValidationError("ridge must be non-negative")
    X = states.data
    if X.shape[2] != mask.d_x:
        raise ValidationError(f"mask is {mask.d_x}-dimensional but states are {X.shape[2]}-dimensional")
    if X.shape[1] < 2:
        raise ValidationError("need at least two time steps")
    past = X[:, :-1].reshape(-1, mask.d_x)
    nxt = X[:, 1:].reshape(-1, mask.d_x)
    gram = past.T @ past
    cross = nxt.T @ past  # cross[i, j] = sum x_{t+1,i} x_{t,j}
    A_hat = mask.fixed_values.copy()
    for i in range(mask.d_x):
        S = np.flatnonzero(mask.free[i])
        if S.size == 0:
            continue
        rhs = cross[i, S] - mask.fixed_values[i] @ gram[:, S]
        G = gram[np.ix_(S, S)] + ridge * np.eye(S.size)
        A_hat[i, S] = _spd_solve(G, rhs, i)
    return A_hat


def population_risk(model: StateSpaceModel, A_hat: np.ndarray, T: int) -> float:
    """sum_{t=1}^{T-1} E||(A_hat - A) X_t||^2 under the model."""
    G = state_covariance(model, T)[: T - 1].sum(axis=0)
    D = np.asarray(A_hat) - model.A
    with np.errstate(over="ignore", invalid="ignore"):
        r = float(np.einsum("ij,jk,ik->", D, G, D))
    if not np.isfinite(r):
        raise NumericalError("risk overflowed")
    return r


def estimate(states: TrajectoryBatch, model: StateSpaceModel, mask: ParamMask,
             ridge: float = 0.0) -> EstimateReport:
    """Fit by least squares and score by population risk; per-step risk is total / T."""
    A_hat = least_squares_masked(states, mask, ridge)
    T = states.T
    total = population_risk(model, A_hat, T)
    return EstimateReport(A_hat, total / T, total, T, states.m, states.seed)


def analytic_best_in_class(model: StateSpaceModel, mask: ParamMask, T: int) -> tuple[np.ndarray, float]:
    """Exact minimiser of the population risk over the masked class.

    Row i decouples: with d = a_i - A*_i split into free part u and pinned
    part c, the risk is the quadratic form of the summed Gram, minimised by
    u = -G_SS^{-1} G_SN c, leaving c^T (G / G_SS) c.
    """
    if not model.is_full_observation:
        raise ValidationError("analytic_best_in_class needs a full-observation model")
    if mask.d_x != model.d_x:
        raise ValidationError("mask dimension does not match the model")
    if T < 2:
        raise ValidationError("T must be at least 2")
    G = state_covariance(model, T)[: T - 1].sum(axis=0)
    if not np.all(np.isfinite(G)):
        raise NumericalError("summed Gram overflowed")
    A_star = model.A
    A_opt = mask.fixed_values.copy()
    total = 0.0
    for i in range(model.d_x):
        S = np.flatnonzero(mask.free[i])
        N = np.flatnonzero(~mask.free[i])
        c = mask.fixed_values[i, N] - A_star[i, N]
        if S.size == 0:
            total += float(c @ G[np.ix_(N, N)] @ c)
            continue
        if N.size == 0:
            A_opt[i] = A_star[i]
            continue
        G_ss = G[np.ix_(S, S)]
        G_sn = G[np.ix_(S, N)]
        u = -_spd_solve(G_ss, G_sn @ c, i)
        A_opt[i, S] = A_star[i, S] + u
        # c^T G_NN c + 2 u^T G_SN c + u^T G_SS u at the minimiser.
        total += float(c @ G[np.ix_(N, N)] @ c + u @ (G_sn @ c))
    return A_opt, max(total, 0.0)


def unstable_thresholds(spec: JordanSpec) -> tuple[int, int]:
    """(sum of squared multiplicities, that minus the multiplicity sum) over |eig| >= 1."""
    mult = Counter()
    for eig, size in spec.blocks:
        if abs(eig) >= 1:
            mult[eig] += size
    sq = sum(v * v for v in mult.values())
    return sq, sq - sum(mult.values())
