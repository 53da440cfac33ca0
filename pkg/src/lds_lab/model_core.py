"""Gaussian state-space models: construction, simulation and second moments.

The generative model is

    X_1 ~ N(0, Sigma_init)
    X_{t+1} = A X_t + W_{t+1},   W ~ N(0, Sigma_W)
    Y_t     = C X_t + V_t,       V ~ N(0, Sigma_V)

with all noise terms mutually independent.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import NumericalError, OutputError, SimulationOverflowError, ValidationError

#: Largest magnitude tolerated in covariance recursions before declaring overflow.
OVERFLOW_LIMIT = 1e300
#: Default cap on T * d_Y for dense output covariances.
COV_CAP = 4000
#: Trajectories per RNG block. Part of the determinism contract: changing it
#: changes the sampled numbers.
SIM_BLOCK = 256

_SYM_TOL = 1e-12
_PSD_TOL = 1e-10


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=float, copy=True)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


def _check_cov(S: np.ndarray, name: str, n: int) -> None:
    if S.shape != (n, n):
        raise ValidationError(f"{name} must be {n}x{n}, got {S.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > _SYM_TOL:
        raise ValidationError(f"{name} is not symmetric")
    if n and np.linalg.eigvalsh(S).min() < -_PSD_TOL:
        raise ValidationError(f"{name} is not positive semi-definite")


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Immutable linear-Gaussian state-space model."""

    A: np.ndarray
    C: np.ndarray
    Sigma_W: np.ndarray
    Sigma_V: np.ndarray
    Sigma_init: np.ndarray

    def __post_init__(self):
        for name in ("A", "C", "Sigma_W", "Sigma_V", "Sigma_init"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        d_x, d_y = self.A.shape[0], self.C.shape[0]
        if d_x < 1 or d_y < 1:
            raise ValidationError("d_X and d_Y must be at least 1")
        if self.A.shape != (d_x, d_x):
            raise ValidationError(f"A must be square, got {self.A.shape}")
        if self.C.shape != (d_y, d_x):
            raise ValidationError(f"C must be {d_y}x{d_x}, got {self.C.shape}")
        _check_cov(self.Sigma_W, "Sigma_W", d_x)
        _check_cov(self.Sigma_V, "Sigma_V", d_y)
        _check_cov(self.Sigma_init, "Sigma_init", d_x)

    @property
    def d_x(self) -> int:
        return self.A.shape[0]

    @property
    def d_y(self) -> int:
        return self.C.shape[0]

    @property
    def is_full_observation(self) -> bool:
        return (
            self.d_x == self.d_y
            and np.array_equal(self.C, np.eye(self.d_x))
            and not np.any(self.Sigma_V)
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name in ("A", "C", "Sigma_W", "Sigma_V", "Sigma_init"):
            a = np.ascontiguousarray(getattr(self, name), dtype="<f8")
            h.update(name.encode())
            h.update(np.asarray(a.shape, dtype="<i8").tobytes())
            h.update(a.tobytes())
        return h.hexdigest()[:16]

    def with_(self, **changes) -> "StateSpaceModel":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("A", "C", "Sigma_W", "Sigma_V", "Sigma_init")}

    @classmethod
    def from_dict(cls, d: dict) -> "StateSpaceModel":
        try:
            return cls(d["A"], d["C"], d["Sigma_W"], d["Sigma_V"], d["Sigma_init"])
        except KeyError as exc:
            raise ValidationError(f"model definition missing key {exc}") from None


@dataclass(frozen=True)
class JordanSpec:
    """Ordered (eigenvalue, block size) pairs of a real Jordan matrix."""

    blocks: tuple[tuple[float, int], ...]

    def __post_init__(self):
        blocks = tuple((float(e), int(s)) for e, s in self.blocks)
        if not blocks:
            raise ValidationError("JordanSpec needs at least one block")
        for eig, size in blocks:
            if size < 1:
                raise ValidationError(f"block size must be >= 1, got {size}")
            if not np.isfinite(eig):
                raise ValidationError("eigenvalues must be finite")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dimension(self) -> int:
        return sum(s for _, s in self.blocks)

    def matrix(self) -> np.ndarray:
        n = self.dimension
        A = np.zeros((n, n))
        i = 0
        for eig, size in self.blocks:
            A[i : i + size, i : i + size] = eig * np.eye(size) + np.eye(size, k=1)
            i += size
        return A

    def to_json(self) -> list[dict]:
        return [{"eig": e, "size": s} for e, s in self.blocks]

    @classmethod
    def from_json(cls, items: Iterable[dict]) -> "JordanSpec":
        try:
            return cls(tuple((item["eig"], item["size"]) for item in items))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad JordanSpec entry: {exc}") from None


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """m x T x d array of simulated states or observations."""

    data: np.ndarray
    kind: str
    seed: int
    model_hash: str

    def __post_init__(self):
        if self.kind not in ("state", "observation"):
            raise ValidationError(f"kind must be 'state' or 'observation', got {self.kind!r}")
        if self.data.ndim != 3 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValidationError(f"data must be m x T x d with m, T >= 1, got {self.data.shape}")

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    def to_csv(self, path) -> Path:
        """Write row-major ``traj,t,dim,value`` CSV plus a ``.json`` sidecar.

        ``traj`` and ``dim`` are 0-based, ``t`` is 1-based.
        """
        path = Path(path)
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["traj", "t", "dim", "value"])
                for i in range(self.m):
                    for t in range(self.T):
                        for j in range(self.dim):
                            w.writerow([i, t + 1, j, repr(float(self.data[i, t, j]))])
            sidecar = path.with_suffix(".json")
            sidecar.write_text(
                json.dumps(
                    {"seed": self.seed, "model_hash": self.model_hash, "T": self.T, "m": self.m,
                     "kind": self.kind, "dim": self.dim},
                    indent=2,
                )
                + "\n"
            )
        except OSError as exc:
            raise OutputError(f"cannot write trajectories to {path}: {exc}") from exc
        return path

    @classmethod
    def from_csv(cls, path) -> "TrajectoryBatch":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        data = np.empty((meta["m"], meta["T"], meta["dim"]))
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for traj, t, dim, value in reader:
                data[int(traj), int(t) - 1, int(dim)] = float(value)
        return cls(data, meta["kind"], meta["seed"], meta["model_hash"])


def make_jordan_system(
    spec: JordanSpec,
    sigma_w: float,
    sigma_v: float = 0.0,
    sigma_init: float | None = None,
    d_y_mode: str = "full",
) -> StateSpaceModel:
    """Block-diagonal Jordan system with isotropic noises.

    ``d_y_mode="full"`` observes the whole state (C = I); ``"scalar"`` observes
    the first state coordinate only. ``sigma_init`` defaults to ``sigma_w``.
    """
    if sigma_init is None:
        sigma_init = sigma_w
    for name, val in (("sigma_w", sigma_w), ("sigma_v", sigma_v), ("sigma_init", sigma_init)):
        if val < 0 or not np.isfinite(val):
            raise ValidationError(f"{name} must be a finite non-negative scale, got {val}")
    A = spec.matrix()
    n = A.shape[0]
    if d_y_mode == "full":
        C = np.eye(n)
    elif d_y_mode == "scalar":
        C = np.zeros((1, n))
        C[0, 0] = 1.0
    else:
        raise ValidationError(f"d_y_mode must be 'full' or 'scalar', got {d_y_mode!r}")
    d_y = C.shape[0]
    return StateSpaceModel(
        A=A,
        C=C,
        Sigma_W=sigma_w**2 * np.eye(n),
        Sigma_V=sigma_v**2 * np.eye(d_y),
        Sigma_init=sigma_init**2 * np.eye(n),
    )


def scalar_random_walk(q: float, r: float, sigma_init: float = 1.0) -> StateSpaceModel:
    """Noisy observations of a scalar random walk; ``q``, ``r``, ``sigma_init`` are variances."""
    return StateSpaceModel([[1.0]], [[1.0]], [[q]], [[r]], [[sigma_init]])


def psd_factor(S: np.ndarray) -> np.ndarray:
    """Return F with F F^T = S, clipping negative eigenvalues at zero."""
    w, U = np.linalg.eigh(S)
    return U * np.sqrt(np.clip(w, 0.0, None))


def _block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(ss))


def _simulate_block(model: StateSpaceModel, T: int, n: int, seed: int, block: int):
    d_x, d_y = model.d_x, model.d_y
    F0, FW, FV = psd_factor(model.Sigma_init), psd_factor(model.Sigma_W), psd_factor(model.Sigma_V)
    z0 = _block_rng(seed, 0, block).standard_normal((n, d_x))
    zw = _block_rng(seed, 1, block).standard_normal((n, max(T - 1, 0), d_x))
    zv = _block_rng(seed, 2, block).standard_normal((n, T, d_y))
    X = np.empty((n, T, d_x))
    with np.errstate(over="ignore", invalid="ignore"):
        X[:, 0] = z0 @ F0.T
        W = zw @ FW.T
        for t in range(1, T):
            X[:, t] = X[:, t - 1] @ model.A.T + W[:, t - 1]
        Y = X @ model.C.T + zv @ FV.T
    return X, Y


def simulate(
    model: StateSpaceModel,
    T: int,
    m: int,
    seed: int,
    workers: int | None = None,
) -> tuple[TrajectoryBatch, TrajectoryBatch]:
    """Draw m independent trajectories of length T.

    Noise for trajectories ``[b*SIM_BLOCK, (b+1)*SIM_BLOCK)`` comes from Philox
    streams keyed by ``(seed, stream, b)``, so the output does not depend on
    ``workers`` or scheduling order.
    """
    if T < 1 or m < 1:
        raise ValidationError(f"need T >= 1 and m >= 1, got T={T}, m={m}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must be a 64-bit unsigned integer")
    starts = list(range(0, m, SIM_BLOCK))
    jobs = [(min(SIM_BLOCK, m - s), b) for b, s in enumerate(starts)]

    def run(job):
        n, b = job
        return _simulate_block(model, T, n, seed, b)

    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    X = np.concatenate([p[0] for p in parts], axis=0)
    Y = np.concatenate([p[1] for p in parts], axis=0)
    for arr, what in ((X, "state"), (Y, "observation")):
        bad = ~np.isfinite(arr).all(axis=(0, 2))
        if bad.any():
            t = int(np.argmax(bad)) + 1
            raise SimulationOverflowError(f"non-finite {what} values at t={t}", t=t)
    h = model.fingerprint()
    return TrajectoryBatch(X, "state", seed, h), TrajectoryBatch(Y, "observation", seed, h)


def state_covariance(model: StateSpaceModel, T: int) -> np.ndarray:
    """Marginal state covariances Gamma_1..Gamma_T, stacked as a (T, d_X, d_X) array."""
    if T < 1:
        raise ValidationError(f"T must be >= 1, got {T}")
    A, Q = model.A, model.Sigma_W
    G = np.empty((T, model.d_x, model.d_x))
    G[0] = model.Sigma_init
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, T):
            g = A @ G[t - 1] @ A.T + Q
            G[t] = 0.5 * (g + g.T)
            if not np.all(np.abs(G[t]) <= OVERFLOW_LIMIT):
                raise SimulationOverflowError(f"state covariance overflows at t={t + 1}", t=t + 1)
    return G


def matrix_powers(A: np.ndarray, n: int) -> np.ndarray:
    """A^0..A^{n-1} stacked as (n, d, d)."""
    d = A.shape[0]
    P = np.empty((n, d, d))
    if n == 0:
        return P
    P[0] = np.eye(d)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n):
            P[k] = P[k - 1] @ A
            if not np.all(np.abs(P[k]) <= OVERFLOW_LIMIT):
                raise SimulationOverflowError(f"A^{k} overflows", t=k)
    return P


def output_covariance(model: StateSpaceModel, T: int, cap: int = COV_CAP) -> np.ndarray:
    """Dense Cov(Y_{1:T}) of size (T d_Y) x (T d_Y), time-major ordering."""
    d_y = model.d_y
    n = T * d_y
    if n > cap:
        raise ValidationError(f"T*d_Y = {n} exceeds the covariance cap {cap}")
    G = state_covariance(model, T)
    P = matrix_powers(model.A, T)
    C = model.C
    out = np.empty((n, n))
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(T):
            CG = C @ G[s]
            # block[k] = C Gamma_s (A^k)^T C^T = Cov(Y_s, Y_{s+k})
            blocks = np.einsum("ij,klj,ml->kim", CG, P[: T - s], C)
            row = blocks.transpose(1, 0, 2).reshape(d_y, (T - s) * d_y)
            out[s * d_y : (s + 1) * d_y, s * d_y :] = row
            out[s * d_y :, s * d_y : (s + 1) * d_y] = row.T
        for s in range(T):
            out[s * d_y : (s + 1) * d_y, s * d_y : (s + 1) * d_y] += model.Sigma_V
    if not np.all(np.abs(out) <= OVERFLOW_LIMIT):
        raise SimulationOverflowError("output covariance overflows")
    return 0.5 * (out + out.T)


def charpoly(A: np.ndarray) -> np.ndarray:
    """Characteristic polynomial coefficients [1, c_1, ..., c_n] via Faddeev-LeVerrier."""
    n = A.shape[0]
    coeffs = np.empty(n + 1)
    coeffs[0] = 1.0
    M = np.zeros_like(A, dtype=float)
    I = np.eye(n)
    for k in range(1, n + 1):
        M = A @ M + coeffs[k - 1] * I
        coeffs[k] = -np.trace(A @ M) / k
    return coeffs


def random_similarity(
    model: StateSpaceModel,
    seed: int,
    kappa_max: float,
    transform: np.ndarray | None = None,
    max_tries: int = 100,
) -> StateSpaceModel:
    """Replace A by P^{-1} A P for a random well-conditioned P.

    P has i.i.d. standard normal entries and is redrawn until
    ``cond(P) <= kappa_max``. Passing ``transform`` skips the sampling.
    """
    if not kappa_max > 1:
        raise ValidationError(f"kappa_max must exceed 1, got {kappa_max}")
    d = model.d_x
    if transform is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
        for _ in range(max_tries):
            P = rng.standard_normal((d, d))
            if np.linalg.cond(P) <= kappa_max:
                break
        else:
            raise NumericalError(
                f"{max_tries} draws of P all exceeded kappa_max={kappa_max}; use a larger cap"
            )
    else:
        P = np.asarray(transform, dtype=float)
    A_new = np.linalg.solve(P, model.A @ P)
    before, after = charpoly(model.A), charpoly(A_new)
    scale = np.maximum(1.0, np.abs(before))
    if np.max(np.abs(before - after) / scale) > 1e-6:
        raise NumericalError("similarity transform changed the spectrum beyond 1e-6")
    return model.with_(A=A_new)
