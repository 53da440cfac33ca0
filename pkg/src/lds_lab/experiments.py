"""Config-driven parameter sweeps with deterministic CSV / JSON / SVG output.

A config is one JSON document. Common keys::

    {
      "experiment": "jordan-sweep" | "filter-sweep" | "verify-lemmas" | "dare" | "kl" | "simulate",
      "model": {...},            # see build_model
      "T": [25, 50, 100, 200],
      "k": [1, 2, 3, 4],         # jordan-sweep
      "h": [1, 2, "T-1"],        # filter-sweep, or
      "h_rule": {"c": 0.5},      # h = max(1, floor(c log T))
      "m": 200,
      "master_seed": 1
    }

Grid points are evaluated concurrently; rows are always returned in grid
order, so output bytes do not depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .errors import NumericalError, OutputError, ValidationError
from .estimation import analytic_best_in_class, estimate, top_left_mask, unstable_thresholds
from .filter_bounds import (
    lemma_quadratic_brute_force,
    lemma_quadratic_forms,
    lemma_toeplitz_brute_force,
    lemma_toeplitz_closed_forms,
    optimal_truncated_filter,
    per_step_relaxed_bound,
    schur_lower_bound,
)
from .kalman import solve_dare, with_steady_state_init
from .model_core import (
    COV_CAP,
    JordanSpec,
    StateSpaceModel,
    make_jordan_system,
    output_covariance,
    scalar_random_walk,
    simulate,
)

EXPERIMENTS = ("jordan-sweep", "filter-sweep", "verify-lemmas", "dare", "kl", "simulate")
COLUMNS = ("experiment", "seed", "T", "param", "metric", "value")
OVERFLOW = "overflow"
CAP_EXCEEDED = "cap_exceeded"


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict | None = None
    T: list[int] = field(default_factory=list)
    k: list[int] | None = None
    h: list[Any] | None = None
    h_rule: dict | None = None
    m: int = 200
    master_seed: int = 0
    ridge: float = 0.0
    padding: str = "zero"
    cov_cap: int = COV_CAP
    tolerances: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {self.experiment!r}")
        if self.experiment in ("jordan-sweep", "filter-sweep"):
            if not self.T:
                raise ValidationError("T grid must be non-empty")
            if any(int(t) < 2 for t in self.T):
                raise ValidationError("every T must be at least 2")
        if self.experiment == "jordan-sweep" and not self.k:
            raise ValidationError("k grid must be non-empty")
        if self.experiment == "filter-sweep" and not (self.h or self.h_rule):
            raise ValidationError("filter-sweep needs an h grid or an h_rule")
        if self.m < 1:
            raise ValidationError("m must be >= 1")

    def to_dict(self) -> dict:
        d = {
            "experiment": self.experiment, "model": self.model, "T": self.T, "k": self.k,
            "h": self.h, "h_rule": self.h_rule, "m": self.m, "master_seed": self.master_seed,
            "ridge": self.ridge, "padding": self.padding, "cov_cap": self.cov_cap,
            "tolerances": self.tolerances,
        }
        d.update(self.extra)
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_KNOWN = {"experiment", "model", "T", "k", "h", "h_rule", "m", "master_seed", "ridge",
          "padding", "cov_cap", "tolerances"}


def config_from_dict(raw: dict, base_dir=None, seed_override: int | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict) or "experiment" not in raw:
        raise ValidationError("config must be a JSON object with an 'experiment' key")
    kwargs = {k: raw[k] for k in _KNOWN if k in raw and raw[k] is not None}
    kwargs["extra"] = {k: v for k, v in raw.items() if k not in _KNOWN}
    kwargs["base_dir"] = Path(base_dir) if base_dir else Path.cwd()
    if seed_override is not None:
        kwargs["master_seed"] = seed_override
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"bad config: {exc}") from None


def load_config(path, env=None) -> ExperimentConfig:
    """Read a JSON config; ``LDS_LAB_SEED`` in ``env`` overrides master_seed."""
    env = os.environ if env is None else env
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    seed = env.get("LDS_LAB_SEED")
    if seed is not None:
        try:
            seed = int(seed)
        except ValueError:
            raise ValidationError(f"LDS_LAB_SEED must be an integer, got {seed!r}") from None
    return config_from_dict(raw, path.parent, seed)


def build_model(spec: dict | str, base_dir: Path = Path(".")) -> StateSpaceModel:
    """Model from one of::

        {"jordan": [{"eig": 1.0, "size": 4}, ...], "sigma_w": 1, "sigma_v": 0,
         "sigma_init": 1, "observation": "full"}
        {"random_walk": {"q": 1, "r": 1}, "init": "steady" | <variance>}
        {"A": ..., "C": ..., "Sigma_W": ..., "Sigma_V": ..., "Sigma_init": ...}
        {"file": "other.json"}  or a bare path string
    """
    if isinstance(spec, str):
        spec = {"file": spec}
    if not isinstance(spec, dict):
        raise ValidationError("model definition must be an object")
    if "file" in spec:
        path = Path(base_dir) / spec["file"]
        if not path.exists():
            raise ValidationError(f"model file {path} does not exist")
        try:
            inner = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from None
        return build_model(inner.get("model", inner), path.parent)
    if "jordan" in spec:
        js = JordanSpec.from_json(spec["jordan"])
        return make_jordan_system(
            js,
            sigma_w=float(spec.get("sigma_w", 1.0)),
            sigma_v=float(spec.get("sigma_v", 0.0)),
            sigma_init=spec.get("sigma_init"),
            d_y_mode=spec.get("observation", "full"),
        )
    if "random_walk" in spec:
        rw = spec["random_walk"]
        model = scalar_random_walk(float(rw["q"]), float(rw["r"]))
        init = spec.get("init", "steady")
        if init == "steady":
            return with_steady_state_init(model)
        return model.with_(Sigma_init=np.array([[float(init)]]))
    return StateSpaceModel.from_dict(spec)


def jordan_spec_of(cfg: ExperimentConfig) -> JordanSpec:
    if not cfg.model or "jordan" not in cfg.model:
        raise ValidationError("jordan-sweep needs a model with a 'jordan' block list")
    return JordanSpec.from_json(cfg.model["jordan"])


def derive_seed(master: int, *keys: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def h_grid(cfg: ExperimentConfig, T: int) -> list[int]:
    hs: list[int] = []
    if cfg.h:
        for h in cfg.h:
            hs.append(T - 1 if h == "T-1" else int(h))
    if cfg.h_rule:
        c = float(cfg.h_rule["c"])
        hs.append(max(int(cfg.h_rule.get("min", 1)), int(math.floor(c * math.log(T)))))
    seen, out = set(), []
    for h in hs:
        if h not in seen and 1 <= h <= T - 1:
            seen.add(h)
            out.append(h)
    return out


# --------------------------------------------------------------------------
# results


@dataclass
class SweepResult:
    experiment: str
    rows: list[tuple]
    header: dict = field(default_factory=dict)

    def __eq__(self, other):
        return (
            isinstance(other, SweepResult)
            and self.experiment == other.experiment
            and self.header == other.header
            and [tuple(r) for r in self.rows] == [tuple(r) for r in other.rows]
        )

    def values(self, metric: str, **where) -> dict:
        """{(T, param): value} for one metric, optionally filtered."""
        out = {}
        for exp, seed, T, param, met, val in self.rows:
            if met != metric:
                continue
            if any({"T": T, "param": param, "seed": seed}[k] != v for k, v in where.items()):
                continue
            out[(T, param)] = val
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"experiment": self.experiment, "header": self.header, "columns": list(COLUMNS),
             "rows": [list(r) for r in self.rows]},
            indent=1,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SweepResult":
        d = json.loads(text)
        return cls(d["experiment"], [tuple(r) for r in d["rows"]], d["header"])


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def _num(x) -> float:
    return float(x)


def _run_grid(tasks: Sequence[Callable[[], list[tuple]]], threads: int | None) -> list[tuple]:
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(tasks) <= 1:
        chunks = [t() for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda f: f(), tasks))
    return [row for chunk in chunks for row in chunk]


def _header(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.fingerprint(), "version": __version__,
            "master_seed": cfg.master_seed}


# --------------------------------------------------------------------------
# experiments


def run_jordan_sweep(cfg: ExperimentConfig, threads: int | None = None) -> SweepResult:
    """Per (T, k): analytic best-in-class and Monte Carlo least-squares per-step risk.

    All k at a given T share one simulated data set, seeded from (master_seed, T).
    """
    exp = "jordan-sweep"
    spec = jordan_spec_of(cfg)
    model = build_model(cfg.model, cfg.base_dir)
    d_sq, d_sq_minus = unstable_thresholds(spec)
    ks = [int(k) for k in cfg.k]
    ridge = float(cfg.ridge)

    def task(T: int):
        def run():
            seed = derive_seed(cfg.master_seed, T)
            rows = []
            try:
                states, _ = simulate(model, T, cfg.m, seed)
            except NumericalError:
                states = None
            for k in ks:
                mask = top_left_mask(model.d_x, k)
                try:
                    _, total = analytic_best_in_class(model, mask, T)
                    analytic = total / T
                except NumericalError:
                    analytic = OVERFLOW
                if states is None:
                    mc = OVERFLOW
                else:
                    try:
                        mc = estimate(states, model, mask, ridge).per_step_risk
                    except NumericalError:
                        mc = OVERFLOW
                rows += [
                    (exp, seed, T, k, "analytic_per_step", analytic),
                    (exp, seed, T, k, "mc_per_step", mc),
                    (exp, seed, T, k, "d_star_sq", d_sq),
                    (exp, seed, T, k, "d_star_sq_minus", d_sq_minus),
                ]
            return rows
        return run

    rows = _run_grid([task(int(T)) for T in cfg.T], threads)
    rows.sort(key=lambda r: (ks.index(r[3]), cfg.T.index(r[2])))
    return SweepResult(exp, rows, _header(cfg))


def run_filter_sweep(cfg: ExperimentConfig, threads: int | None = None) -> SweepResult:
    """Per (T, h): excess of the best shared filter and its two lower bounds."""
    exp = "filter-sweep"
    model = build_model(cfg.model, cfg.base_dir)
    ssf = solve_dare(model)
    model = model.with_(Sigma_init=ssf.Sigma_ss)
    seed = cfg.master_seed

    def task(T: int):
        def run():
            hs = h_grid(cfg, T)
            try:
                cov = output_covariance(model, T, cap=cfg.cov_cap)
            except ValidationError:
                return [(exp, seed, T, h, m, CAP_EXCEEDED) for h in hs
                        for m in ("excess_total", "excess_per_step", "relaxed_sum", "schur_lower_bound")]
            rows = []
            for h in hs:
                try:
                    _, total, per = optimal_truncated_filter(model, T, h, cfg.padding, ssf=ssf, cov=cov)
                    relaxed = float(per_step_relaxed_bound(model, T, h, cfg.padding, ssf=ssf, cov=cov).sum())
                    schur = schur_lower_bound(model, T, h, cfg.padding, ssf=ssf, cov=cov)
                    vals = (total, per, relaxed, schur)
                except NumericalError:
                    vals = (OVERFLOW,) * 4
                for name, v in zip(("excess_total", "excess_per_step", "relaxed_sum", "schur_lower_bound"), vals):
                    rows.append((exp, seed, T, h, name, v if isinstance(v, str) else float(v)))
            return rows
        return run

    rows = [(exp, seed, None, None, "rho", ssf.rho)]
    grid = _run_grid([task(int(T)) for T in cfg.T], threads)
    grid.sort(key=lambda r: (r[3], cfg.T.index(r[2])))
    return SweepResult(exp, rows + grid, _header(cfg))


def verify_lemmas(Ns: Sequence[int], hs: Sequence[int], rhos: Sequence[float], tol: float = 1e-8):
    """Compare every lemma closed form with dense linear algebra.

    Returns (all_ok, cases) where each case is a JSON-ready dict.
    """
    cases = []
    ok = True
    for N in Ns:
        for h in hs:
            if not h < N:
                continue
            inv_c, cross_c = lemma_toeplitz_closed_forms(N, h)
            inv_b, cross_b = lemma_toeplitz_brute_force(N, h)
            errs = {"R22_inv": _relerr(inv_c, inv_b), "cross_term": _relerr(cross_c, cross_b)}
            for rho in rhos:
                q = lemma_quadratic_forms(rho, N, h)
                qb = lemma_quadratic_brute_force(rho, N, h)
                errs[f"q11@rho={rho}"] = _relerr(q[0], qb[0])
                errs[f"q_cross@rho={rho}"] = _relerr(q[1], qb[1])
            passed = all(e <= tol for e in errs.values())
            ok &= passed
            cases.append({"N": N, "h": h, "tol": tol, "passed": passed, "relative_errors": errs})
    return ok, cases


def _relerr(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def run_verify_lemmas(cfg: ExperimentConfig, threads: int | None = None) -> tuple[bool, list, SweepResult]:
    ex = cfg.extra
    ok, cases = verify_lemmas(ex.get("N", [3, 10, 50, 200]), ex.get("h_values", [1, 2, 5, 20]),
                              ex.get("rho", [0.0, 0.382, 0.9, 1.0]),
                              float(cfg.tolerances.get("lemma", 1e-8)))
    rows = []
    for c in cases:
        for name, err in c["relative_errors"].items():
            rows.append(("verify-lemmas", cfg.master_seed, c["N"], c["h"], name + "_relerr", err))
    return ok, cases, SweepResult("verify-lemmas", rows, _header(cfg))


def run_dare(cfg: ExperimentConfig) -> dict:
    return solve_dare(build_model(cfg.model, cfg.base_dir)).to_json()


def run_kl(cfg: ExperimentConfig) -> dict:
    from .risk_kl import gaussian_kl_full_obs, gaussian_kl_hidden

    ex = cfg.extra
    try:
        P = build_model(ex["P"], cfg.base_dir)
        Q = build_model(ex["Q"], cfg.base_dir)
    except KeyError as exc:
        raise ValidationError(f"kl config needs {exc}") from None
    T = int(ex.get("horizon", cfg.T[0] if cfg.T else 20))
    mode = ex.get("observation", "hidden")
    if mode == "full":
        return gaussian_kl_full_obs(P, Q, T).to_json()
    if mode == "hidden":
        return gaussian_kl_hidden(P, Q, T, cap=cfg.cov_cap).to_json()
    raise ValidationError(f"observation must be 'full' or 'hidden', got {mode!r}")


def run_simulate(cfg: ExperimentConfig, out_dir) -> list[Path]:
    model = build_model(cfg.model, cfg.base_dir)
    T = int(cfg.extra.get("horizon", cfg.T[0] if cfg.T else 100))
    states, obs = simulate(model, T, cfg.m, cfg.master_seed)
    out = _ensure_dir(out_dir)
    return [states.to_csv(out / "states.csv"), obs.to_csv(out / "observations.csv")]


# --------------------------------------------------------------------------
# output


def _ensure_dir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc}") from exc
    return out


PLOT_METRICS = {
    "jordan-sweep": ("analytic_per_step", "mc_per_step"),
    "filter-sweep": ("excess_per_step", "schur_lower_bound"),
}


def emit_outputs(result: SweepResult, out_dir, formats=("csv", "json", "svg"), stem: str = "results") -> list[Path]:
    from .svg import line_chart

    out = _ensure_dir(out_dir)
    written = []

    def write(path: Path, text: str):
        try:
            path.write_text(text)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from exc
        written.append(path)

    if "csv" in formats:
        write(out / f"{stem}.csv", result.to_csv())
    if "json" in formats:
        write(out / f"{stem}.json", result.to_json())
    if "svg" in formats:
        for metric in PLOT_METRICS.get(result.experiment, ()):
            series: dict[str, list] = {}
            for _, _, T, param, met, val in result.rows:
                if met == metric and T is not None:
                    pts = series.setdefault(f"{'k' if result.experiment == 'jordan-sweep' else 'h'}={param}", [])
                    pts.append((T, val if isinstance(val, (int, float)) else None))
            if series:
                write(out / f"{stem}_{metric}.svg",
                      line_chart(series, title=f"{result.experiment}: {metric}", xlabel="T", ylabel=metric))
    return written
