#!/usr/bin/env python3
"""Reproduce the Jordan-system phase transition (both panels) from the shipped configs.

Writes CSV/JSON/SVG under --out and prints the per-step risk table at the largest T.
"""

import argparse
from pathlib import Path

from lds_lab.experiments import emit_outputs, load_config, run_jordan_sweep

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/figure1")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    for panel in ("fig1a", "fig1b"):
        cfg = load_config(ROOT / "configs" / f"{panel}.json")
        res = run_jordan_sweep(cfg, args.threads)
        emit_outputs(res, Path(args.out) / panel)
        T = max(cfg.T)
        analytic = res.values("analytic_per_step", T=T)
        mc = res.values("mc_per_step", T=T)
        print(f"{panel}: per-step risk at T={T}")
        print(f"  {'k':>2}  {'analytic':>12}  {'monte carlo':>12}")
        for (_, k), val in sorted(analytic.items(), key=lambda kv: kv[0][1]):
            print(f"  {k:>2}  {_show(val):>12}  {_show(mc[(T, k)]):>12}")


def _show(v):
    return v if isinstance(v, str) else f"{v:.4g}"


if __name__ == "__main__":
    main()
