#!/usr/bin/env python3
"""Window-length study for the q = r = 1 random walk.

Prints the decay rate of the optimal length-h filter's excess risk in h, the
per-step excess across T at fixed h, and the same under h(T) = floor(c log T)
for c on either side of 1 / (2 log(1/rho)).
"""

import argparse
import math

import numpy as np

from lds_lab.filter_bounds import optimal_truncated_filter
from lds_lab.kalman import solve_dare, with_steady_state_init
from lds_lab.model_core import output_covariance, scalar_random_walk


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--q", type=float, default=1.0)
    ap.add_argument("--r", type=float, default=1.0)
    ap.add_argument("--T", type=int, nargs="+", default=[100, 200, 400, 800])
    ap.add_argument("--h", type=int, default=3)
    args = ap.parse_args()

    model = with_steady_state_init(scalar_random_walk(args.q, args.r))
    ssf = solve_dare(model)
    c_star = 1 / (2 * math.log(1 / ssf.rho))
    print(f"rho = {ssf.rho:.10f}, critical c = {c_star:.4f}")

    T = max(args.T)
    cov = output_covariance(model, T)
    hs = np.arange(2, 11)
    logs = [math.log(optimal_truncated_filter(model, T, int(h), cov=cov)[2]) for h in hs]
    print(f"slope of log excess vs h at T={T}: {np.polyfit(hs, logs, 1)[0]:.4f} "
          f"(2 log rho = {2 * math.log(ssf.rho):.4f})")

    covs = {t: output_covariance(model, t) for t in args.T}
    print(f"\nper-step excess at fixed h={args.h}")
    for t in args.T:
        print(f"  T={t:>5}  {optimal_truncated_filter(model, t, args.h, cov=covs[t])[2]:.6g}")

    for c in (0.5 * c_star, c_star + 0.5):
        print(f"\nh(T) = floor({c:.3f} log T)")
        for t in args.T:
            h = max(1, math.floor(c * math.log(t)))
            print(f"  T={t:>5}  h={h:>2}  {optimal_truncated_filter(model, t, h, cov=covs[t])[2]:.6g}")


if __name__ == "__main__":
    main()
