#!/usr/bin/env python
"""Benchmark the asymptotic theory against finite-size Monte Carlo.

Runs the standard 24-point grid (3 losses x {alpha, rho, lambda} corners at
delta=1), printing theory vs simulation with z-scores. The same grid gates
the release in tests/test_acceptance.py; this script exposes it for ad-hoc
exploration at other sizes and replicate counts.
"""

import argparse
import time

from gmm.cli import SimSpec, simulate_row, theory_row
from gmm.state_evolution import ModelParams


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=1000)
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--test-size", type=int, default=0,
                    help="Monte Carlo test points; 0 = exact population "
                         "error of each fitted classifier (default)")
    args = ap.parse_args()

    sim_spec = SimSpec(d=args.d, replicates=args.replicates, seed=args.seed,
                       test_size=args.test_size)
    worst = 0.0
    t0 = time.perf_counter()
    for loss in ("square", "logistic", "hinge"):
        for alpha in (1.5, 3.0):
            for rho in (0.25, 0.5):
                for lam in (1e-3, 1.0):
                    p = ModelParams(alpha=alpha, delta=1.0, rho=rho,
                                    lam=lam, loss=loss)
                    th = theory_row(p).eps_gen
                    row = simulate_row(p, sim_spec)
                    z = (row.eps_gen - th) / row.stderr_eps
                    worst = max(worst, abs(z))
                    print(f"{loss:8s} a={alpha:<4} rho={rho:<5} lam={lam:<6}"
                          f" theory={th:.5f} sim={row.eps_gen:.5f}"
                          f"+-{row.stderr_eps:.5f} z={z:+.2f}", flush=True)
    dt = time.perf_counter() - t0
    print(f"worst |z| = {worst:.2f}, wall time {dt:.0f} s")
    return 0 if worst <= 3.0 else 1


if __name__ == "__main__":
    raise SystemExit(main())
