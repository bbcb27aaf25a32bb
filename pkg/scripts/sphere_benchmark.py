"""Median best loss of the CMA-ES on shifted sphere functions.

    python scripts/sphere_benchmark.py --dims 2 5 10 --seeds 10
"""
import argparse

import numpy as np

from posthoc_ens.cmaes import minimize


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 5, 10])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--evals-per-dim", type=int, default=200)
    ap.add_argument("--sigma0", type=float, default=0.3)
    args = ap.parse_args()

    for n in args.dims:
        center = np.random.default_rng(n).uniform(-1, 1, n)

        def f(x):
            return float(np.sum((x - center) ** 2))

        best = [minimize(f, np.zeros(n), args.sigma0, args.evals_per_dim * n, seed).best_loss
                for seed in range(args.seeds)]
        print(f"n={n:3d} budget={args.evals_per_dim * n:6d} median={np.median(best):.3e} "
              f"worst={max(best):.3e}")


if __name__ == "__main__":
    main()
