#!/usr/bin/env python3
"""Spot-check every loss against enumeration and finite differences on random lattices."""

import argparse

import numpy as np

from gtct.acceptance import gradient_instance
from gtct.oracle import finite_diff_grad, relative_error


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps", type=float, default=1e-5)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    for kind in ("rnnt", "ctct", "monornnt", "ar-rnnt", "ctc"):
        worst = 0.0
        for _ in range(args.trials):
            grad, fn, lat = gradient_instance(kind, rng)
            worst = max(worst, relative_error(grad, finite_diff_grad(fn, lat, args.eps)))
        print(f"{kind:9s} max relative error {worst:.2e} over {args.trials} lattices")


if __name__ == "__main__":
    main()
