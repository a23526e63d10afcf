#!/usr/bin/env python3
"""Show RNN-T runaway emission next to the monotonic decoders on an adversarial scorer."""

import argparse

from gtct.decode import hallucination_demo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=int, default=8)
    ap.add_argument("--K", type=int, default=3)
    ap.add_argument("--beam", type=int, default=10)
    args = ap.parse_args()
    demo = hallucination_demo(args.T, args.K, args.beam)
    print(f"T={demo['T']}  ln p(label)={demo['label_logprob']:.3f}  ln p(blank)={demo['blank_logprob']:.3f}")
    print(f"{'decoder':18s} {'emissions':>9s} {'frames':>6s} {'vectors':>7s}  runaway")
    for key, row in demo.items():
        if isinstance(row, dict):
            print(f"{key:18s} {row['emissions']:9d} {row['frames']:6d} {row['score_vectors']:7d}  {row['runaway']}")


if __name__ == "__main__":
    main()
