#!/usr/bin/env python3
"""Run the toy training-strategy study and write a JSON summary.

    python scripts/train_strategies.py --seeds 0 1 2 --out results/strategies.json
"""

import argparse
import json
import logging
import time
from pathlib import Path

from gtct.toymodel.experiments import ExperimentConfig, strategy_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=None, help="override scratch epochs")
    ap.add_argument("--out", default="results/strategies.json")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    cfg = ExperimentConfig()
    if args.epochs is not None:
        cfg = ExperimentConfig(epochs=args.epochs)
    t0 = time.time()
    study = strategy_study(tuple(args.seeds), cfg)
    study["wall_seconds"] = time.time() - t0

    for seed, res, chk in zip(args.seeds, study["results"], study["checks"]):
        errs = {k: round(v["dev_token_error"], 4) for k, v in res["runs"].items()}
        print(f"seed {seed}: {errs}")
        print(f"  checks: {chk}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(study, indent=2, default=str))
    print(f"wrote {out} ({study['wall_seconds']:.0f}s)")


if __name__ == "__main__":
    main()
