#!/usr/bin/env python3
"""Empirical coverage of calibrated uncertainty sets.

Repeatedly builds a set from fresh training/calibration draws of a correlated
2-D Gaussian, then measures how much of a large out-of-sample pool the set
contains.  The training-calibration guarantee promises coverage >= 1 - eps
with confidence 1 - beta, so roughly a (1 - beta) fraction of runs should
clear the 1 - eps line.  Writes one CSV row per run.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from greenmpc.uncertainty import (
    calibrate_theta,
    membership_values,
    required_calibration_count,
    train_svc,
)

FIELDS = ("run", "n_train", "n_calib", "nu", "theta", "n_support", "coverage")


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--train", type=int, default=150)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--beta", type=float, default=0.10)
    ap.add_argument("--nu", type=float, default=0.05)
    ap.add_argument("--pool", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=22)
    ap.add_argument("--out", type=Path, default=Path("runs/coverage.csv"))
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    chol = np.linalg.cholesky(np.array([[1.0, 0.35], [0.35, 0.5]]))

    def draw(n: int) -> np.ndarray:
        return rng.standard_normal((n, 2)) @ chol.T

    n_calib = required_calibration_count(args.eps, args.beta)
    pool = draw(args.pool)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    hits = 0
    with args.out.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FIELDS)
        writer.writeheader()
        for run in range(args.runs):
            model = train_svc(draw(args.train), args.nu)
            model = calibrate_theta(model, draw(n_calib), args.eps, args.beta)
            coverage = float(
                (membership_values(model, pool) <= model.theta).mean())
            hits += coverage >= 1.0 - args.eps
            writer.writerow({
                "run": run, "n_train": args.train, "n_calib": n_calib,
                "nu": args.nu, "theta": repr(model.theta),
                "n_support": len(model.alphas), "coverage": repr(coverage),
            })

    frac = hits / args.runs
    print(f"n_calib={n_calib}  runs={args.runs}  "
          f"coverage>={1 - args.eps:.2f} in {hits} runs ({100 * frac:.1f}%), "
          f"target {100 * (1 - args.beta):.0f}%")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
