#!/usr/bin/env python3
"""Run the month-long strategy comparison on synthetic weather.

Generates a config, learns uncertainty sets from a 60-day synthetic record,
simulates every strategy over the requested window, and prints the resulting
energy/violation tradeoff table.  All artifacts land under --out.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from greenmpc.cli import main as cli


def build_config(out: Path, seed: int, days: int, omega: float) -> Path:
    noise = {
        "ar1_rho": 0.6,
        "temp_sigma_c": 0.5, "temp_clip_c": 0.5,
        "solar_sigma_wm2": 0.5, "solar_clip_wm2": 0.5,
    }
    cfg = {
        "seed": seed,
        "controller": {"horizon": 5, "omega": omega},
        "uncertainty": {"max_train_samples": 200},
        "learning_data": {"synthetic": dict(
            start="2018-01-01T00:00:00Z", days=60, **noise)},
        "simulation_data": {"synthetic": dict(
            start="2018-03-15T00:00:00Z", days=days, **noise)},
        "sim_hours": days * 24,
        "output_dir": str(out / "out"),
        "models_dir": str(out / "models"),
    }
    path = out / "config.json"
    path.write_text(json.dumps(cfg, indent=2) + "\n")
    return path


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/synthetic_month"))
    ap.add_argument("--seed", type=int, default=813)
    ap.add_argument("--days", type=int, default=30)
    ap.add_argument("--omega", type=float, default=6.0,
                    help="l1 budget for the fixed-ball robust strategy")
    args = ap.parse_args(argv)

    args.out.mkdir(parents=True, exist_ok=True)
    config = build_config(args.out, args.seed, args.days, args.omega)

    rc = cli(["learn", "--config", str(config)])
    if rc:
        return rc
    rc = cli(["simulate", "--config", str(config), "--strategy", "all"])
    if rc:
        return rc

    tables = sorted((args.out / "out").glob("tradeoff_*.csv"))
    print(f"\n{tables[-1]}:")
    print(tables[-1].read_text())
    return 0


if __name__ == "__main__":
    sys.exit(main())
