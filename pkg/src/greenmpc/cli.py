"""Command-line entry point: learn sets, simulate strategies, emit plot data.

Exit codes: 0 success, 2 configuration problem, 3 data problem (missing files,
gaps, insufficient samples), 4 optimizer or controller failure.  Output files
are written atomically (temp file then rename) so a crashed run never leaves a
truncated report behind.  Set GREENMPC_LOG=DEBUG|INFO|... for diagnostics.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import (ExperimentConfig, apply_overrides, build_model,
                     config_to_dict, derived_seed, load_config, make_dataset,
                     simulation_window)
from .controllers import (CEMPC, DDRMPC, PB, RBC, RMPC, STRATEGIES, ConfigError,
                          ControllerError, make_controller)
from .harness import (SimulationError, SimulationReport, compare_strategies,
                      run_closed_loop, write_steps_csv, write_tradeoff_csv)
from .lp import LpError
from .robust import RobustError
from .thermal import NetworkError
from .uncertainty import (CalibrationError, UncertaintyError, calibrate_theta,
                          load_uncertainty_set, required_calibration_count,
                          save_uncertainty_set, svc_set, train_svc)
from .weather import (CHANNELS, WeatherDataError, extract_errors,
                      format_timestamp, split_samples)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4

log = logging.getLogger("greenmpc")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_write_with(path: Path, writer) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    return cfg


def _period_tag(start: int, steps: int) -> str:
    stamp = format_timestamp(start).replace("-", "").replace(":", "")
    return f"{stamp}_{steps}h"


def _model_path(cfg: ExperimentConfig, channel: str) -> Path:
    return Path(cfg.models_dir) / f"uncertainty_{channel}.json"


def cmd_learn(args) -> int:
    cfg = _load_cfg(args)
    unc = cfg.uncertainty
    nu = unc.nu if unc.nu is not None else unc.eps
    n_calib = (unc.n_calib if unc.n_calib is not None
               else required_calibration_count(unc.eps, unc.beta))
    dataset = make_dataset(cfg, "learning")
    split_seed = derived_seed(cfg.seed, "learning") ^ 0x5EED
    model_dir = Path(cfg.models_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "eps": unc.eps, "beta": unc.beta, "nu": nu, "n_calib": n_calib,
        "seed": cfg.seed, "horizon": cfg.controller.horizon, "channels": {},
    }
    for channel in CHANNELS:
        errs = extract_errors(dataset, cfg.controller.horizon, channel)
        log.info("channel %s: %d error samples (%d issuances skipped)",
                 channel, errs.samples.shape[0], errs.gap_report.n_skipped)
        train, calib = split_samples(errs.samples, n_calib, split_seed,
                                     eps=unc.eps, beta=unc.beta)
        if unc.max_train_samples is not None:
            train = train[:unc.max_train_samples]
        model = train_svc(train, nu, kkt_tol=unc.kkt_tol)
        model = calibrate_theta(model, calib, unc.eps, unc.beta)
        us = svc_set(channel, model)
        path = _model_path(cfg, channel)
        _atomic_write_with(path, lambda p, us=us: save_uncertainty_set(us, p))
        report["channels"][channel] = {
            "file": str(path),
            "theta": model.theta,
            "n_support": model.n_support,
            "n_train": int(train.shape[0]),
            "n_calib": int(calib.shape[0]),
            "kkt_residual": model.metadata.get("kkt_residual"),
            "iterations": model.metadata.get("iterations"),
            "gap_report": errs.gap_report.to_dict(),
        }
        print(f"learn {channel}: n_train={train.shape[0]} n_calib={calib.shape[0]} "
              f"theta={model.theta:.6g} n_support={model.n_support}")
    _atomic_write_text(model_dir / "learning_report.json",
                       json.dumps(report, indent=2) + "\n")
    print(f"wrote {model_dir / 'learning_report.json'}")
    return EXIT_OK


def _load_sets(cfg: ExperimentConfig):
    sets = []
    for channel in CHANNELS:
        path = _model_path(cfg, channel)
        if not path.exists():
            raise SimulationError(
                f"missing uncertainty model {path}; run `greenmpc learn` first")
        sets.append(load_uncertainty_set(path))
    return sets


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    model = build_model(cfg)
    schedule = cfg.schedule
    dataset = make_dataset(cfg, "simulation")
    start, steps = simulation_window(cfg, dataset)
    period = _period_tag(start, steps)
    requested = args.strategy or [cfg.controller.strategy]
    if "all" in requested:
        requested = list(STRATEGIES)
    if args.omega_sweep and RMPC not in requested:
        requested.append(RMPC)
    for name in requested:
        if name not in STRATEGIES:
            raise ConfigError(f"unknown strategy {name!r}; expected {STRATEGIES} or 'all'")
    runs: list[tuple[str, str, float]] = []     # (label, strategy, omega)
    for name in requested:
        if name == RMPC and args.omega_sweep:
            runs.extend((f"RMPC_om{k}", RMPC, float(k)) for k in range(7))
        else:
            runs.append((name, name, cfg.controller.omega))
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x0 = np.full(model.n, cfg.initial_temp_c)
    dd_sets = _load_sets(cfg) if any(s == DDRMPC for _, s, _ in runs) else None
    reports = []
    for label, strategy, omega in runs:
        ctrl_cfg = dataclasses.replace(cfg.controller, strategy=strategy, omega=omega)
        controller = make_controller(ctrl_cfg, model, schedule,
                                     dd_sets if strategy == DDRMPC else None)
        controller.name = label
        meta = {"seed": cfg.seed, "omega": omega if strategy == RMPC else None,
                "period": period, "strategy": strategy}
        rep = run_closed_loop(model, controller, schedule, dataset, start, steps,
                              x0, cfg.ground_temp_c, fallback_config=ctrl_cfg,
                              meta=meta)
        reports.append(rep)
        _atomic_write_with(out_dir / f"report_{label}_{period}.json", rep.save)
        _atomic_write_with(out_dir / f"steps_{label}_{period}.csv",
                           lambda p, rep=rep: write_steps_csv(p, rep))
        m = rep.metrics
        print(f"simulate {label}: energy={m['energy_mwh']:.4f} MWh "
              f"violations={m['n_violations']}/{m['n_steps']} "
              f"({100 * m['violation_rate']:.2f}%) amount={m['violation_kh']:.4f} Kh"
              + (f" softened={m['n_softened']}" if m["n_softened"] else "")
              + (f" flagged={m['n_flagged']}" if m["n_flagged"] else ""))
    rows = compare_strategies(reports)
    _atomic_write_with(out_dir / f"tradeoff_{period}.csv",
                       lambda p: write_tradeoff_csv(p, rows))
    _atomic_write_text(out_dir / f"tradeoff_{period}.json",
                       json.dumps(rows, indent=2) + "\n")
    print(f"wrote {out_dir / f'tradeoff_{period}.csv'}")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    reports = [SimulationReport.load(p) for p in args.report]
    rows: list[tuple[int, str, float]] = []
    bound_done: set[int] = set()
    for rep in reports:
        for rec in rep.records:
            rows.append((rec.timestamp, f"{rep.strategy}.air_temp_c",
                         rec.x[rep.air_index]))
            rows.append((rec.timestamp, f"{rep.strategy}.u_w", rec.u_w))
            if rec.timestamp not in bound_done:
                bound_done.add(rec.timestamp)
                rows.append((rec.timestamp, "bound_c", rec.bound_c))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = ["timestamp,series,value"]
    lines += [f"{format_timestamp(t)},{series},{value!r}" for t, series, value in rows]
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _atomic_write_text(Path(args.out), text)
        print(f"wrote {args.out} ({len(rows)} rows)")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    cfg = _load_cfg(args)
    print(json.dumps(config_to_dict(cfg), indent=2))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greenmpc",
        description="Greenhouse heating control: learn forecast-error sets, "
                    "simulate control strategies, export plot data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_opts(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (dotted path, JSON value)")

    p = sub.add_parser("learn", help="train and calibrate uncertainty sets")
    add_config_opts(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("simulate", help="run closed-loop strategies")
    add_config_opts(p)
    p.add_argument("--strategy", action="append", default=[],
                   choices=[*STRATEGIES, "all"],
                   help="strategy to run (repeatable; default: config value)")
    p.add_argument("--omega-sweep", action="store_true",
                   help="run RMPC once per budget 0..6")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plotdata", help="flatten reports to long-format CSV")
    p.add_argument("--report", action="append", required=True,
                   help="simulation report JSON (repeatable)")
    p.add_argument("--out", default="-", help="output CSV path, '-' for stdout")
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("validate-config", help="parse, validate and echo a config")
    add_config_opts(p)
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("GREENMPC_LOG", "WARNING").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WeatherDataError, NetworkError, SimulationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LpError, RobustError, ControllerError, UncertaintyError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
