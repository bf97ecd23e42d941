"""Command-line interface: exit codes, file outputs, overrides, determinism."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from greenmpc.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main


@pytest.fixture
def workdir(tmp_path):
    return tmp_path


def write_config(workdir: Path, **patches) -> Path:
    """Small, fast experiment: 4 learning days, short horizon."""
    cfg = {
        "seed": 7,
        "controller": {"horizon": 4},
        "learning_data": {"synthetic": {
            "days": 4, "temp_clip_c": 1.5, "solar_clip_wm2": 40.0}},
        "simulation_data": {"synthetic": {
            "start": "2018-02-01T00:00:00Z", "days": 2}},
        "sim_hours": 6,
        "output_dir": str(workdir / "out"),
        "models_dir": str(workdir / "models"),
    }
    for key, value in patches.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    path = workdir / "config.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


# --- validate-config --------------------------------------------------------------


def test_validate_config_echoes_normalized_form(workdir, capsys):
    path = write_config(workdir)
    assert main(["validate-config", "--config", str(path)]) == EXIT_OK
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["seed"] == 7
    assert echoed["controller"]["horizon"] == 4
    assert echoed["controller"]["u_max_w"] == 300000.0  # defaults filled in


def test_validate_config_round_trip_is_fixed_point(workdir, capsys):
    path = write_config(workdir)
    main(["validate-config", "--config", str(path)])
    first = capsys.readouterr().out
    echo_path = workdir / "echoed.json"
    echo_path.write_text(first)
    main(["validate-config", "--config", str(echo_path)])
    assert capsys.readouterr().out == first


def test_validate_config_unknown_key(workdir, capsys):
    path = workdir / "config.json"
    path.write_text(json.dumps({"controler": {}}))
    assert main(["validate-config", "--config", str(path)]) == EXIT_CONFIG
    assert "controler" in capsys.readouterr().err


def test_validate_config_bad_json(workdir, capsys):
    path = workdir / "config.json"
    path.write_text("{oops")
    assert main(["validate-config", "--config", str(path)]) == EXIT_CONFIG


def test_missing_config_file_is_data_error(workdir, capsys):
    assert main(["validate-config", "--config",
                 str(workdir / "nope.json")]) == EXIT_DATA


def test_set_override_applied(workdir, capsys):
    path = write_config(workdir)
    assert main(["validate-config", "--config", str(path),
                 "--set", "controller.strategy=RMPC",
                 "--set", "controller.omega=2"]) == EXIT_OK
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["controller"]["strategy"] == "RMPC"
    assert echoed["controller"]["omega"] == 2.0


def test_set_override_bad_key(workdir, capsys):
    path = write_config(workdir)
    assert main(["validate-config", "--config", str(path),
                 "--set", "controller.gain=1"]) == EXIT_CONFIG


# --- learn ------------------------------------------------------------------------


def test_learn_writes_models_and_report(workdir, capsys):
    path = write_config(workdir)
    assert main(["learn", "--config", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "learn solar:" in out and "learn temperature:" in out

    models = workdir / "models"
    assert (models / "uncertainty_solar.json").exists()
    assert (models / "uncertainty_temperature.json").exists()
    report = json.loads((models / "learning_report.json").read_text())
    assert report["n_calib"] == 45
    assert report["nu"] == 0.05
    for channel in ("solar", "temperature"):
        ch = report["channels"][channel]
        assert ch["n_calib"] == 45
        assert ch["theta"] > 0.0
        assert ch["kkt_residual"] <= 1e-6
        assert ch["n_support"] >= 1


def test_learn_is_deterministic(workdir):
    path = write_config(workdir)
    main(["learn", "--config", str(path)])
    first = (workdir / "models" / "uncertainty_solar.json").read_bytes()
    report_first = (workdir / "models" / "learning_report.json").read_text()
    main(["learn", "--config", str(path)])
    assert (workdir / "models" / "uncertainty_solar.json").read_bytes() == first
    assert (workdir / "models" / "learning_report.json").read_text() == report_first


def test_learn_rejects_undersized_calibration_split(workdir, capsys):
    path = write_config(workdir, uncertainty={"n_calib": 44})
    assert main(["learn", "--config", str(path)]) == EXIT_DATA
    err = capsys.readouterr().err
    assert "45" in err  # the required count is spelled out


def test_learn_needs_enough_samples(workdir, capsys):
    path = write_config(workdir, learning_data={"synthetic": {"days": 1}})
    assert main(["learn", "--config", str(path)]) == EXIT_DATA


def test_learn_perfect_forecasts_give_degenerate_sets(workdir):
    # theta is measured in whitened units, which blow up when the samples
    # are numerical dust; what must collapse is the raw-unit extent
    import numpy as np

    from greenmpc.robust import dual_support
    from greenmpc.uncertainty import load_uncertainty_set, to_polytope

    path = write_config(workdir, learning_data={"synthetic": {
        "days": 4, "temp_sigma_c": 0.0, "solar_sigma_wm2": 0.0,
        "temp_clip_c": None, "solar_clip_wm2": None}})
    assert main(["learn", "--config", str(path)]) == EXIT_OK
    for channel in ("solar", "temperature"):
        us = load_uncertainty_set(workdir / "models" / f"uncertainty_{channel}.json")
        poly = to_polytope(us)
        for i in range(us.dim):
            e = np.zeros(us.dim)
            e[i] = 1.0
            assert abs(dual_support(poly, e)) < 1e-6
            assert abs(dual_support(poly, -e)) < 1e-6


# --- simulate ---------------------------------------------------------------------


def _outputs(workdir):
    return sorted(p.name for p in (workdir / "out").iterdir())


def test_simulate_cempc_writes_reports(workdir, capsys):
    path = write_config(workdir)
    assert main(["simulate", "--config", str(path),
                 "--strategy", "CEMPC"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "simulate CEMPC:" in out
    names = _outputs(workdir)
    period = "20180201T000000Z_6h"
    assert f"report_CEMPC_{period}.json" in names
    assert f"steps_CEMPC_{period}.csv" in names
    assert f"tradeoff_{period}.csv" in names
    assert f"tradeoff_{period}.json" in names
    rows = json.loads((workdir / "out" / f"tradeoff_{period}.json").read_text())
    assert rows[0]["strategy"] == "CEMPC"
    assert rows[0]["n_steps"] == 6


def test_simulate_multiple_strategies_in_one_tradeoff(workdir):
    path = write_config(workdir)
    assert main(["simulate", "--config", str(path), "--strategy", "RBC",
                 "--strategy", "CEMPC", "--strategy", "PB"]) == EXIT_OK
    period = "20180201T000000Z_6h"
    rows = json.loads((workdir / "out" / f"tradeoff_{period}.json").read_text())
    assert [r["strategy"] for r in rows] == ["RBC", "CEMPC", "PB"]
    assert all("energy_vs_pb_pct" in r for r in rows)
    assert rows[-1]["energy_vs_pb_pct"] == pytest.approx(0.0)


def test_simulate_ddrmpc_requires_learned_models(workdir, capsys):
    path = write_config(workdir)
    assert main(["simulate", "--config", str(path),
                 "--strategy", "DDRMPC"]) == EXIT_DATA
    assert "learn" in capsys.readouterr().err


def test_simulate_ddrmpc_after_learn(workdir, capsys):
    path = write_config(workdir, sim_hours=3)
    assert main(["learn", "--config", str(path)]) == EXIT_OK
    assert main(["simulate", "--config", str(path),
                 "--strategy", "DDRMPC"]) == EXIT_OK
    period = "20180201T000000Z_3h"
    rep = json.loads((workdir / "out" / f"report_DDRMPC_{period}.json").read_text())
    assert rep["strategy"] == "DDRMPC"
    assert len(rep["records"]) == 3
    assert rep["metrics"]["n_flagged"] == 0


def test_simulate_strategy_from_config_when_flag_absent(workdir):
    path = write_config(workdir, controller={"horizon": 4, "strategy": "RBC"})
    assert main(["simulate", "--config", str(path)]) == EXIT_OK
    assert any(n.startswith("report_RBC_") for n in _outputs(workdir))


def test_simulate_omega_sweep_emits_one_report_per_budget(workdir):
    path = write_config(workdir, sim_hours=3, controller={"horizon": 3})
    assert main(["simulate", "--config", str(path), "--strategy", "RMPC",
                 "--omega-sweep"]) == EXIT_OK
    names = _outputs(workdir)
    for k in range(7):
        assert f"report_RMPC_om{k}_20180201T000000Z_3h.json" in names
    rows = json.loads(
        (workdir / "out" / "tradeoff_20180201T000000Z_3h.json").read_text())
    assert [r["strategy"] for r in rows] == [f"RMPC_om{k}" for k in range(7)]
    energies = [r["energy_mwh"] for r in rows]
    assert energies == sorted(energies)  # larger budget never heats less


def test_simulate_omega_sweep_flag_implies_rmpc(workdir):
    path = write_config(workdir, sim_hours=3,
                        controller={"horizon": 3, "strategy": "CEMPC"})
    assert main(["simulate", "--config", str(path), "--omega-sweep"]) == EXIT_OK
    names = _outputs(workdir)
    assert sum(n.startswith("report_RMPC_om") for n in names) == 7
    assert any(n.startswith("report_CEMPC_") for n in names)


def test_simulate_deterministic_reports(workdir):
    path = write_config(workdir, sim_hours=4)
    main(["simulate", "--config", str(path), "--strategy", "CEMPC"])
    period = "20180201T000000Z_4h"
    rep_path = workdir / "out" / f"report_CEMPC_{period}.json"
    from greenmpc.harness import SimulationReport

    first = SimulationReport.load(rep_path).digest()
    main(["simulate", "--config", str(path), "--strategy", "CEMPC"])
    assert SimulationReport.load(rep_path).digest() == first


# --- plotdata ---------------------------------------------------------------------


def test_plotdata_long_format(workdir, capsys):
    path = write_config(workdir, sim_hours=3)
    main(["simulate", "--config", str(path), "--strategy", "CEMPC",
          "--strategy", "RBC"])
    capsys.readouterr()
    period = "20180201T000000Z_3h"
    reports = [str(workdir / "out" / f"report_{s}_{period}.json")
               for s in ("CEMPC", "RBC")]
    assert main(["plotdata", "--report", reports[0],
                 "--report", reports[1]]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "timestamp,series,value"
    series = {ln.split(",")[1] for ln in lines[1:]}
    assert series == {"CEMPC.air_temp_c", "CEMPC.u_w",
                      "RBC.air_temp_c", "RBC.u_w", "bound_c"}
    # 3 steps x (2 strategies x 2 series + 1 shared bound)
    assert len(lines) - 1 == 3 * 5
    stamps = [ln.split(",")[0] for ln in lines[1:]]
    assert stamps == sorted(stamps)


def test_plotdata_to_file(workdir, capsys):
    path = write_config(workdir, sim_hours=3)
    main(["simulate", "--config", str(path), "--strategy", "RBC"])
    capsys.readouterr()
    period = "20180201T000000Z_3h"
    out_csv = workdir / "plot.csv"
    assert main(["plotdata",
                 "--report", str(workdir / "out" / f"report_RBC_{period}.json"),
                 "--out", str(out_csv)]) == EXIT_OK
    text = out_csv.read_text()
    assert text.startswith("timestamp,series,value\n")
    assert "RBC.u_w" in text


def test_plotdata_missing_report(workdir, capsys):
    assert main(["plotdata", "--report",
                 str(workdir / "missing.json")]) == EXIT_DATA
