"""End-to-end CLI tests: small runs through main(), files, exit codes."""

import json
import os

import numpy as np
import pytest

from airbreath.cli import main
from airbreath.generic import TABLE_HEADERS
from airbreath.harness import RESULTS_HEADER, TRADEOFF_HEADER, read_results_csv


def small_ini(tmp_path, **extra):
    sections = {
        "experiment": {
            "rounds": "60",
            "grid": "-5",
            "schemes": "airbreath, no_airbreathing",
        },
        "channel": {"sensors": "3", "activation": "0.7"},
        "model": {"dim": "10"},
    }
    for section, kv in extra.items():
        sections.setdefault(section, {}).update(kv)
    lines = []
    for section, kv in sections.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in kv.items())
    path = tmp_path / "exp.ini"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_no_subcommand_exits_with_usage():
    with pytest.raises(SystemExit):
        main([])


def test_validate_passes(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "all 7 checks passed" in out
    assert "FAIL" not in out


def test_tradeoff_writes_csv_and_figure_spec(tmp_path, capsys):
    assert main(["tradeoff", "--rounds", "60", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "best measured depth" in out
    csv_path = tmp_path / "tradeoff.csv"
    rows = read_results_csv(csv_path)
    assert len(rows) == 50
    assert csv_path.read_text().splitlines()[0] == ",".join(TRADEOFF_HEADER)
    spec = json.loads((tmp_path / "tradeoff.figure.json").read_text())
    assert spec["version"] == 1
    assert len(spec["panels"]) == 2
    for panel in spec["panels"]:
        assert panel["csv"] == "tradeoff.csv"
        assert {"x", "y", "series", "title"} <= set(panel)


def test_sweep_sir_with_config_file(tmp_path, capsys):
    config = small_ini(tmp_path)
    out = tmp_path / "results"
    assert main(["sweep-sir", "--config", config, "--out", str(out)]) == 0
    rows = read_results_csv(out / "sweep_sir.csv")
    assert {r["scheme"] for r in rows} == {"airbreath", "no_airbreathing"}
    assert all(r["experiment"] == "sweep_sir" for r in rows)
    spec = json.loads((out / "sweep_sir.figure.json").read_text())
    assert [s["match"]["scheme"] for s in spec["panels"][0]["series"]] == [
        "airbreath",
        "no_airbreathing",
    ]
    assert all(s["band"] == ["ci_low", "ci_high"] for s in spec["panels"][0]["series"])


def test_sweep_reruns_are_deterministic(tmp_path):
    config = small_ini(tmp_path)
    outs = []
    for name in ("one", "two"):
        out = tmp_path / name
        assert main(["sweep-sir", "--config", config, "--out", str(out)]) == 0
        outs.append((out / "sweep_sir.csv").read_bytes())
    assert outs[0] == outs[1]
    reseeded = tmp_path / "three"
    assert main(["sweep-sir", "--config", config, "--out", str(reseeded), "--seed", "99"]) == 0
    assert (reseeded / "sweep_sir.csv").read_bytes() != outs[0]


def test_sweep_sensors_and_activation_smoke(tmp_path):
    sensors_ini = small_ini(tmp_path, experiment={"axis": "sensors", "grid": "2 4"})
    out = tmp_path / "sens"
    assert main(["sweep-sensors", "--config", sensors_ini, "--out", str(out)]) == 0
    assert (out / "sweep_sensors.csv").exists()
    act_ini = small_ini(tmp_path, experiment={"axis": "activation", "grid": "0.3 0.8"})
    out2 = tmp_path / "act"
    assert main(["sweep-activation", "--config", act_ini, "--out", str(out2)]) == 0
    rows = read_results_csv(out2 / "sweep_activation.csv")
    assert sorted({r["axis_value"] for r in rows}) == ["0.3", "0.8"]


def test_out_dir_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("AIRBREATH_OUT", str(tmp_path / "envout"))
    config = small_ini(tmp_path)
    assert main(["sweep-sir", "--config", config]) == 0
    assert (tmp_path / "envout" / "sweep_sir.csv").exists()


def test_optimal_depth_prints_decision(capsys):
    assert main(["optimal-depth", "--sir-db", "-3", "--active-count", "2"]) == 0
    out = capsys.readouterr().out
    assert "optimal depth S* = " in out
    assert "exact receive DG" in out


def test_optimal_depth_rejects_bad_active_count():
    assert main(["optimal-depth", "--active-count", "0"]) == 2


def test_cnn_curves_writes_tables(tmp_path, capsys):
    # SIR -20 keeps every grid accuracy off 1.0 so the DG map stays in domain
    code = main(
        [
            "cnn-curves",
            "--sir-db",
            "-20",
            "--trials",
            "600",
            "--comp-trials",
            "12000",
            "--importance-trials",
            "800",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "combined-surrogate optimal depth S* = " in out
    assert "closed-form mixture reference" in out
    comp_lines = (tmp_path / "cnn_compression.csv").read_text().splitlines()
    assert comp_lines[0] == ",".join(TABLE_HEADERS["compression"])
    spread_lines = (tmp_path / "cnn_spreading.csv").read_text().splitlines()
    assert spread_lines[0] == ",".join(TABLE_HEADERS["spreading"])
    imp_lines = (tmp_path / "cnn_importance.csv").read_text().splitlines()
    assert imp_lines[0] == "d,importance"
    assert len(imp_lines) == 51
    values = [float(line.split(",")[1]) for line in comp_lines[1:]]
    assert np.all(np.diff(values) >= -1e-12)
    spec = json.loads((tmp_path / "cnn_curves.figure.json").read_text())
    assert [p["csv"] for p in spec["panels"]] == [
        "cnn_compression.csv",
        "cnn_spreading.csv",
        "cnn_importance.csv",
    ]


def test_conflicting_power_flags_exit_code():
    assert main(["validate", "--pact", "0.5", "--h-threshold", "0.1"]) == 2


def test_missing_model_json_exit_code(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[model]\njson = does_not_exist.json\n")
    assert main(["optimal-depth", "--config", str(ini)]) == 3


def test_figure_specs_are_sorted_and_stable(tmp_path):
    config = small_ini(tmp_path)
    outs = []
    for name in ("j1", "j2"):
        out = tmp_path / name
        assert main(["sweep-sir", "--config", config, "--out", str(out)]) == 0
        outs.append((out / "sweep_sir.figure.json").read_bytes())
    assert outs[0] == outs[1]
    keys = list(json.loads(outs[0]).keys())
    assert keys == sorted(keys)
