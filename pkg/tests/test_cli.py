import csv
import json
import math

import pytest

from aeqreg import __version__
from aeqreg.cli import execute, main
from aeqreg.config import (SCHEMA, ConfigError, RunSpec, dump_config, parse_config,
                           parse_quantity, spec_from_document)
from aeqreg.report import render_report


def _write(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_minimal_detect_config(tmp_path):
    spec = parse_config(_write(tmp_path, {"command": "detect", "detect": {
        "species": "Yb171", "B_T": 2, "Omega_MHz": 30, "N_target": 100}}))
    assert spec.command == "detect"
    assert spec.formats == ("json", "csv")
    assert spec.output_dir == "out"
    assert spec.seed == 0


def test_unknown_key_is_located(tmp_path):
    path = _write(tmp_path, {"command": "detect", "detect": {"species": "Yb171",
                                                             "Omeag_MHz": 30}})
    with pytest.raises(ConfigError, match="unknown key 'Omeag_MHz' at detect"):
        parse_config(path)


def test_quadrupole_with_spin_half_rejected():
    doc = {"command": "species", "species_overrides": [
        {"name": "Yb171x", "I": 0.5, "Gamma_MHz": 28, "A_MHz": -213, "Q_MHz": 5}]}
    with pytest.raises(ConfigError, match="species_overrides.0"):
        spec_from_document(doc)


def test_missing_file():
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config("/nonexistent/run.json")


@pytest.mark.parametrize("value,key,expected", [
    ("15 GHz", "Delta_MHz", 15000.0),
    ("200 mT", "B_T", 0.2),
    ("3 ms", "tau_us", 3000.0),
    (30, "Omega_MHz", 30),
])
def test_quantities(value, key, expected):
    assert parse_quantity(value, key) == pytest.approx(expected)


@pytest.mark.parametrize("value,key", [("2 T", "Omega_MHz"), ("5 parsec", "B_T"), ("fast", "tau_us")])
def test_bad_quantities(value, key):
    with pytest.raises(ConfigError):
        parse_quantity(value, key)


def test_units_applied_once(tmp_path):
    spec = parse_config(_write(tmp_path, {"command": "detect", "detect": {
        "species": "Yb171", "Omega_MHz": "0.2 GHz", "Delta_MHz": "15 GHz"}}))
    assert spec.config["Delta_MHz"] == pytest.approx(15000)


def test_units_in_search_blocks():
    sweep = spec_from_document({"command": "sweep", "sweep": {
        "task": "detection", "fixed": {"species": "Sr87", "Delta_MHz": "3 GHz"},
        "axes": [{"path": "B_T", "values": ["500 mT", 2]}]}})
    assert sweep.config["fixed"]["Delta_MHz"] == pytest.approx(3000)
    assert sweep.config["axes"][0]["values"] == [pytest.approx(0.5), 2]
    opt = spec_from_document({"command": "optimize", "optimize": {
        "task": "detection", "bounds": {"Omega_MHz": ["0.1 GHz", 300]}}})
    assert opt.config["bounds"]["Omega_MHz"] == [pytest.approx(100), 300]
    with pytest.raises(ConfigError, match="optimize.bounds"):
        spec_from_document({"command": "optimize", "optimize": {
            "task": "detection", "bounds": {"B_T": ["1 GHz", 2]}}})


def test_yaml_config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("command: gate\ngate:\n  I: 0.5\n  ratio: 40\n")
    assert parse_config(path).config == {"I": 0.5, "ratio": 40}


def test_run_spec_round_trip(tmp_path):
    doc = {"command": "detect", "seed": 9, "output": {"dir": "x", "formats": ["csv"]},
           "detect": {"species": "Mine", "Omega_MHz": "0.1 GHz"},
           "species_overrides": [{"name": "Mine", "I": 1.5, "Gamma_MHz": 20, "A_MHz": 5,
                                  "Q_MHz": 1}]}
    spec = spec_from_document(doc)
    again = parse_config(dump_config(spec, tmp_path / "again.json"))
    assert again == spec
    assert again.overrides == spec.overrides
    assert again.config_hash() == spec.config_hash()


def test_run_spec_invariants():
    with pytest.raises(ConfigError):
        RunSpec("detect", {}, formats=())
    with pytest.raises(ConfigError):
        RunSpec("launch", {})


def test_published_schema_matches(pytestconfig):
    path = pytestconfig.rootpath / "docs" / "config.schema.json"
    assert json.loads(path.read_text()) == json.loads(json.dumps(SCHEMA))


# ---------------------------------------------------------------- rendering


def _gate_spec(tmp_path):
    return spec_from_document({"command": "gate", "gate": {"I": 0.5, "ratio": 40},
                               "output": {"dir": str(tmp_path)}})


def test_render_is_byte_identical(tmp_path):
    (rep,) = execute(_gate_spec(tmp_path))
    a = render_report(rep, ("json", "csv"), tmp_path / "a", figures=False)
    b = render_report(rep, ("json", "csv"), tmp_path / "b", figures=False)
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_report_provenance(tmp_path):
    spec = _gate_spec(tmp_path)
    (rep,) = execute(spec)
    paths = render_report(rep, ("json", "csv"), tmp_path, figures=True)
    doc = json.loads((tmp_path / "gate.json").read_text())
    assert doc["meta"]["config_hash"] == spec.config_hash()
    assert doc["meta"]["version"] == __version__
    assert doc["report"]["infidelity"] <= 5e-3
    rows = list(csv.DictReader((tmp_path / "gate.csv").open()))
    assert len(rows) == 16
    assert {r["version"] for r in rows} == {__version__}
    assert (tmp_path / "gate_phases.png").exists() and len(paths) == 3


def test_nine_significant_digits(tmp_path):
    (rep,) = execute(_gate_spec(tmp_path))
    render_report(rep, ("csv",), tmp_path, figures=False)
    row = next(csv.DictReader((tmp_path / "gate.csv").open()))
    digits = row["phase"].lstrip("-").replace(".", "").split("e")[0].lstrip("0")
    assert len(digits) <= 9


def test_unwritable_destination(tmp_path):
    (rep,) = execute(_gate_spec(tmp_path))
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        render_report(rep, ("json",), blocker / "sub")


# --------------------------------------------------------------------- CLI


def test_cli_species_row(tmp_path, capsys):
    assert main(["species", "Sr87", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    header, row = out[0].split(","), out[1].split(",")
    rec = dict(zip(header, row))
    assert (rec["Gamma_MHz"], rec["A_MHz"], rec["Q_MHz"]) == ("30.2", "-3.4", "39")
    assert json.loads((tmp_path / "species_Sr87.json").read_text())["report"]["I"] == 4.5


def test_cli_detect(tmp_path):
    assert main(["detect", "--species", "Yb171", "--B", "2", "--Omega", "30", "--N", "100",
                 "--out", str(tmp_path), "--no-figures"]) == 0
    doc = json.loads((tmp_path / "detect_Yb171.json").read_text())["report"]
    assert 0.005 <= doc["p"] <= 0.02
    rows = list(csv.DictReader((tmp_path / "detect_Yb171.csv").open()))
    assert len(rows) == 1
    assert {"species", "B_T", "Omega_MHz", "Delta_MHz", "tau_us", "N", "p", "phi_m+0.5"} <= set(rows[0])


def test_cli_gate(tmp_path):
    assert main(["gate", "--I", "0.5", "--ratio", "40", "--out", str(tmp_path),
                 "--format", "json"]) == 0
    doc = json.loads((tmp_path / "gate.json").read_text())["report"]
    assert doc["infidelity"] <= 5e-3
    assert not (tmp_path / "gate.csv").exists()


def test_cli_flags_override_config(tmp_path):
    cfg = _write(tmp_path, {"command": "gate", "gate": {"I": 1.5, "ratio": 20},
                            "output": {"dir": str(tmp_path / "from_config")}})
    assert main(["gate", "--config", str(cfg), "--ratio", "40", "--out",
                 str(tmp_path / "flag"), "--no-figures"]) == 0
    doc = json.loads((tmp_path / "flag" / "gate.json").read_text())["report"]
    assert doc["params"]["U_gg"] == 40 and doc["params"]["I"] == 1.5
    assert not (tmp_path / "from_config").exists()


def test_cli_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("AEQREG_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["species", "Ca43", "--no-figures"]) == 0
    assert (tmp_path / "env" / "species_Ca43.csv").exists()


def test_cli_error_contract(tmp_path, capsys):
    code = main(["detect", "--species", "Nope", "--Omega", "30", "--out", str(tmp_path)])
    assert code != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "Nope" in err["message"]
    assert json.loads((tmp_path / "error.json").read_text()) == err


def test_cli_sweep_with_failed_row_is_nonzero(tmp_path):
    cfg = _write(tmp_path, {"command": "sweep", "sweep": {
        "task": "gate", "fixed": {"ratio": 40}, "axes": [{"path": "I", "values": [0.5, 2]}]}})
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path), "--no-figures"]) != 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert rows[0]["error"] == "" and rows[1]["error"]


def test_cli_calibrate(tmp_path):
    assert main(["calibrate", "--species", "Ca43", "--B", "1", "--Omega", "200",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "calibrate_Ca43.json").read_text())["report"]
    assert doc["tau_us"] == pytest.approx(0.9, rel=0.3)
    assert abs(doc["N"] - 100) <= 0.5


def test_cli_spectrum(tmp_path):
    assert main(["spectrum", "--species", "Sr87", "--B", "1", "--g-s", "0.1",
                 "--delta-g", "-0.02", "--out", str(tmp_path), "--no-figures"]) == 0
    doc = json.loads((tmp_path / "spectrum.json").read_text())["report"]
    assert doc["count"] == 28
    assert doc["min_pi_spacing_MHz"] == pytest.approx(0.02 * 7.6225932, rel=1e-8)


def test_cli_selective_detection(tmp_path):
    assert main(["detect", "--species", "Yb171", "--B", "2", "--Omega", "30",
                 "--Omega-c", "1000", "--out", str(tmp_path), "--no-figures"]) == 0
    row = json.loads((tmp_path / "selective_Yb171.json").read_text())["report"]
    assert row["N_control"] <= 0.05 and row["retention_control"] >= 0.98
    assert row["N_no_control"] == pytest.approx(100, rel=0.05)


def test_execute_returns_reports():
    spec = spec_from_document({"command": "species"})
    names = [r.name for r in execute(spec)]
    assert names == ["species_Ca43", "species_Sr87", "species_Yb171"]
    assert math.isclose(execute(spec_from_document(
        {"command": "species", "species": {"name": "Yb171"}}))[0].rows[0]["Gamma_MHz"], 28)


def test_cli_unit_flags(tmp_path, capsys):
    assert main(["calibrate", "--species", "Ca43", "--B", "1000 mT", "--Omega", "0.2 GHz",
                 "--out", str(tmp_path), "--no-figures"]) == 0
    with_units = json.loads((tmp_path / "calibrate_Ca43.json").read_text())["report"]
    assert main(["calibrate", "--species", "Ca43", "--B", "1", "--Omega", "200",
                 "--out", str(tmp_path), "--no-figures"]) == 0
    plain = json.loads((tmp_path / "calibrate_Ca43.json").read_text())["report"]
    assert with_units["tau_us"] == pytest.approx(plain["tau_us"], rel=1e-12)
    assert main(["calibrate", "--species", "Ca43", "--B", "1 GHz", "--Omega", "200",
                 "--out", str(tmp_path)]) == 2
    assert "expected a field" in capsys.readouterr().err
