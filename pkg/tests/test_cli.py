import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cubic_observer import numerics
from cubic_observer.cli import main, trace_header
from cubic_observer.config import EXAMPLES, RunConfig


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def run(argv):
    return main([str(a) for a in argv])


def test_emit_config_round_trip(capsys):
    for name in EXAMPLES:
        assert run(["--emit-config", name]) == 0
        raw = json.loads(capsys.readouterr().out)
        assert RunConfig.from_dict(raw).to_dict() == raw


def test_usage_errors_are_exit_1(capsys):
    assert run([]) == 1
    assert run(["frobnicate"]) == 1
    assert run(["--emit-config", "nope"]) == 1
    assert "error" in capsys.readouterr().err


def test_design_example(tmp_path):
    cfg = write_config(tmp_path, EXAMPLES["paper-example"]())
    assert run(["design", cfg, "--out-dir", tmp_path / "o"]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    eigs = np.array([complex(*z) for z in rep["plant_eigenvalues"]])
    assert numerics.match_spectra(eigs, [-2, -2, -4, -1]) <= 1e-8
    assert rep["design"]["eq3_residual"] <= 1e-9
    prov = json.loads((tmp_path / "o" / "provenance.json").read_text())
    assert prov["seed"] == 0 and len(prov["config_sha256"]) == 64
    assert prov["defaults"]["gamma"] == 1.0 and prov["defaults"]["step_h"] == 1e-3


def test_design_non_square(tmp_path, capsys):
    raw = EXAMPLES["theorem3-2state"]()
    raw["plant"]["A"] = [[0.0, 1.0, 2.0], [1.0, 2.0, 3.0]]
    assert run(["design", write_config(tmp_path, raw), "--out-dir", tmp_path / "o"]) == 1
    assert "square" in capsys.readouterr().err


def test_design_unobservable(tmp_path, capsys):
    raw = {"plant": {"A": [[0.0, 1.0], [-2.0, -3.0]], "C": [[0.0, 0.0]]},
           "observer": {"mode": "fullorder", "poles": [-1.0, -2.0]}}
    assert run(["design", write_config(tmp_path, raw), "--out-dir", tmp_path / "o"]) == 2
    assert "observable" in capsys.readouterr().err
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert "observable" in rep["error"]


def test_design_rank_infeasible_writes_report(tmp_path):
    raw = EXAMPLES["theorem3-2state"]()
    raw["observer"]["Z1"] = [[1.0], [1.0]]
    assert run(["design", write_config(tmp_path, raw), "--out-dir", tmp_path / "o"]) == 2
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["design"]["rank_CW"] == 1 and rep["design"]["rank_W"] == 2


def test_simulate_theta_zero_columns_identical(tmp_path):
    raw = EXAMPLES["theorem3-2state"]()
    raw["observer"]["theta"] = [[0.0]]
    raw["simulation"]["t_end"] = 1.0
    assert run(["simulate", write_config(tmp_path, raw), "--out-dir", tmp_path / "o"]) == 0
    header, data = read_csv(tmp_path / "o" / "trace.csv")
    assert header == trace_header(2)
    assert np.array_equal(data[:, 3:5], data[:, 5:7])


def test_simulate_zero_initial_error(tmp_path):
    raw = EXAMPLES["unknown-input"]()
    raw["simulation"]["xhat0"] = raw["simulation"]["x0"]
    raw["simulation"]["t_end"] = 1.0
    assert run(["simulate", write_config(tmp_path, raw), "--out-dir", tmp_path / "o"]) == 0
    header, data = read_csv(tmp_path / "o" / "trace.csv")
    e_cols = [i for i, h in enumerate(header) if h.startswith(("el_", "ec_"))]
    assert np.abs(data[:, e_cols]).max() <= 1e-10


def test_simulate_byte_identical(tmp_path):
    cfg = write_config(tmp_path, EXAMPLES["state-delay"]())
    assert run(["--seed", 3, "simulate", cfg, "--out-dir", tmp_path / "a"]) == 0
    assert run(["--seed", 3, "simulate", cfg, "--out-dir", tmp_path / "b"]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_csv_floats_round_trip(tmp_path):
    raw = EXAMPLES["theorem3-2state"]()
    raw["simulation"]["t_end"] = 0.05
    assert run(["simulate", write_config(tmp_path, raw), "--out-dir", tmp_path / "o"]) == 0
    lines = (tmp_path / "o" / "trace.csv").read_text().splitlines()
    for field in lines[5].split(","):
        assert repr(float(field)) == field


def test_simulate_divergence(tmp_path, capsys):
    raw = EXAMPLES["theorem3-2state"]()
    raw["simulation"].update({"x0": [100.0, 0.0], "step_h": 0.01, "t_end": 1.0})
    with np.errstate(all="ignore"):
        assert run(["simulate", write_config(tmp_path, raw), "--out-dir", tmp_path / "o"]) == 3
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert 0 < rep["divergence_time"] <= 1.0
    assert "diverged" in capsys.readouterr().err


def test_compare_theorem3(tmp_path):
    assert run(["compare", write_config(tmp_path, EXAMPLES["theorem3-4state"]()), "--out-dir", tmp_path / "o"]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["comparison"]["dominance_status"] == "holds"
    assert rep["analytic_initial_derivative_gap"] < 0
    assert (tmp_path / "o" / "error_state_4.csv").exists()


def test_check_conditions_theorem2_design(tmp_path):
    assert run(["check-conditions", write_config(tmp_path, EXAMPLES["theorem3-2state"]()),
                "--out-dir", tmp_path / "o"]) == 0
    conds = {c["name"]: c for c in json.loads((tmp_path / "o" / "report.json").read_text())["conditions"]}
    assert conds["observer_hurwitz"]["status"] == "pass"
    assert conds["cubic_negative_semidefinite"]["status"] == "pass"
    assert conds["cubic_negative_semidefinite"]["semidefinite"] is True
    assert conds["equilibrium_uniqueness"]["status"] == "pass"
    assert conds["equilibrium_uniqueness"]["trials"] == 200 and conds["equilibrium_uniqueness"]["n_violations"] == 0
    assert conds["rank_condition"]["status"] == "pass"
    assert conds["unknown_input_decoupling"]["status"] == "not-applicable"


def test_check_conditions_unknown_input(tmp_path):
    assert run(["check-conditions", write_config(tmp_path, EXAMPLES["unknown-input"]()),
                "--out-dir", tmp_path / "o"]) == 0
    conds = {c["name"]: c for c in json.loads((tmp_path / "o" / "report.json").read_text())["conditions"]}
    assert conds["unknown_input_decoupling"]["status"] == "pass"
    assert conds["unknown_input_decoupling"]["residual"] <= 1e-8


def test_check_conditions_negative_theta(tmp_path, capsys):
    raw = EXAMPLES["theorem3-2state"]()
    raw["observer"]["theta"] = [[-2.0]]
    assert run(["check-conditions", write_config(tmp_path, raw), "--out-dir", tmp_path / "o"]) == 1
    assert "semidefinite" in capsys.readouterr().err


def test_reproduce_example_default(tmp_path):
    out = tmp_path / "rep"
    assert run(["reproduce-example", "--out-dir", out]) == 0
    rep = json.loads((out / "report.json").read_text())
    eigs = np.array([complex(*z) for z in rep["plant_eigenvalues"]])
    assert numerics.match_spectra(eigs, [-2, -2, -4, -1]) <= 1e-8
    placed = np.array([complex(*z) for z in rep["observer_eigenvalues"]])
    assert numerics.match_spectra(placed, [-10, -15, -12, -20]) <= 1e-6
    assert rep["cbar_source"] == "computed" and rep["output_delay_mode"] == "measurement"
    assert rep["comparison"]["dominance_status"] == "not-applicable"
    audit = json.loads((out / "cbar_audit.json").read_text())
    assert audit["n_entries"] == 8 and len(audit["entry_matches"]) == 2
    gains = json.loads((out / "gain_audit.json").read_text())
    assert set(gains) == {"plant_eigenvalues", "computed_cbar", "printed_cbar"}
    for i in range(1, 5):
        header, data = read_csv(out / f"error_state_{i}.csv")
        assert header == ["t", f"el_{i}", f"ec_{i}"] and data.shape == (5001, 3)


def test_reproduce_example_paper_cbar(tmp_path):
    out = tmp_path / "rep"
    assert run(["reproduce-example", "--use-paper-cbar", "--out-dir", out]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["effective_C"] == [[1.0183, 2.0, 1.0, 7.3891], [1.0, 1.0, 54.5982, 1.0183]]
    assert rep["cbar_source"] == "printed" and rep["output_delay_mode"] == "oracle"
    assert rep["comparison"]["iae_cubic"] < rep["comparison"]["iae_linear"]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cubic_observer", "--emit-config", "unknown-input"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and json.loads(res.stdout)["plant"]["unknown_input"]
