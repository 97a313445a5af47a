import csv
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from vkplate.cli import main


def read_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# ")
    header = json.loads(lines[0][2:])
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    return header, rows


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_quadform_example_row(capsys):
    code, out, _ = run(["quadform", "--mu", "1", "--lambda", "0", "--k", "2", "--matrix", "1,0,0,1"], capsys)
    assert code == 0
    header, rows = read_csv(out)
    row = {k: float(v) for k, v in rows[0].items()}
    assert (row["Q2"], row["Q2k_2"], row["Q2In"], row["gap_2"]) == pytest.approx((4, 8, 12, 4), abs=1e-12)
    assert header["seed"] == 0


def test_quadform_random_and_zero(capsys, tmp_path):
    out_path = tmp_path / "q.csv"
    code, _, err = run(["quadform", "--random", "1000", "--seed", "7", "--k", "1,10",
                        "--matrix", "0,0,0,0", "--out", str(out_path)], capsys)
    assert code == 0 and "rows=1001" in err
    header, rows = read_csv(out_path.read_text())
    assert header["seed"] == 7 and len(rows) == 1001
    assert max(float(r["oracle_rel_err"]) for r in rows) <= 1e-9
    assert all(float(v) == 0.0 for v in rows[0].values())


@pytest.mark.parametrize("argv", [
    ["quadform"],
    ["quadform", "--matrix", "1,2,3"],
    ["quadform", "--k", "-1", "--matrix", "1,0,0,1"],
    ["quadform", "--bogus"],
    ["minimize", "--mode", "elastic"],
    ["minimize", "--prestrain", "nosuch(1)"],
    ["residual", "--n", "17"],
    ["nosuch"],
])
def test_bad_flags_exit_one(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        sys.exit(main(argv))
    assert exc.value.code == 1
    assert "error" in capsys.readouterr().err


def test_minimize_zero_prestrain(capsys, tmp_path):
    code, _, _ = run(["minimize", "--n", "9", "--max-iter", "4000", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["runs"][0]["energy"]["total"] <= 1e-10
    assert rep["config"]["seed"] == 0
    _, rows = read_csv((tmp_path / "fields.csv").read_text())
    assert len(rows) == 81 and set(rows[0]) >= {"w1", "w2", "v", "S11", "B12"}


def test_minimize_nonconvergence_dumps_partial(capsys, tmp_path):
    code, _, _ = run(["minimize", "--prestrain", "swell(0.1)", "--max-iter", "3", "--out-dir", str(tmp_path)],
                     capsys)
    assert code == 2
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["runs"][0]["converged"] is False and rep["runs"][0]["iterations"] == 3
    assert (tmp_path / "fields.csv").exists()


def test_minimize_swell(capsys, tmp_path):
    code, _, _ = run(["minimize", "--prestrain", "swell(0.1)", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["runs"][0]["energy"]["total"] <= 1e-8


def test_minimize_lambda_sweep_monotone(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("VKPLATE_THREADS", "2")
    argv = ["minimize", "--prestrain", "cylinder-bend(1)", "--n", "9", "--mode", "compressible",
            "--lambda", "1,10,100,1e6", "--max-iter", "3000", "--out-dir", str(tmp_path)]
    assert run(argv, capsys)[0] == 0
    runs = json.loads((tmp_path / "report.json").read_text())["runs"]
    e = [r["energy"]["total"] for r in runs]
    assert all(a <= b * (1 + 1e-6) for a, b in zip(e, e[1:]))
    inc = tmp_path / "inc"
    assert run(["minimize", "--prestrain", "cylinder-bend(1)", "--n", "9", "--max-iter", "3000",
                "--out-dir", str(inc)], capsys)[0] == 0
    e_inc = json.loads((inc / "report.json").read_text())["runs"][0]["energy"]["total"]
    assert abs(e[-1] - e_inc) <= 1e-3 * e_inc
    assert (tmp_path / "fields_lambda_1e+06.csv").exists()


def test_threads_env_validation(capsys, monkeypatch):
    monkeypatch.setenv("VKPLATE_THREADS", "zero")
    assert run(["minimize", "--n", "5", "--lambda", "1,2"], capsys)[0] == 1


def test_artifacts_reproducible(capsys, tmp_path):
    argv = ["minimize", "--prestrain", "swell(0.1)", "--n", "9", "--init", "random", "--seed", "3"]
    run(argv + ["--out-dir", str(tmp_path / "a")], capsys)
    run(argv + ["--out-dir", str(tmp_path / "b")], capsys)
    for name in ("report.json", "fields.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header, _ = read_csv((tmp_path / "a" / "fields.csv").read_text())
    assert header["seed"] == 3 and header["init"] == "random"


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"prestrain": {"preset": "swell", "params": {"alpha": 0.05}},
                               "grid": {"n": 9}, "solver": {"max_iter": 3}, "seed": 5}))
    code, _, _ = run(["minimize", "--config", str(cfg), "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 2  # three iterations are not enough
    code, _, _ = run(["minimize", "--config", str(cfg), "--max-iter", "2000",
                      "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 0  # explicit flag wins over the config
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["config"]["seed"] == 5 and rep["config"]["n"] == 9
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grid": {"cells": 9}}))
    assert run(["minimize", "--config", str(bad)], capsys)[0] == 1
    assert run(["minimize", "--config", str(tmp_path / "missing.json")], capsys)[0] == 1


def test_elsolve_zero_and_manufactured(capsys, tmp_path):
    code, out, _ = run(["elsolve", "--n", "17"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["max_abs_v"] == 0.0 and rep["max_abs_phi"] == 0.0 and rep["iterations"] == 1
    code, out, _ = run(["elsolve", "--n", "17", "--manufactured", "--prestrain", "cylinder-bend(1)"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["error"]["v"] < 1e-2
    assert set(rep["natural_bc"]) == {"moment", "shear", "phi"}


def test_residual_order(capsys, tmp_path):
    code, _, _ = run(["residual", "--manufactured", "--out-dir", str(tmp_path), "--emit-plot-data"], capsys)
    assert code == 0
    orders = json.loads((tmp_path / "orders.json").read_text())["orders"]
    assert 1.3 <= orders["membrane"] <= 2.5 and 1.3 <= orders["bending"] <= 2.5
    _, rows = read_csv((tmp_path / "residual_long.csv").read_text())
    assert {r["variable"] for r in rows} == {"membrane", "bending"}


def test_recovery_zero_table(capsys):
    code, out, _ = run(["recovery", "--recipe", "zero", "--h", "1/8,1/16", "--n", "9", "--n3", "9"], capsys)
    assert code == 0
    table, _, report = out.partition("\n{")
    _, rows = read_csv(table)
    assert len(rows) == 2 and json.loads("{" + report)["limit"] == 0.0
    for row in rows:
        for col in ("dev_phi", "dev_dphi3", "dev_grad", "energy", "gap"):
            assert float(row[col]) == 0.0


def test_recovery_uniform_bend_slopes(capsys, tmp_path):
    code, _, _ = run(["recovery", "--h", "1/8,1/16,1/32", "--n", "9", "--n3", "17",
                      "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    slopes = json.loads((tmp_path / "slopes.json").read_text())["slopes"]
    assert slopes["dev_phi"] >= 2.7 and slopes["dev_dphi3"] >= 2.7 and slopes["gap"] >= 0.8
    assert slopes["dev_grad"] is None  # identically zero for an x'-independent recipe


def test_recovery_thick_plate_exit_three(capsys):
    code, _, err = run(["recovery", "--h", "0.5", "--n", "9", "--n3", "9"], capsys)
    assert code == 3 and "h" in err


def test_console_script_entry():
    out = subprocess.run([sys.executable, "-m", "vkplate.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
