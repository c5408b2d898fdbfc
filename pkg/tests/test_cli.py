import json
import shutil

import numpy as np
import pytest

from rucmarket.artifacts import read_json, read_matrix_csv
from rucmarket.case import load_sixbus, save_case
from rucmarket.cli import main
from rucmarket.lp import TIME_LIMIT_ENV

PUBLISHED_FTR = [202.3429, 23.2771, -55.772, -94.924, -94.924, 20.0]
HOUR21_LMP = [14.97, 32.64, 34.4, 43.71, 41.94, 35.26]


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    case = root / "sixbus.json"
    save_case(load_sixbus(None), case)
    out = root / "run"
    assert main(["solve", "--case", str(case), "--lambda", "1", "--budget", "2", "--out", str(out)]) == 0
    return case, out


@pytest.fixture
def ftr_file(tmp_path):
    p = tmp_path / "ftr.json"
    p.write_text(json.dumps({"injections": PUBLISHED_FTR}))
    return p


def test_solve_writes_artifacts(solved):
    _, out = solved
    for name in ("commitment.json", "dispatch.json", "extreme_points.json", "prices.json", "reserves.json",
                 "ledger.json", "ledger.csv", "trace.json", "manifest.json", "lmp.csv", "ump_up.csv",
                 "ump_down.csv"):
        assert (out / name).is_file(), name
    assert len(read_json(out / "extreme_points.json")["points"]) == 2


def test_price_csv_hour21_column(solved):
    _, out = solved
    lmp = read_matrix_csv(out / "lmp.csv")
    assert lmp.shape == (6, 24)
    np.testing.assert_allclose(lmp[:, 20], HOUR21_LMP, atol=0.05)
    up = read_matrix_csv(out / "ump_up.csv")
    assert up[0, 20] == pytest.approx(14.87, abs=0.05)


def test_csv_headers_carry_units(solved):
    _, out = solved
    header = (out / "ump_up.csv").read_text().splitlines()[0]
    assert header.startswith("bus_id,hour_1 [$/MWh]")
    assert (out / "ledger.csv").read_text().splitlines()[0].split(",")[1].endswith("_usd")


def test_csv_round_trip_is_bit_exact(solved):
    _, out = solved
    prices = read_json(out / "prices.json")
    np.testing.assert_array_equal(read_matrix_csv(out / "lmp.csv"), np.asarray(prices["energy"]))
    np.testing.assert_array_equal(read_matrix_csv(out / "ump_down.csv"), np.asarray(prices["ump_down"]))


def test_rerun_is_byte_identical_apart_from_headers(solved, tmp_path):
    case, _ = solved
    out, first = tmp_path / "run", tmp_path / "first"
    argv = ["solve", "--case", str(case), "--lambda", "1", "--budget", "2", "--out", str(out)]
    assert main(argv) == 0
    shutil.copytree(out, first)
    assert main(argv) == 0
    for p in sorted(first.iterdir()):
        a, b = p.read_text().splitlines(), (out / p.name).read_text().splitlines()
        if a and a[0].startswith('{"_header"'):
            a, b = a[1:], b[1:]
        assert a == b, p.name


def test_audit_with_published_ftr(solved, ftr_file, capsys):
    _, out = solved
    assert main(["audit", "--artifacts", str(out), "--ftr", str(ftr_file)]) == 0
    text = capsys.readouterr().out
    row = next(line for line in text.splitlines() if line.strip().startswith("21 "))
    assert row.split()[1:] == ["5554.77", "5422.87", "131.90", "131.90"]
    assert "FAIL" not in text
    assert read_json(out / "audit.json")["equilibrium"]["verified"] is True


def test_audit_flags_tampered_ledger(solved, tmp_path, capsys):
    _, out = solved
    bad = tmp_path / "bad"
    shutil.copytree(out, bad)
    led = read_json(bad / "ledger.json")
    led["psi"] = (np.asarray(led["psi"]) * 0.5).tolist()
    (bad / "ledger.json").write_text(json.dumps(led))
    assert main(["audit", "--artifacts", str(bad)]) == 1
    lines = capsys.readouterr().out.splitlines()
    flagged = [ln for ln in lines if ln.startswith("FAIL")]
    assert any("uncertainty payment covers reserve credits" in ln for ln in flagged)


def test_unbalanced_ftr_file_fails(solved, tmp_path, capsys):
    _, out = solved
    p = tmp_path / "ftr.json"
    p.write_text(json.dumps({"injections": [10, 0, 0, 0, 0, 0]}))
    assert main(["audit", "--artifacts", str(out), "--ftr", str(p)]) == 1
    assert "not balanced" in capsys.readouterr().err


def test_ftr_pairs_format(solved, tmp_path):
    _, out = solved
    p = tmp_path / "pairs.json"
    p.write_text(json.dumps({"pairs": [[0, 3, 10.0], [1, 4, 5.0]]}))
    assert main(["audit", "--artifacts", str(out), "--ftr", str(p)]) == 0


def test_missing_case_exits_2_naming_the_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["solve", "--case", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_case_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"buses": []}))
    assert main(["solve", "--case", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "invalid case" in capsys.readouterr().err


def test_audit_on_missing_artifacts_exits_2(tmp_path):
    assert main(["audit", "--artifacts", str(tmp_path)]) == 2


def test_heatmap_on_missing_artifacts_exits_2(tmp_path, capsys):
    assert main(["heatmap", "--artifacts", str(tmp_path)]) == 2
    assert "prices.json" in capsys.readouterr().err


def test_heatmap_rewrites_csvs(solved, tmp_path):
    _, out = solved
    assert main(["heatmap", "--artifacts", str(out), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "ump_up.csv").read_bytes() == (out / "ump_up.csv").read_bytes()


def test_zero_lambda_is_rejected(tmp_path, capsys):
    assert main(["solve", "--lambda", "0", "--out", str(tmp_path / "o")]) == 1
    assert "lambda" in capsys.readouterr().err


def test_zero_uncertainty_run(tmp_path):
    case = tmp_path / "det.json"
    save_case(load_sixbus(None).without_uncertainty(), case)
    out = tmp_path / "det"
    assert main(["solve", "--case", str(case), "--out", str(out)]) == 0
    assert read_json(out / "extreme_points.json")["points"] == []
    assert np.all(read_matrix_csv(out / "ump_up.csv") == 0)
    assert np.all(read_matrix_csv(out / "ump_down.csv") == 0)
    assert main(["audit", "--artifacts", str(out)]) == 0


def test_compare_mode_reports_match(tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["solve", "--scenario", "compare", "--mode", "compare", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.count("match") >= 2 and "MISMATCH" not in text
    report = read_json(out / "comparison.json")
    assert set(report["matching_readings"]) == {"box", "budget"}
    assert read_json(out / "manifest.json")["config"]["network"] is False
    assert main(["audit", "--artifacts", str(out)]) == 0


def test_traditional_mode(tmp_path):
    out = tmp_path / "trad"
    assert main(["solve", "--scenario", "compare", "--mode", "traditional", "--no-network",
                 "--out", str(out)]) == 0
    body = read_json(out / "traditional.json")
    assert body["objective"] > 0
    assert all(x >= 0 for x in body["reserve_price_up"]) and all(x <= 0 for x in body["reserve_price_down"])


def test_time_limit_environment_variable(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(TIME_LIMIT_ENV, "1e-9")
    assert main(["solve", "--out", str(tmp_path / "t")]) == 1
    assert "error" in capsys.readouterr().err
