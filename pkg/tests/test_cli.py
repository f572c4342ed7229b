from __future__ import annotations

import json

import pytest

from haarlab.cli import main, read_csv


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def test_measure_formula_a_doubling_column(tmp_path):
    cfg = write(tmp_path, "m.json", {"measure": {"kind": "split", "sequence": "formula_a", "depth": 16}})
    out = tmp_path / "o"
    assert main(["measure", "--config", cfg, "--out", str(out)]) == 0
    text = (out / "diagnostics.csv").read_text()
    assert "# seed: 0" in text and "# config_sha256:" in text and "# depth: 16" in text and "# tool: haarlab" in text
    rows = read_csv(text)
    for row in rows[3:]:
        assert float(row["doubling"]) == pytest.approx(int(row["generation"]), rel=1e-9)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"


def test_measure_lebesgue_constants(tmp_path):
    cfg = write(tmp_path, "m.json", {"kind": "lebesgue", "depth": 8})
    out = tmp_path / "o"
    assert main(["measure", "--config", cfg, "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["c_inc"] <= 2 and m["c_dec"] <= 2 and m["c_doub"] <= 2


def test_malformed_json_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", "{not json")
    assert main(["measure", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "malformed" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main(["nope"]) == 2
    assert main(["reproduce", "--study", "unknown", "--out", str(tmp_path)]) == 2
    assert main(["measure", "--depth", "0", "--out", str(tmp_path)]) == 2
    cfg = write(tmp_path, "m.json", {"measure": {"kind": "mystery"}})
    assert main(["measure", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


WORKED = {"measure": {"kind": "lebesgue", "depth": 3}, "functions": [{"resolution": 3, "values": [8, 0, 0, 0, 0, 0, 0, 0]}]}


def test_czd_worked_example_passes(tmp_path):
    cfg = write(tmp_path, "c.json", {**WORKED, "lambdas": [1.5]})
    out = tmp_path / "o"
    assert main(["czd", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv((out / "czd.csv").read_text())
    assert all(r["pass"] == "1" for r in rows)


def test_czd_regime_error_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {**WORKED, "lambdas": [0.5]})
    assert main(["czd", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "lambda below global average" in capsys.readouterr().err


def test_czd_random_suite_is_byte_identical(tmp_path, monkeypatch):
    cfg = write(tmp_path, "c.json", {"measure": {"kind": "split", "sequence": "formula_c", "depth": 8}, "random": {"count": 6}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["czd", "--config", cfg, "--out", str(a), "--seed", "11"]) == 0
    monkeypatch.setenv("HAARLAB_THREADS", "4")
    assert main(["czd", "--config", cfg, "--out", str(b), "--seed", "11"]) == 0
    assert (a / "czd.csv").read_bytes() == (b / "czd.csv").read_bytes()
    assert "# seed: 11" in (a / "czd.csv").read_text()


def test_weak11_reports_ceiling(tmp_path):
    cfg = write(tmp_path, "w.json", {"measure": {"kind": "split", "sequence": "formula_a", "depth": 10}, "operators": [{"op": "hilbert"}], "battery": "haar_family", "per_generation": 3})
    out = tmp_path / "o"
    assert main(["weak11", "--config", cfg, "--out", str(out)]) == 0
    summary = read_csv((out / "weak11_summary.csv").read_text())
    assert float(summary[0]["max_ratio"]) < float(summary[0]["ceiling"])
    rows = read_csv((out / "weak11.csv").read_text())
    assert rows and {"operator", "generation", "ratio_lower_bound", "ceiling"} <= set(rows[0])


def test_weak11_depth_overflow_reported_per_operator(tmp_path, capsys):
    mu = {"kind": "lebesgue", "depth": 4}
    ops = [{"op": "hilbert"}, {"op": "multiplier", "coefficients": {"kind": "multiplier", "entries": {"6:0": 1.0}}}]
    cfg = write(tmp_path, "w.json", {"measure": mu, "operators": ops, "battery": "haar_family", "per_generation": 2})
    out = tmp_path / "o"
    assert main(["weak11", "--config", cfg, "--out", str(out)]) == 1
    summary = read_csv((out / "weak11_summary.csv").read_text())
    assert summary[0]["error"] == "" and summary[1]["error"]
    assert "operator multiplier" in capsys.readouterr().err


def test_reproduce_ex_a(tmp_path):
    out = tmp_path / "o"
    assert main(["reproduce", "--study", "ex_a", "--out", str(out), "--depth", "14"]) == 0
    text = (out / "ex_a_ems.csv").read_text()
    assert "# max_rel_err:" in text
    rows = read_csv(text)
    assert max(float(r["rel_err_chain"]) for r in rows) <= 1e-12
    manifest = json.loads((out / "manifest.json").read_text())
    assert "ex_a" in manifest["studies"]


def test_reproduce_r2_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["reproduce", "--study", "r2_nonstandard", "--out", str(a)]) == 0
    assert main(["reproduce", "--study", "r2_nonstandard", "--out", str(b)]) == 0
    assert (a / "r2_nonstandard.csv").read_bytes() == (b / "r2_nonstandard.csv").read_bytes()


def test_float_format_round_trips(tmp_path):
    out = tmp_path / "o"
    assert main(["reproduce", "--study", "r2_nonstandard", "--out", str(out)]) == 0
    rows = read_csv((out / "r2_nonstandard.csv").read_text())
    from haarlab.studies import r2_table

    expect = r2_table()
    assert float(rows[5]["weak_ratio"]) == expect[5]["weak_ratio"]
