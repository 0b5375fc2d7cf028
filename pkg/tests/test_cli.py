import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from natquant.cli import render, run


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_qmp_polar(tmp_path):
    out = tmp_path / "q.csv"
    assert run(["qmp", "--chart", "polar2", "--at", "1.0,0.0", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert float(rows[0]["v_dw"]) == 0.125
    manifest = json.loads((tmp_path / "q.csv.manifest.json").read_text())
    assert manifest["inputs"]["chart"] == "polar2"
    assert manifest["argv"][0] == "qmp"
    assert "compute_seconds" in manifest["timings"]


def test_qmp_with_nu_column(tmp_path):
    out = tmp_path / "q.json"
    assert run(["qmp", "--chart", "polar2", "--at", "1,0;2,0", "--nu", "0,2", "--format", "json", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert len(rows) == 2
    assert_allclose(rows[1]["v_nu(2)"], 1 / 32)


def test_conformal_three(tmp_path):
    out = tmp_path / "c.json"
    assert run(["conformal", "--n", "3", "--format", "json", "--out", str(out)]) == 0
    (row,) = json.loads(out.read_text())
    assert row["coefficient"] == "1/6" and row["reference"] == "1/6" and row["equal"] is True


def test_spectrum_circle(tmp_path):
    out = tmp_path / "s.csv"
    argv = ["spectrum", "--chart", "circle-deformed:0", "--variant", "SCH", "--N", "256", "--k", "5", "--mass", "0.5", "--out", str(out)]
    assert run(argv) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["index", "eigenvalue", "variant", "chart", "N"]
    assert_allclose([float(r["eigenvalue"]) for r in rows], [0, 1, 1, 4, 4], atol=1e-3)


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["spectrum", "--chart", "circle-deformed:0.2", "--variant", "DW", "--N", "64", "--k", "4"]
    assert run(base + ["--out", str(a)]) == 0
    assert run(base + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 3, "N": "64", "variant": "DW", "chart": "circle-deformed:0.1"}))
    out = tmp_path / "s.csv"
    assert run(["spectrum", "--config", str(cfg), "--k", "2", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2
    assert rows[0]["variant"] == "DW" and rows[0]["N"] == "64"


def test_curvature_grid(tmp_path):
    out = tmp_path / "r.csv"
    assert run(["curvature", "--chart", "sphere2:2", "--grid", "16", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 256
    assert_allclose([float(r["scalar_curvature"]) for r in rows], 0.5, rtol=1e-12)


def test_deform_ratios(tmp_path):
    out = tmp_path / "d.csv"
    assert run(["deform", "--out", str(out)]) == 0
    ratios = [float(r["ratio"]) for r in read_csv(out)][1:]
    assert all(3.5 < r < 4.5 for r in ratios)


def test_anomaly_report(tmp_path):
    out = tmp_path / "a.csv"
    argv = ["anomaly", "--chart", "circle-deformed:0", "--chart-b", "circle-deformed:0.2", "--variant", "DW", "--N", "64", "--k", "3", "--out", str(out)]
    assert run(argv) == 0
    assert len(read_csv(out)) == 3


def test_propagator_flat(tmp_path):
    out = tmp_path / "p.csv"
    assert run(["propagator", "--chart", "cartesian:2", "--at", "0,0", "--separations", "0.2", "--dt", "2", "--out", str(out)]) == 0
    (row,) = read_csv(out)
    assert_allclose(float(row["S"]), 0.01, rtol=1e-12)
    assert_allclose(float(row["D"]), 0.25, rtol=1e-6)


@pytest.mark.parametrize(
    "argv, fragment",
    [
        (["qmp", "--chart", "nowhere", "--at", "1"], "error: ValueError: unknown chart id"),
        (["qmp", "--chart", "polar2", "--at=-1,0"], "error: PointOutsideDomain:"),
        (["spectrum", "--chart", "circle-deformed:0", "--mass", "-1"], "error: ValueError: --mass must be positive"),
        (["spectrum", "--chart", "circle-deformed:0", "--config", "/nonexistent.json"], "error: FileNotFoundError:"),
    ],
)
def test_errors_are_one_line(tmp_path, capsys, argv, fragment):
    assert run(argv + ["--out", str(tmp_path / "x.csv")]) == 1
    err = capsys.readouterr().err
    assert err.startswith(fragment)
    assert err.count("\n") == 1


def test_csv_round_trip_precision():
    x = 0.1 + 0.2
    text = render(["x"], [[x]], "csv")
    assert float(text.splitlines()[1]) == x
