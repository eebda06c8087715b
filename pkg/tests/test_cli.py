import csv
import hashlib
import io
import json
import math
import subprocess
import sys

import pytest

from rateex.cli import run_cli
from rateex.vg_region import optimize_scalar_exponent


def _run(argv, capsys):
    code = run_cli(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_scalar_region_example(capsys):
    code, out, _ = _run(["scalar-region", "--sigma-x2", "1", "--sigmas", "1", "--rates", "1"], capsys)
    assert code == 0
    (row,) = _csv(out)
    assert float(row["exponent"]) == pytest.approx(0.379885, abs=1e-6)
    # 12 significant digits
    assert row["exponent"] == f"{float(row['exponent']):.12g}"


def test_scalar_region_real_convention(capsys):
    code, out, _ = _run(["scalar-region", "--sigma-x2", "1", "--sigmas", "1,2", "--rates", "0.3,0.4", "--convention", "real"], capsys)
    assert code == 0
    (row,) = _csv(out)
    expected = 0.5 * optimize_scalar_exponent(1.0, [1.0, 2.0], [0.6, 0.8]).exponent
    assert float(row["exponent"]) == pytest.approx(expected, rel=1e-11)


def test_scalar_region_grid(capsys):
    code, out, _ = _run(["scalar-region", "--sigma-x2", "1", "--sigmas", "1,1", "--e-grid", "0:1:0.25"], capsys)
    rows = _csv(out)
    assert code == 0 and len(rows) == 5
    assert list(rows[0]) == ["R1", "R2", "exponent", "gamma1", "gamma2"]


def test_unknown_flag_exit_2_and_no_file(tmp_path, capsys):
    out = tmp_path / "o.csv"
    code, _, err = _run(["scalar-region", "--sigma-x2", "1", "--sigmas", "1", "--bogus", "--output", str(out)], capsys)
    assert code == 2
    assert json.loads(err)["exit_code"] == 2
    assert not out.exists()


def test_non_pd_model_exit_3(tmp_path, capsys):
    model = {"convention": "complex", "sigma_x": [[1, 2], [2, 1]], "sensors": [{"h": [[1, 0]], "sigma_k": [[1]]}]}
    inp = tmp_path / "m.json"
    inp.write_text(json.dumps(model))
    out = tmp_path / "o.json"
    code, _, err = _run(["vg-region", "--input", str(inp), "--rates", "1", "--output", str(out)], capsys)
    assert code == 3
    e = json.loads(err)
    assert e["error"] == "NotPositiveDefinite" and "sigma_x" in e["message"]
    assert not out.exists()


def test_numerical_failure_exit_4(capsys, monkeypatch):
    from rateex import ep_bounds
    from rateex.errors import QuadratureNotConverged

    def boom(*a, **k):
        raise QuadratureNotConverged("forced")

    monkeypatch.setattr(ep_bounds, "entropy_power_and_kappa", boom)
    code, _, err = _run(["ep-bounds", "--density", "wald:1,10"], capsys)
    assert code == 4 and json.loads(err)["error"] == "QuadratureNotConverged"


def test_vg_region_json(tmp_path, capsys):
    model = {"convention": "complex", "sigma_x": [[1.0]], "sensors": [{"h": [[1.0]], "sigma_k": [[1.0]]}]}
    inp = tmp_path / "m.json"
    inp.write_text(json.dumps(model))
    code, out, _ = _run(["vg-region", "--input", str(inp), "--rates", "1"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["schema_version"] == "1"
    assert rep["exponent"] == pytest.approx(0.3798854930417225, abs=1e-9)
    # the emitted omegas re-validate as input
    model["omegas"] = rep["omegas"]
    inp.write_text(json.dumps(model))
    code, out2, _ = _run(["vg-region", "--input", str(inp), "--rates", "1"], capsys)
    assert json.loads(out2)["exponent"] == pytest.approx(rep["exponent"], abs=1e-12)


def test_real_model_rejected_by_vg_region(tmp_path, capsys):
    inp = tmp_path / "m.json"
    inp.write_text(json.dumps({"convention": "real", "sigma_x": [[1.0]], "sensors": [{"h": [[1.0]], "sigma_k": [[1.0]]}]}))
    code, _, err = _run(["vg-region", "--input", str(inp), "--rates", "1"], capsys)
    assert code == 3 and json.loads(err)["error"] == "ConventionMismatch"


def test_dm_region_instance_file(tmp_path, capsys):
    P = [[[0.45, 0.05]], [[0.05, 0.45]]]
    inp = tmp_path / "i.json"
    inp.write_text(json.dumps({"P": P}))
    code, out, _ = _run(["dm-region", "--input", str(inp), "--rates", "0.2", "--u-sizes", "2", "--divisions", "100"], capsys)
    assert code == 0
    assert json.loads(out)["exponent"] == pytest.approx(0.12443468, abs=1e-7)


def test_np_oracle_modes(tmp_path, capsys):
    inp = tmp_path / "pq.json"
    inp.write_text(json.dumps({"p": [0.5, 0.3, 0.2], "q": [0.2, 0.3, 0.5]}))
    code, out, _ = _run(["np-oracle", "--input", str(inp), "--eps", "0.2"], capsys)
    assert code == 0 and json.loads(out)["beta"] == pytest.approx(0.5)
    code, out, _ = _run(["np-oracle", "--bsc", "0.1", "--eps", "0.2", "--n", "3"], capsys)
    rows = _csv(out)
    assert [r["n"] for r in rows] == ["1", "2", "3"]
    assert float(rows[0]["exponent_exact"]) == pytest.approx(-math.log(0.4 / 0.9), rel=1e-11)


def test_gap_curve_columns(capsys):
    code, out, _ = _run(["gap-curve", "--density", "wald:1,10", "--k-max", "3", "--e-grid", "0:0.1:0.05"], capsys)
    rows = _csv(out)
    assert code == 0 and rows
    assert list(rows[0]) == ["K", "E", "delta", "limit_bound_with_E", "limit_bound_uniform"]
    assert all(float(r["delta"]) >= 0 for r in rows)


def test_ep_bounds_tabulated_input(tmp_path, capsys):
    inp = tmp_path / "d.json"
    inp.write_text(json.dumps({"grid": [0, 1], "values": [1, 1]}))
    code, out, _ = _run(["ep-bounds", "--input", str(inp), "--rates", "0.5"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["differential_entropy"] == pytest.approx(0.0, abs=1e-14)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.mark.parametrize(
    "argv",
    [
        ["qbt-sim", "--bsc", "0.1", "--n", "4", "--trials", "3000", "--eps", "0.1", "--seed", "7", "--detector", "typicality"],
        ["scalar-region", "--sigma-x2", "1", "--sigmas", "1,2", "--rates", "0.5,0.5", "--seed", "3"],
        ["gap-curve", "--density", "wald:1,10", "--k-max", "4", "--e-grid", "0:0.1:0.05"],
    ],
)
def test_byte_identical_outputs(tmp_path, argv):
    paths = []
    for i in range(2):
        out = tmp_path / f"o{i}"
        r = subprocess.run([sys.executable, "-m", "rateex", *argv, "--output", str(out)], capture_output=True)
        assert r.returncode == 0, r.stderr
        paths.append(out)
    assert _digest(paths[0]) == _digest(paths[1])
