import io
import json

import pytest

from tptl.cli import parse_config, run


def call(*argv):
    buf = io.StringIO()
    code = run(list(argv), stdout=buf)
    return code, buf.getvalue()


def test_spectrum_csv_contract():
    code, out = call("spectrum", "--N", "2", "--R", "0.5", "--sigma-c", "2", "--kmax", "8", "--out", "csv")
    assert code == 0
    lines = out.splitlines()
    meta = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    assert "# sigma_c=2" in meta and "# k_max=8" in meta
    assert body[0] == "k,e_minus,e_plus,e_res,delta,sign_class"
    assert len(body) == 9
    assert body[2].startswith("2,") and body[2].endswith("negative_definite")


def test_output_is_deterministic():
    argv = ("spectrum", "--sigma-c", "0.5", "--out", "csv")
    assert call(*argv) == call(*argv)


def test_output_file(tmp_path):
    path = tmp_path / "s.json"
    assert run(["spectrum", "--kmax", "3", "--output", str(path)]) == 0
    assert json.loads(path.read_text())["config"]["output"] == str(path)


def test_json_schema_and_precision():
    code, out = call("spectrum", "--sigma-c", "2", "--kmax", "2")
    doc = json.loads(out)
    assert doc["schema"] == "tptl/1"
    assert doc["config"]["subcommand"] == "spectrum"
    assert '"e_minus": -0.090909090909090912' in out


def test_classify_saddle():
    code, out = call("classify", "--N", "2", "--R", "0.5", "--sigma-c", "0.5")
    doc = json.loads(out)
    assert code == 0
    assert doc["result"]["verdict"] == "Saddle"
    assert {w["sign"] for w in doc["result"]["witnesses"]} == {"positive", "negative"}


def test_verify_radial():
    code, out = call("verify-radial", "--sigma-c", "1", "--nr", "512")
    rows = json.loads(out)["result"]["rows"]
    assert code == 0
    assert abs(rows[-1]["order"] - 2) < 0.2


def test_verify_energy_small_grid():
    code, out = call("verify-energy", "--sigma-c", "2", "--k", "2", "--nr", "256", "--ntheta", "128", "--tol", "0.05")
    doc = json.loads(out)
    assert code == 0
    assert [r["path"] for r in doc["result"]["rows"]] == ["inner", "outer", "mixed"]
    assert doc["result"]["all_ok"]


def test_serrin_trace():
    code, out = call("serrin", "--sigma-c", "2", "--k", "2", "--out", "csv")
    assert code == 0
    assert "# beta=1" in out
    last = out.strip().splitlines()[-1]
    assert float(last.split(",")[1]) <= 1e-8


def test_geometry_report():
    code, out = call("geometry", "--sigma-c", "2", "--kmax", "3")
    rows = json.loads(out)["result"]
    assert code == 0
    assert all(r["path_vol_outer"] < 1e-9 for r in rows)


@pytest.mark.parametrize(
    "argv",
    [
        ["spectrum", "--bogus"],
        ["spectrum", "--R", "1.5"],
        ["spectrum", "--sigma-c", "-1"],
        ["spectrum", "--kmax", "0"],
        ["nosuch"],
        ["classify", "--beta", "1"],
        ["serrin", "--sigma-c", "1"],
        ["spectrum", "--output", "/nonexistent/dir/out.csv"],
    ],
)
def test_validation_errors_exit_one(argv):
    assert run(argv, stdout=io.StringIO()) == 1


def test_solver_failure_exits_two():
    code, _ = call("serrin", "--sigma-c", "2", "--k", "4", "--amplitude", "0.05")
    assert code == 2


def test_serrin_defaults_to_helmholtz_source():
    assert parse_config(["serrin"]).beta == 1.0
    assert parse_config(["spectrum"]).beta == 0.0
