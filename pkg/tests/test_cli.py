import json

import pytest

from vpmin.cli import main, read_config
from vpmin.errors import InvalidArgument


def run(*args):
    try:
        return main([str(a) for a in args])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    codes = {
        "minimize": run("minimize", "--mu", 1.5, "--mass", 1, "--j", 1, "--k11", 1,
                        "--grid-n", 2000, "--r-max", 20, "--out-dir", out),
        "verify": run("verify", "all", "--seed", 7, "--out-dir", out),
    }
    return out, codes


def test_minimize_writes_artifacts(pipeline):
    out, codes = pipeline
    assert codes["minimize"] == 0
    data = json.loads((out / "result.json").read_text())
    assert data["energy"]["total"] < 0
    assert data["schema_version"] == 1
    lines = (out / "profile.csv").read_text().splitlines()
    assert lines[0] == "# schema_version: 1"
    assert lines[1] == "r,rho,U,m_enc"


def test_verify_all_green(pipeline):
    out, codes = pipeline
    assert codes["verify"] == 0
    for suite in ("scaling", "concentration", "riesz", "reduction", "lane-emden", "sequences"):
        data = json.loads((out / f"verify_{suite}.json").read_text())
        assert data["passed"], suite
        assert data["schema_version"] == 1


def test_report_is_deterministic(pipeline):
    out, _ = pipeline
    assert run("report", "--out-dir", out) == 0
    first = json.loads((out / "report.json").read_text())
    assert first["all_passed"] is True
    assert len(first["suites"]) == 6
    assert run("report", "--out-dir", out) == 0
    second = json.loads((out / "report.json").read_text())
    first.pop("timestamp")
    second.pop("timestamp")
    assert first == second


def test_no_temp_files_left(pipeline):
    out, _ = pipeline
    assert not [p for p in out.iterdir() if p.name.startswith(".")]


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("verify", "scaling", "--mu", 2, "--seed", 7, "--out-dir", a) == 0
    assert run("verify", "scaling", "--mu", 2, "--seed", 7, "--out-dir", b) == 0
    assert (a / "verify_scaling.json").read_bytes() == (b / "verify_scaling.json").read_bytes()


def test_verify_lane_emden(tmp_path):
    assert run("verify", "lane-emden", "--mu", 1.5, "--out-dir", tmp_path) == 0
    data = json.loads((tmp_path / "verify_lane-emden.json").read_text())
    assert data["properties"]["xi1_scf_vs_oracle"]["passed"]


@pytest.mark.parametrize("args", [
    ("minimize", "--mu", 4.0),
    ("minimize", "--mass", -1),
    ("minimize", "--mass", "heavy"),
    ("minimize", "--k11", "big"),
    ("minimize", "--spacing", "cubic"),
    ("verify", "riesz2"),
    ("verify", "scaling", "--mu", 0),
])
def test_invalid_parameters_exit_3(tmp_path, args):
    assert run(*args, "--out-dir", tmp_path) == 3


def test_nonconvergence_exit_2(tmp_path):
    assert run("minimize", "--max-iter", 3, "--out-dir", tmp_path) == 2
    assert not (tmp_path / "result.json").exists()


def test_report_without_artifacts(tmp_path):
    assert run("report", "--out-dir", tmp_path) == 3


def test_config_file_and_overrides(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# model\nmu = 2.5   # comment\nk11 = oracle\ngrid_n = 1500\nmass = 2\n")
    monkeypatch.setenv("VPMIN_OUT", str(tmp_path / "env"))
    assert run("minimize", "--config", cfg, "--grid-n", 1000) == 0
    data = json.loads((tmp_path / "env" / "result.json").read_text())
    assert data["mu"] == 2.5 and data["mass"] == 2.0
    assert data["grid_n"] == 1000
    assert data["k11_source"] == "oracle"
    assert 0.05 < data["k11"] < 0.2


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    with pytest.raises(InvalidArgument):
        read_config(cfg)
    assert run("minimize", "--config", cfg, "--out-dir", tmp_path) == 3
    assert run("minimize", "--config", tmp_path / "missing.cfg", "--out-dir", tmp_path) == 3


def test_rearrange_demo(tmp_path):
    assert run("rearrange", "--seed", 3, "--size", 8, "--out-dir", tmp_path) == 0
    for name in ("density.csv", "density.json", "rearranged.csv", "rearranged.json",
                 "rearrange.json"):
        assert (tmp_path / name).exists()
    data = json.loads((tmp_path / "rearrange.json").read_text())
    for row in data["interactions"].values():
        assert row["rearranged"] >= row["original"] - 1e-12
    assert run("rearrange", "--size", 40, "--out-dir", tmp_path) == 3


def test_reduce_check(tmp_path, pipeline):
    out, _ = pipeline
    assert run("reduce-check", "--profile", out / "profile.csv", "--out-dir", tmp_path) == 0
    data = json.loads((tmp_path / "reduce_check.json").read_text())
    assert data["density_rel_err"] < 1e-6
    assert run("reduce-check", "--profile", tmp_path / "nope.csv", "--out-dir", tmp_path) == 3
