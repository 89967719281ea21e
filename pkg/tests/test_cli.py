import json

import pytest

from exheat.cli import main, read_config


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def test_nls_exponents_output(tmp_path, capsys):
    assert run(tmp_path, "nls-exponents", "--n", "2", "--s", "1/2") == 0
    assert capsys.readouterr().out.splitlines()[0] == "p=4 q=5 r=10/3 q̃′=1 r̃′=2"
    rep = json.loads((tmp_path / "nls-exponents.report.json").read_text())
    assert rep["passed"] and rep["results"]["r"] == "10/3"
    assert "threads" not in rep["config"] and rep["version"]


def test_usage_errors_exit_one(tmp_path, capsys):
    assert main(["nosuch"]) == 1
    assert main(["kernel", "--t", "1"]) == 1
    assert run(tmp_path, "nls-exponents", "--s", "abc") == 1
    assert run(tmp_path, "kernel", "--obstacle", "torus", "--t", "1", "--x", "0,2", "--y", "0,3") == 1
    assert run(tmp_path, "kernel", "--t", "1", "--x", "0,0.5", "--y", "0,3", "--paths", "1000") == 1


def test_kernel_command(tmp_path, capsys):
    code = run(tmp_path, "kernel", "--obstacle", "disk:1", "--t", "1", "--x", "0,1.5", "--y", "0,1.5",
               "--paths", "2000", "--steps", "16", "--seed", "7")
    assert code == 0
    assert capsys.readouterr().out.startswith("mean=")


def test_tiny_band_fails_with_argmax(tmp_path, capsys):
    code = run(tmp_path, "verify-heat", "--t-grid", "1", "--rho", "1", "--pairing", "diagonal",
               "--band", "0.99,1.01", "--paths", "2000")
    out = capsys.readouterr().out
    assert code == 2
    assert "FAIL lower ratio" in out and "at {" in out


def test_exclusion_cap_is_numeric_failure(tmp_path):
    code = run(tmp_path, "verify-heat", "--t-grid", "0.01", "--rho", "1", "--pairing", "antipodal,diagonal",
               "--paths", "1000", "--steps", "8", "--max-excluded", "0")
    assert code == 3


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# nls settings\nnls.s = 1/4\nn = 2\n")
    assert run(tmp_path, "nls-exponents", "--config", str(cfg), "--name", "a") == 0
    assert json.loads((tmp_path / "a.report.json").read_text())["config"]["s"] == "1/4"
    assert run(tmp_path, "nls-exponents", "--config", str(cfg), "--s", "3/4", "--name", "b") == 0
    assert json.loads((tmp_path / "b.report.json").read_text())["config"]["s"] == "3/4"
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert run(tmp_path, "nls-exponents", "--s", "1/2", "--config", str(bad)) == 1
    assert read_config(str(cfg)) == {"s": "1/4", "n": "2"}


def test_reports_identical_across_threads(tmp_path):
    args = ["verify-heat", "--t-grid", "0.5,2", "--rho", "0.5,2", "--pairing", "diagonal,radial",
            "--paths", "3000", "--steps", "16", "--block-size", "1000", "--seed", "5"]
    for th in ("1", "3"):
        assert main([*args, "--threads", th, "--out", str(tmp_path / th), "--name", "scan"]) in (0, 2)
    for suffix in ("report.json", "csv"):
        assert (tmp_path / "1" / f"scan.{suffix}").read_bytes() == (tmp_path / "3" / f"scan.{suffix}").read_bytes()


def test_green_exact_report(tmp_path):
    code = run(tmp_path, "verify-green", "--pairs", "20", "--band", "1/64,64")
    assert code == 0
    head = (tmp_path / "verify-green.csv").read_text().splitlines()[0]
    assert head.startswith("x,y")


@pytest.mark.parametrize("argv", [["hardy", "--s", "1.5"], ["schur", "--region", "IIa", "--p", "3", "--s", "0.8"],
                                  ["counterexample", "--s", "0.5"]])
def test_out_of_window_rejected(tmp_path, argv):
    assert run(tmp_path, *argv) == 1
