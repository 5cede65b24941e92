import json
import subprocess
import sys

import pytest

from gsdelab.cli import main


def run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path)])


def load(path):
    return json.loads(path.read_text())


def test_certify_pass_and_perturbed_fail(tmp_path):
    assert run(tmp_path / "a", "certify", "--scenario", "rotation-jump") == 0
    assert load(tmp_path / "a" / "certify.json")["verdict"] == "pass"
    assert run(tmp_path / "b", "certify", "--scenario", "rotation-jump", "--perturb-drift", "0.01") == 2
    cert = load(tmp_path / "b" / "certify.json")
    assert cert["conditions"]["conditions"]["drift"]["verdict"] == "fail"
    assert load(tmp_path / "b" / "report.json")["verdict"] == "fail"


def test_simulate_and_jacobian_artifacts(tmp_path):
    assert run(tmp_path, "simulate", "--scenario", "1D-affine-jump", "--paths", "3", "--steps", "100") == 0
    assert (tmp_path / "paths.csv").read_text().startswith("path,t,x1,jump")
    report = load(tmp_path / "report.json")
    assert report["config"]["paths"] == 3 and len(report["noise_checksum"]) == 16
    assert run(tmp_path, "jacobian", "--scenario", "rotation-diffusion", "--paths", "2", "--steps", "200") == 0
    assert (tmp_path / "jacobian.csv").exists()


def test_kernel_artifacts(tmp_path):
    assert run(tmp_path, "kernel", "--scenario", "pure-translation", "--grid", "128", "--steps", "128") == 0
    manifest = load(tmp_path / "density_manifest.json")
    assert manifest["times"][0] == 0.0 and manifest["times"][-1] == 1.0
    assert all((tmp_path / f).exists() for f in manifest["files"])
    assert (tmp_path / "density_1.000000.csv").exists()
    assert load(tmp_path / "report.json")["metrics"]["l1_error"] < 0.1


def test_wentzell_report(tmp_path):
    assert run(tmp_path, "wentzell", "--scenario", "rotation-jump", "--paths", "60", "--levels", "0.008,0.004,0.002,0.001") == 0
    data = load(tmp_path / "wentzell_compare.json")
    assert len(data["mean_gap"]) == 4 and data["fit"]["order"] >= 0.4


def test_converge_levels(tmp_path):
    assert run(tmp_path / "t", "converge", "--scenario", "pure-translation", "--levels", "0.125,0.0625,0.03125") == 0
    fit = load(tmp_path / "t" / "report.json")["metrics"]["fit"]
    assert fit["order"] == pytest.approx(1.0, abs=0.3)
    assert run(tmp_path / "z", "converge", "--scenario", "zero-dynamics", "--levels", "0.04,0.02,0.01") == 0
    assert load(tmp_path / "z" / "report.json")["metrics"]["fit"]["order"] == "exact"
    assert run(tmp_path / "r", "converge", "--scenario", "rotation-diffusion", "--levels", "0.004,0.002,0.001", "--paths", "100") == 0
    rows = load(tmp_path / "r" / "report.json")["metrics"]["rows"]
    assert [r["level"] for r in rows] == [0.004, 0.002, 0.001]


def test_usage_errors_exit_one(tmp_path):
    assert run(tmp_path, "converge", "--scenario", "zero-dynamics", "--levels", "0.1,0.05") == 1
    assert run(tmp_path, "kernel", "--scenario", "no-such-thing") == 1
    assert run(tmp_path, "certify") == 1
    with pytest.raises(SystemExit) as err:
        main(["bogus"])
    assert err.value.code == 1


def test_solver_error_exit_one(tmp_path):
    # explicit step far above the diffusive limit
    assert run(tmp_path, "kernel", "--scenario", "rotation-diffusion", "--steps", "10") == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nscenario = 1D-affine-jump\npaths = 2\nsteps = 50\nseed = 3\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--paths", "4", "--out", str(tmp_path / "b")]) == 0
    assert load(tmp_path / "a" / "report.json")["config"]["paths"] == 2
    assert load(tmp_path / "b" / "report.json")["config"]["paths"] == 4
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nscenario = 1D-affine-jump\ncolour = red\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "c")]) == 1


def strip_clock(path):
    data = load(path)
    data.pop("wall_clock", None)
    return data


@pytest.mark.parametrize("command,extra", [
    ("simulate", ["--scenario", "rotation-jump", "--paths", "3"]),
    ("kernel", ["--scenario", "pure-translation"]),
])
def test_byte_identical_reruns(tmp_path, command, extra):
    for d in ("one", "two"):
        assert run(tmp_path / d, command, "--seed", "17", *extra) == 0
    one, two = tmp_path / "one", tmp_path / "two"
    names = sorted(p.name for p in one.iterdir())
    assert names == sorted(p.name for p in two.iterdir())
    for name in names:
        if name == "report.json":
            assert strip_clock(one / name) == strip_clock(two / name)
        else:
            assert (one / name).read_bytes() == (two / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "gsdelab", "certify", "--scenario", "harmonic-oscillator", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "overall: pass" in proc.stdout
