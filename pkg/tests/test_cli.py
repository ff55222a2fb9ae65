import json
import subprocess
import sys

import pytest

from coupledsys import io
from coupledsys.cli import main


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_verify_passes_and_writes_report(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--out", str(out), "--horizon", "0.5", "--h", "0.002"]) == 0
    rep = json.loads((out / "verify_report.json").read_text())
    assert rep
    man = _manifest(out)
    assert man["status"] == "ok" and "verify_report.json" in man["files"]
    assert man["config"]["horizon"] == 0.5 and "numpy" in man["versions"]


def test_verify_broken_relation_fails(tmp_path, capsys):
    code = main(["verify", "--out", str(tmp_path), "--horizon", "0.5", "--broken-relation"])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out
    assert _manifest(tmp_path)["status"] == "failed"


def test_simulate_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--horizon", "0.3", "--h", "0.005"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    for name in ("trajectory.csv", "summary.json", "phase.svg", "manifest.json"):
        assert (a / name).exists()
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    header, rows = io.read_csv(a / "trajectory.csv")
    assert header[0] == "t" and rows.shape[0] == 61
    assert (a / "phase.svg").read_text().startswith("<svg")


def test_simulate_config_file_and_isolated_mode(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mode": "isolated", "horizon": 0.2, "h": 0.01, "isolate": 2}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    header, _ = io.read_csv(tmp_path / "o" / "trajectory.csv")
    assert "x_2[0]" in header and "uZ_1[0]" in header


def test_optimize_writes_solution(tmp_path):
    out = tmp_path / "opt"
    assert main(["optimize", "--out", str(out)]) == 0
    post = json.loads((out / "postcheck.json").read_text())
    assert post["resim_pass"] and post["full_periodicity_pass"]
    sol = json.loads((out / "solution.json").read_text())
    assert sol["status"] == "converged"
    assert not (out / "FAILED").exists()
    assert {"solution.csv", "solver_log.json", "phase.svg"} <= set(_manifest(out)["files"])


@pytest.mark.parametrize("argv", [
    ["verify", "--horizon", "0"],
    ["simulate", "--h", "-1"],
    ["simulate", "--horizon", "0.0001", "--h", "0.001"],
    ["simulate", "--model", "bicycle"],
    ["bogus"],
    [],
])
def test_usage_errors_exit_2(tmp_path, argv):
    if argv and argv[0] in ("verify", "simulate"):
        argv = argv + ["--out", str(tmp_path)]
    assert main(argv) == 2


def test_unknown_and_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"horizon": 1.0, "colour": "red"}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "colour" in capsys.readouterr().err
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_bad_model_lists_choices(tmp_path, capsys):
    assert main(["verify", "--model", "bicycle", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "split_cart" in err and "double_pendulum_pivot" in err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "coupledsys.cli", "simulate", "--horizon", "0.05",
                        "--h", "0.01", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "manifest.json").exists()
