import json
import os
import subprocess
import sys

import pytest

from stableweb.cli import EXIT_INVALID, EXIT_OK, EXIT_RESOURCE, EXIT_STATISTICAL, cli_dispatch

TINY = {"alpha": 1.5, "tail_constant": 0.25, "scale_n": 16, "half_width": 32.0, "window": 4.0,
        "horizon": 1.0, "seed": 11, "replicas": 2,
        "start": {"kind": "dyadic", "levels": 2, "space": [-1.0, 1.0], "time": [0.0, 0.5]}}


def _config(tmp_path, **over):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({**TINY, **over}))
    return str(path)


def _files(root):
    out = {}
    for base, _, names in os.walk(root):
        for n in names:
            p = os.path.join(base, n)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_simulate_is_byte_reproducible(tmp_path):
    cfg = _config(tmp_path)
    for run in ("a", "b"):
        assert cli_dispatch(["simulate", "--config", cfg, "--out", str(tmp_path / run)]) == EXIT_OK
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b
    assert {"paths.ndjson", "simulate.json", "config.json", "paths/replica-00001.ndjson"} <= set(a)


def test_path_commands(tmp_path, capsys):
    cfg = _config(tmp_path, replicas=1)
    out = str(tmp_path / "sim")
    assert cli_dispatch(["simulate", "--config", cfg, "--out", out]) == EXIT_OK
    paths = os.path.join(out, "paths.ndjson")
    assert cli_dispatch(["filter", paths, "--delta", "0.25", "--out", out]) == EXIT_OK
    assert cli_dispatch(["project", paths, "--level", "1", "--out", out]) == EXIT_OK
    one = tmp_path / "one.ndjson"
    one.write_text(open(paths).readline())
    capsys.readouterr()
    assert cli_dispatch(["metric", str(one), str(one), "--out", out]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == {"d": 0.0, "d1": 0.0, "rho": 0.0}
    assert cli_dispatch(["hausdorff", os.path.join(out, "projected.ndjson"),
                         os.path.join(out, "projected.ndjson"), "--out", out]) == EXIT_OK
    assert float(capsys.readouterr().out) == 0.0
    # metric compares single paths only
    assert cli_dispatch(["metric", paths, str(one), "--out", out]) == EXIT_INVALID


def test_estimator_commands(tmp_path):
    out = str(tmp_path / "est")
    cfg = _config(tmp_path, scale_n=64, half_width=64.0, window=8.0, replicas=3,
                  start={"kind": "full"},
                  params={"density": {"times": [0.5, 1.0, 2.0]},
                          "age-density": {"t": 2.0, "a": [0.25]},
                          "coaltime": {"scales": [256, 1024]},
                          "green": {"n": 256}})
    for cmd in ("density", "age-density", "green"):
        assert cli_dispatch([cmd, "--config", cfg, "--out", out]) == EXIT_OK
    assert cli_dispatch(["coaltime", "--config", cfg, "--out", out, "--replicas", "200"]) == EXIT_OK
    header = open(os.path.join(out, "coaltime.csv")).readline().strip()
    assert header == "estimator,parameters,estimate,half_width,stderr,replicas,status"
    assert len(open(os.path.join(out, "density.csv")).read().splitlines()) == 5


def test_failed_assertion_exits_4(tmp_path):
    cfg = _config(tmp_path, scale_n=64, half_width=64.0, window=8.0, start={"kind": "full"},
                  params={"density": {"times": [0.5, 1.0]}})
    args = ["density", "--config", cfg, "--out", str(tmp_path / "o"), "--assert"]
    assert cli_dispatch(args + ["slope=5", "tol=0.01"]) == EXIT_STATISTICAL
    assert cli_dispatch(args + ["slope=-0.667", "tol=100"]) == EXIT_OK
    assert cli_dispatch(args + ["slope"]) == EXIT_INVALID


def test_resource_error_exits_3(tmp_path):
    cfg = _config(tmp_path, max_events=5)
    assert cli_dispatch(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_RESOURCE


def test_validation_errors_exit_2(tmp_path, capsys):
    assert cli_dispatch(["nonsense"]) == EXIT_INVALID
    cfg = _config(tmp_path, alpha=2.5, replicas=0)
    assert cli_dispatch(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "alpha" in err and "replicas" in err
    assert cli_dispatch(["filter", "--out", str(tmp_path / "o")]) == EXIT_INVALID
    missing = str(tmp_path / "missing.ndjson")
    assert cli_dispatch(["filter", missing, "--delta", "0.5"]) == EXIT_INVALID


def test_output_directory_override(tmp_path, monkeypatch):
    target = tmp_path / "elsewhere"
    monkeypatch.setenv("STABLEWEB_OUT", str(target))
    cfg = _config(tmp_path, replicas=1)
    assert cli_dispatch(["simulate", "--config", cfg, "--out", str(tmp_path / "ignored")]) == EXIT_OK
    assert (target / "paths.ndjson").exists() and not (tmp_path / "ignored").exists()


def test_compactness_and_skeleton_commands(tmp_path):
    out = str(tmp_path / "c")
    cfg = _config(tmp_path, scale_n=64, half_width=24.0, window=3.0, replicas=2,
                  params={"check-compact": {"levels": [1], "train": 2},
                          "skeleton": {"thetas": [0.5, 0.25], "N": 1},
                          "metric": {"h": 0.125}})
    assert cli_dispatch(["check-compact", "--config", cfg, "--out", out]) == EXIT_OK
    report = json.load(open(os.path.join(out, "compactness.json")))
    assert len(report["replicas"]) == 2
    prof = os.path.join(out, "profile.json")
    assert cli_dispatch(["check-compact", "--config", cfg, "--out", out, "--profile", prof,
                         "--assert", "pass_rate=0"]) == EXIT_OK
    assert cli_dispatch(["skeleton", "--config", cfg, "--out", out, "--replicas", "1",
                         "--assert", "monotone=1"]) in (EXIT_OK, EXIT_STATISTICAL)
    assert os.path.exists(os.path.join(out, "skeleton.csv"))


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "stableweb.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "simulate" in res.stdout
