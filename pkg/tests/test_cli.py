from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

from brwlab.cli import main

HEADER = "experiment,n,beta,statistic,mean,stderr,ci_lo,ci_hi,count,seed,config_hash"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_constants(capsys):
    code, out, _ = run(capsys, "constants", "--d", "2", "--quiet")
    assert code == 0
    vals = dict(line.split("=") for line in out.split())
    assert abs(float(vals["beta_c"]) - 1.1774100226) < 1e-9
    assert vals["beta_2"] == "0.8325546112"


def test_second_moment_one_generation(capsys):
    code, out, _ = run(capsys, "second-moment", "--d", "2", "--n", "1", "--beta", "1", "--quiet")
    assert code == 0 and out.strip() == "1.8591409142"


def test_simulate_depth_zero(capsys):
    code, out, _ = run(capsys, "simulate", "--n", "0", "--beta", "0.5", "--replicas", "1", "--stdout", "--quiet")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == HEADER
    row = next(r.split(",") for r in lines[1:] if r.split(",")[3] == "log_W")
    assert float(row[4]) == 0.0 and row[8] == "1"


def test_unknown_subcommand_prints_usage(capsys):
    code, _, err = run(capsys, "nonsense")
    assert code == 1 and "usage" in err
    code, _, err = run(capsys)
    assert code == 1 and "usage" in err


def test_config_errors_exit_one(capsys, tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text('{"replicas": 0}')
    assert run(capsys, "simulate", "--config", str(bad))[0] == 1
    bad.write_text("{broken")
    assert run(capsys, "simulate", "--config", str(bad))[0] == 1
    assert run(capsys, "simulate", "--config", str(tmp_path / "missing.json"))[0] == 1
    assert run(capsys, "universality", "--n", "4", "--beta", "0.5", "--profile", "constant", "--quiet")[0] == 1


def test_unwritable_output_exits_two(capsys, tmp_path):
    code, _, err = run(capsys, "constants", "--out", str(tmp_path / "no" / "such" / "dir.csv"))
    assert code == 2 and "cannot write" in err


def test_failed_check_exits_three(capsys, monkeypatch):
    import brwlab.experiments as ex

    def failing(cfg, progress):
        rec = ex.KahaneRecord(4, 1.0, 0.5, 0.5, 0.9, -0.4, 0.01, False)
        return [rec], ex.ScanResult("kahane", cfg.config_hash, cfg.seed)

    monkeypatch.setattr(ex, "kahane_check", failing)
    code, out, _ = run(capsys, "kahane", "--n", "4", "--beta", "1", "--quiet")
    assert code == 3 and "FAIL" in out


def test_kahane_pass_exits_zero(capsys):
    code, out, _ = run(capsys, "kahane", "--n", "6", "--beta", "1", "--replicas", "500", "--profile", "linear",
                       "--quiet")
    assert code == 0 and "PASS" in out


def test_outputs_are_reproducible(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": [4, 6], "beta": [0.7], "replicas": 200, "profile": "linear", "seed": 9}))
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert run(capsys, "universality", "--config", str(cfg), "--out", str(p), "--quiet")[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_text().splitlines()[0] == HEADER
    m = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert m["rows"] == {"universality": len(paths[0].read_text().splitlines()) - 1}
    assert {"config", "config_hash", "tool_version", "timestamp", "duration_s"} <= set(m)


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": [3], "beta": [0.5], "replicas": 5}))
    out = tmp_path / "o.csv"
    assert run(capsys, "simulate", "--config", str(cfg), "--replicas", "7", "--out", str(out), "--quiet")[0] == 0
    assert all(r.split(",")[8] == "7" for r in out.read_text().splitlines()[1:])
    dump = (tmp_path / "o.csv.replicas.jsonl").read_text().splitlines()
    assert len(dump) == 7 and {"seed", "replica", "config_hash"} <= set(json.loads(dump[0]))


def test_progress_goes_to_stderr(capsys):
    code, out, err = run(capsys, "simulate", "--n", "3", "--beta", "0.5", "--replicas", "2", "--stdout")
    assert code == 0 and "[brwlab]" in err and "[brwlab]" not in out


def test_cascade_masses(capsys, tmp_path):
    p = tmp_path / "m.csv"
    code, _, _ = run(capsys, "cascade", "--n", "4", "--beta", "0.8", "--replicas", "10", "--masses", str(p),
                     "--quiet")
    assert code == 0 and p.read_text().splitlines()[0] == "level,index,log_mass"
    assert len(p.read_text().splitlines()) == 1 + sum(2**k for k in range(5))


def test_console_script_and_worker_env():
    env = {**os.environ, "BRWLAB_WORKERS": "1"}
    r = subprocess.run([sys.executable, "-m", "brwlab.cli", "constants", "--quiet"], capture_output=True,
                       text=True, env=env)
    assert r.returncode == 0 and "beta_2=0.8325546112" in r.stdout


@pytest.mark.parametrize("sub", ["phase-scan", "fractional", "good-env", "critical-fit", "crem"])
def test_subcommands_run(capsys, sub):
    args = {"phase-scan": ["--n", "2,4", "--beta", "0.5"],
            "fractional": ["--n", "4", "--beta", "2.0", "--a", "0.673"],
            "good-env": ["--n", "6", "--beta", "0.9", "--alpha", "1.2", "--n0", "2,4,7"],
            "critical-fit": ["--n", "2,3,4"],
            "crem": ["--n", "4", "--beta", "0.5"]}[sub]
    code, out, _ = run(capsys, sub, *args, "--replicas", "50", "--quiet")
    assert code == 0 and out
