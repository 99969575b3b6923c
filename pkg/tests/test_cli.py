import csv
import json
import subprocess
import sys

import pytest

from switchmtd import cli, scenario


def scalar_dict(a=1.0, s=2.0, attack=None, ceiling=1e6):
    return {
        "name": "scalar",
        "agents": [{"A": [[a]], "B_u": [[1.0]], "B_f": [[0.0]], "B_d": [[0.0]], "C_y": [[1.0]]}],
        "agent_layer": {"adjacency": [[0.0]], "gamma_cy": 1.0, "gamma_f": 0.25},
        "synthesis": {"M": 1, "T": 1},
        "sublayer_weights": {"explicit": [{"edges": [], "selfloops": [[1, s]]}]},
        "weights": {"Q": [[1.0]], "R": [[1.0]], "a_f": 1.0, "a_d": 1.0},
        "sim": {"h": 0.01, "horizon": 2.0, "x0": [1.0], "ceiling": ceiling},
        "experiments": [{"name": "run", "schedule": {"kind": "fixed", "sublayer": 1},
                         "attack": attack or {}, "disturbance": False, "expect": "any"}],
    }


def write(tmp_path, data, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def run(*argv):
    return cli.main(list(argv))


def test_single_agent_scalar_pipeline(tmp_path):
    sc = write(tmp_path, scalar_dict())
    out = str(tmp_path / "out")
    assert run("repro-paper", "--scenario", sc, "--out", out) == 0
    g = json.loads((tmp_path / "out" / "gains.json").read_text())
    # 2 a P + (q + a_d) - s^2 P^2 = 0 with a = 1, s = 2, q = a_d = 1 -> P = 1, K = -s P = -2
    assert g["mu_min"] == pytest.approx(2.0)
    assert g["agents"][0]["P"][0][0] == pytest.approx(1.0, abs=1e-10)
    assert g["agents"][0]["K"][0][0] == pytest.approx(-2.0, abs=1e-10)
    st = json.loads((tmp_path / "out" / "structures.json").read_text())
    assert st["structures"][0]["selfloops"] == [1]
    with open(tmp_path / "out" / "results_run.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x_1", "sigma", "attack_active"]
    # closed loop x' = (a + s K) x = -3 x; RK4 at h = 0.01 is accurate to ~1e-9
    t, x = float(rows[-1][0]), float(rows[-1][1])
    assert t == pytest.approx(2.0)
    assert x == pytest.approx(2.718281828459045 ** (-6.0), rel=1e-7)
    summary = (tmp_path / "out" / "analysis_summary.csv").read_text().splitlines()
    assert summary[1].split(",")[2] == "exponential"
    for suffix in ("norm", "states", "sigma", "lyapunov", "envelope"):
        assert (tmp_path / "out" / f"run_{suffix}.svg").exists()


def test_exit_unsatisfiable(tmp_path, capsys):
    d = scalar_dict()
    d["agents"] *= 2
    d["agent_layer"]["adjacency"] = [[0.0, 1.0], [0.0, 0.0]]
    d["synthesis"] = {"M": 1, "T": 1, "selfloop_capable": [0, 0]}
    d["sublayer_weights"] = {"rule": {"root_edge": 1.0, "relay_edge": 1.0, "selfloop": 1.0}}
    d["sim"]["x0"] = [1.0, 1.0]
    assert run("synth", "--scenario", write(tmp_path, d), "--out", str(tmp_path / "o")) == cli.EXIT_UNSAT
    assert "unsatisfiable" in capsys.readouterr().err


def test_exit_validation(tmp_path):
    d = scenario.bundled_scenario_dict()
    d["weights"]["a_f"] = 1e-3
    sc = write(tmp_path, d)
    out = str(tmp_path / "o")
    assert run("synth", "--scenario", sc, "--out", out) == 0
    assert run("design", "--scenario", sc, "--out", out) == cli.EXIT_VALIDATION
    g = json.loads((tmp_path / "o" / "gains.json").read_text())
    assert g["validation"]["passed"] is False


def test_exit_schema(tmp_path):
    d = scalar_dict()
    d["sim"]["x0"] = [1.0, 2.0]
    assert run("synth", "--scenario", write(tmp_path, d), "--out", str(tmp_path / "o")) == cli.EXIT_SCHEMA
    (tmp_path / "bad.json").write_text("{not json")
    assert run("synth", "--scenario", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")) == cli.EXIT_SCHEMA
    d = scalar_dict()
    d["agents"][0]["f"] = {"id": "cubic"}
    sc = write(tmp_path, d)
    out = str(tmp_path / "o2")
    assert run("synth", "--scenario", sc, "--out", out) == 0
    assert run("design", "--scenario", sc, "--out", out) == 0
    assert run("simulate", "--scenario", sc, "--out", out) == cli.EXIT_SCHEMA


def test_exit_missing_stage_input(tmp_path):
    assert run("design", "--scenario", write(tmp_path, scalar_dict()), "--out", str(tmp_path / "empty")) == 1


def test_expect_stable(tmp_path):
    # blocking the only selfloop leaves x' = x, which crosses the ceiling within the horizon
    attack = {"timed": [{"selfloops": [1], "start": 0.2}]}
    sc = write(tmp_path, scalar_dict(attack=attack, ceiling=2.0))
    out = str(tmp_path / "o")
    assert run("synth", "--scenario", sc, "--out", out) == 0
    assert run("design", "--scenario", sc, "--out", out) == 0
    assert run("simulate", "--scenario", sc, "--out", out) == 0
    assert run("simulate", "--scenario", sc, "--out", out, "--expect-stable") == cli.EXIT_DIVERGED
    assert run("analyze", "--scenario", sc, "--out", out) == 0
    assert "verdict: diverged" in (tmp_path / "o" / "analysis_run.txt").read_text()


def test_bad_seed(tmp_path):
    assert run("synth", "--out", str(tmp_path), "--seed", "-1") == cli.EXIT_SCHEMA


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "switchmtd.cli", "synth", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stderr.count("sublayer") == 5
