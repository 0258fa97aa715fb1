import json
import subprocess
import sys
from pathlib import Path

import pytest

import gwpersuasion
from gwpersuasion import cli
from gwpersuasion.equilibria import BudgetExceeded, NoEquilibrium

BUNDLED = Path(gwpersuasion.__file__).parent / "data" / "matching.json"
FAST = ["--restarts", "1"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_validate_bundled(capsys):
    assert run("validate", "--instance", BUNDLED) == cli.EXIT_OK
    assert "valid" in capsys.readouterr().out


def test_validate_reports_prior(tmp_path, capsys):
    doc = json.loads(BUNDLED.read_text())
    doc["prior"] = [0.9, 0.9]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "report.json"
    assert run("validate", "--instance", path, "--out", out) == cli.EXIT_INVALID
    assert "prior" in capsys.readouterr().out
    assert json.loads(out.read_text())["valid"] is False


def test_solve_rejects_invalid(tmp_path):
    doc = json.loads(BUNDLED.read_text())
    doc["prior"] = [0.9, 0.9]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert run("solve", "--instance", path) == cli.EXIT_INVALID


@pytest.mark.parametrize("text", ["{not json", "[]", '{"alphabets": 3}'])
def test_unreadable_instance(tmp_path, text):
    path = tmp_path / "x.json"
    path.write_text(text)
    assert run("validate", "--instance", path) == cli.EXIT_PARSE


def test_missing_file_and_bad_flags(tmp_path):
    assert run("validate", "--instance", tmp_path / "nope.json") == cli.EXIT_PARSE
    assert run("frobnicate", "--instance", BUNDLED) == cli.EXIT_PARSE
    assert run("solve", "--instance", BUNDLED, "--rates", "1,2") == cli.EXIT_PARSE
    assert run("simulate", "--instance", BUNDLED, "--n-list", "4,8") == cli.EXIT_PARSE


def test_bounds_gap(tmp_path, capsys):
    out = tmp_path / "b.json"
    assert run("bounds", "--instance", BUNDLED, "--out", out, *FAST) == cli.EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["gamma_hat"] <= doc["gamma_star"] + 1e-6
    assert doc["gap"] == doc["gamma_star"] - doc["gamma_hat"]
    assert json.loads(capsys.readouterr().out) == doc


def test_solve_output(tmp_path):
    out = tmp_path / "s.json"
    assert run("solve", "--instance", BUNDLED, "--rates", "1,1,1", "--out", out, *FAST) == 0
    doc = json.loads(out.read_text())
    assert doc["value"] == pytest.approx(0.0, abs=1e-9)


def test_policy_file_round_trip(tmp_path):
    solved = tmp_path / "s.json"
    assert run("solve", "--instance", BUNDLED, "--out", solved, *FAST) == 0
    out = tmp_path / "sim.json"
    code = run("simulate", "--instance", BUNDLED, "--policy", solved, "--n-list", "6",
               "--trials", "10", "--out", out)
    assert code == cli.EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["n"] == 6 and doc["gamma_star_ref"] is None
    assert set(doc["error_events"]) >= {"p_f0"}


def test_budget_refusal(tmp_path, monkeypatch):
    def refuse(*_, **__):
        raise BudgetExceeded("too many profiles")
    monkeypatch.setattr(cli, "solve_gamma_star", refuse)
    assert run("solve", "--instance", BUNDLED) == cli.EXIT_BUDGET


def test_no_equilibrium(monkeypatch):
    def fail(*_, **__):
        raise NoEquilibrium("nothing converged")
    monkeypatch.setattr(cli, "solve_gamma_star", fail)
    assert run("solve", "--instance", BUNDLED) == cli.EXIT_NO_EQ


def test_internal_error(monkeypatch, capsys):
    def boom(*_, **__):
        raise ZeroDivisionError("oops")
    monkeypatch.setattr(cli, "separable_gap_check", boom)
    assert run("check-separable", "--instance", BUNDLED) == cli.EXIT_INTERNAL
    assert "ZeroDivisionError" in capsys.readouterr().err


def test_sweep_csv(tmp_path):
    out = tmp_path / "sweep.csv"
    code = run("sweep", "--instance", BUNDLED, "--n-list", "4,6", "--trials", "5", "--out", out, *FAST)
    assert code == cli.EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("n,trial_count") and len(lines) == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gwpersuasion", "validate", "--instance", str(BUNDLED)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
