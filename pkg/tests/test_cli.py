"""Command line surface: solve, simulate, experiments, verify suites."""

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from tisp.cli import main
from tisp.solver import TRACE_COLUMNS


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def scalar_files(tmp_path):
    design = tmp_path / "X.csv"
    response = tmp_path / "y.csv"
    design.write_text("1.0\n")
    response.write_text("3.0\n")
    return design, response


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def test_solve_scalar_to_stdout(capsys, scalar_files):
    design, response = scalar_files
    code, out, err = run(capsys, ["solve", "--design", str(design),
                                  "--response", str(response),
                                  "--rule", "soft(lambda=1)", "--rho", "1"])
    assert code == 0
    assert out == "2.0\n"


def test_solve_writes_estimate_and_trace_files(capsys, tmp_path, scalar_files):
    design, response = scalar_files
    bstar = tmp_path / "bstar.csv"
    bstar.write_text("2.0\n")
    est = tmp_path / "est.csv"
    trace = tmp_path / "trace.csv"
    code, out, err = run(capsys, ["solve", "--design", str(design),
                                  "--response", str(response),
                                  "--rule", "soft(lambda=1)", "--rho", "1",
                                  "--beta-star", str(bstar),
                                  "--out", str(est), "--trace", str(trace)])
    assert code == 0
    assert out == ""
    assert est.read_text() == "2.0\n"
    lines = trace.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert lines[1].split(",")[4] != ""  # truth given, error columns filled


def test_solve_rho_below_norm_fails(capsys, scalar_files):
    design, response = scalar_files
    code, out, err = run(capsys, ["solve", "--design", str(design),
                                  "--response", str(response),
                                  "--rule", "soft(lambda=1)", "--rho", "0.001"])
    assert code == 1
    assert "below the design spectral norm" in err


def test_solve_bad_rule(capsys, scalar_files):
    design, response = scalar_files
    code, out, err = run(capsys, ["solve", "--design", str(design),
                                  "--response", str(response),
                                  "--rule", "soft(bogus=1)"])
    assert code == 1
    assert "bogus" in err


def test_solve_bad_schedule(capsys, scalar_files):
    design, response = scalar_files
    code, out, err = run(capsys, ["solve", "--design", str(design),
                                  "--response", str(response),
                                  "--rule", "soft(lambda=1)",
                                  "--lambda-schedule", "mystery:1"])
    assert code == 1
    assert "cannot parse schedule" in err


def test_solve_malformed_csv(capsys, tmp_path, scalar_files):
    design, response = scalar_files
    bad = tmp_path / "bad.csv"
    bad.write_text("1.0\nabc\n")
    code, out, err = run(capsys, ["solve", "--design", str(bad),
                                  "--response", str(response),
                                  "--rule", "soft(lambda=1)"])
    assert code == 1
    assert "line 2" in err


def test_solve_missing_file(capsys, tmp_path, scalar_files):
    _, response = scalar_files
    code, out, err = run(capsys, ["solve", "--design", str(tmp_path / "nope.csv"),
                                  "--response", str(response),
                                  "--rule", "soft(lambda=1)"])
    assert code == 1
    assert "cannot read" in err


def test_solve_dimension_mismatch(capsys, tmp_path):
    design = tmp_path / "X.csv"
    response = tmp_path / "y.csv"
    design.write_text("1.0,0.0\n0.0,1.0\n")
    response.write_text("1.0\n2.0\n3.0\n")
    code, out, err = run(capsys, ["solve", "--design", str(design),
                                  "--response", str(response),
                                  "--rule", "soft(lambda=1)"])
    assert code == 1
    assert "error" in err


def test_solve_non_convergence_exits_2(capsys, tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((10, 4))
    y = rng.standard_normal(10)
    design = tmp_path / "X.csv"
    response = tmp_path / "y.csv"
    design.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in X) + "\n")
    response.write_text("\n".join(repr(float(v)) for v in y) + "\n")
    code, out, err = run(capsys, ["solve", "--design", str(design),
                                  "--response", str(response),
                                  "--rule", "soft(lambda=0.1)",
                                  "--tol", "1e-15", "--max-iter", "2"])
    assert code == 2
    assert "did not converge within 2 iterations" in err
    assert len(out.splitlines()) == 4  # estimate still written


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

DECAY_CONFIG = {"ensemble": "gaussian-iid", "n": 40, "p": 20, "J_star": 2,
                "sigma": 0.5, "seeds": [0, 1], "rules": ["soft"]}


def write_config(tmp_path, payload):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(payload))
    return cfg


def test_simulate_writes_instance(capsys, tmp_path):
    cfg = write_config(tmp_path, DECAY_CONFIG)
    out_dir = tmp_path / "inst"
    code, out, err = run(capsys, ["simulate", "--config", str(cfg),
                                  "--out", str(out_dir)])
    assert code == 0
    X = (out_dir / "X.csv").read_text()
    assert len(X.splitlines()) == 40
    assert len(X.splitlines()[0].split(",")) == 20
    assert len((out_dir / "y.csv").read_text().splitlines()) == 40
    assert len((out_dir / "beta_star.csv").read_text().splitlines()) == 20

    out_dir2 = tmp_path / "inst2"
    run(capsys, ["simulate", "--config", str(cfg), "--out", str(out_dir2)])
    assert (out_dir2 / "X.csv").read_text() == X

    out_dir3 = tmp_path / "inst3"
    run(capsys, ["simulate", "--config", str(cfg), "--seed", "7",
                 "--out", str(out_dir3)])
    assert (out_dir3 / "X.csv").read_text() != X


def test_simulate_rejects_unknown_config_field(capsys, tmp_path):
    cfg = write_config(tmp_path, {**DECAY_CONFIG, "mystery_knob": 3})
    code, out, err = run(capsys, ["simulate", "--config", str(cfg),
                                  "--out", str(tmp_path / "x")])
    assert code == 1
    assert "mystery_knob" in err


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def test_decay_experiment_cli(capsys, tmp_path):
    cfg = write_config(tmp_path, DECAY_CONFIG)
    out_dir = tmp_path / "decay"
    code, out, err = run(capsys, ["decay", "--config", str(cfg),
                                  "--out", str(out_dir)])
    assert code == 0
    summary = json.loads(out)
    assert summary["num_runs"] == 2
    results = (out_dir / "decay_results.csv").read_text()
    assert json.loads((out_dir / "decay_summary.json").read_text()) == summary

    out_dir2 = tmp_path / "decay2"
    run(capsys, ["decay", "--config", str(cfg), "--out", str(out_dir2),
                 "--jobs", "2"])
    assert (out_dir2 / "decay_results.csv").read_text() == results
    assert (out_dir2 / "decay_summary.json").read_text() == \
        (out_dir / "decay_summary.json").read_text()


def test_rate_experiment_cli(capsys, tmp_path):
    cfg = write_config(tmp_path, {"ensemble": "gaussian-iid", "sigma": 1.0,
                                  "seeds": [0], "rules": ["hard"], "A": 2.0,
                                  "p_grid": [40, 80], "J_star_grid": [2, 4],
                                  "n_factor": 5.0})
    out_dir = tmp_path / "rate"
    code, out, err = run(capsys, ["rate", "--config", str(cfg),
                                  "--out", str(out_dir)])
    assert code == 0
    summary = json.loads(out)
    assert len(summary["cells"]) == 4
    header = (out_dir / "rate_results.csv").read_text().splitlines()[0]
    assert header.startswith("seed,rule,n,p,J_star")


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def test_verify_axioms_suite(capsys):
    code, out, err = run(capsys, ["verify", "--suite", "axioms"])
    assert code == 0
    lines = out.strip().splitlines()
    assert lines
    assert all(line.startswith("PASS") for line in lines)


def test_verify_regularity_suite_reports_finding(capsys):
    code, out, err = run(capsys, ["verify", "--suite", "regularity"])
    assert code == 0
    assert "violation reported as a finding" in out
    assert all(line.startswith("PASS") for line in out.strip().splitlines())


def test_verify_unknown_suite(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--suite", "nope"])
    assert exc.value.code == 1


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def test_module_entry_point(tmp_path):
    design = tmp_path / "X.csv"
    response = tmp_path / "y.csv"
    design.write_text("1.0\n")
    response.write_text("3.0\n")
    proc = subprocess.run([sys.executable, "-m", "tisp.cli", "solve",
                           "--design", str(design), "--response", str(response),
                           "--rule", "soft(lambda=1)", "--rho", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout == "2.0\n"


@pytest.mark.skipif(shutil.which("tisp") is None, reason="console script not on PATH")
def test_console_script(tmp_path):
    design = tmp_path / "X.csv"
    response = tmp_path / "y.csv"
    design.write_text("1.0\n")
    response.write_text("3.0\n")
    proc = subprocess.run(["tisp", "solve", "--design", str(design),
                           "--response", str(response),
                           "--rule", "soft(lambda=1)", "--rho", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout == "2.0\n"
