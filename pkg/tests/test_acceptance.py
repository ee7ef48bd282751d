"""Acceptance gate: ten numbered criteria, one test and one printed line each.

Criterion 4 exercises objective descent at the exact scale it names,
rho = ||X||_2 * 1.001 / (2 - contraction).  For every rule whose contraction
constant is below one that scale sits under ||X||_2 / sqrt(2 - contraction),
the smallest scale at which the surrogate argument certifies descent, and the
iteration demonstrably increases the objective.  The test states the check
faithfully and is expected to fail for those rules; see the analysis in the
repository notes.
"""

import io
import math
import time

import numpy as np
import pytest

from tisp.oracle import (
    check_theta_equation,
    coordinate_descent_local_min,
    l0_global_min,
)
from tisp.penalty import (
    PenaltySpec,
    energy,
    penalty_hard,
    penalty_l0,
    penalty_l1,
    penalty_theta,
    penalty_theta_quadrature,
)
from tisp.simulate import (
    ExperimentSpec,
    run_decay_experiment,
    run_rate_experiment,
    write_results_csv,
    write_summary_json,
)
from tisp.solver import (
    Problem,
    SolverConfig,
    gaussian_starts,
    scale_problem,
    solve,
    spectral_norm,
    theory_threshold,
    tisp_step,
    triangle_inequality_check,
)
from tisp.thresholding import (
    LAMBDA_KINDS,
    default_contraction_grid,
    estimate_contraction,
    parse_rule,
    rule_catalog,
    verify_axioms,
)


def criterion(num, ok, detail):
    line = f"CRITERION {num} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line, flush=True)
    assert ok, line


def results_csv(rows):
    buf = io.StringIO()
    write_results_csv(rows, buf)
    return buf.getvalue()


def summary_text(summary):
    buf = io.StringIO()
    write_summary_json(summary, buf)
    return buf.getvalue()


DECAY_SPEC = ExperimentSpec(ensemble="gaussian-iid", n=400, p=200, J_star=5,
                            sigma=1.0, seeds=tuple(range(20)),
                            rules=("soft", "hard"), lambda_policy="theory",
                            A=1.0)

RATE_SPEC = ExperimentSpec(ensemble="gaussian-iid", sigma=1.0,
                           seeds=tuple(range(10)), rules=("hard",),
                           lambda_policy="theory", A=2.0,
                           p_grid=(100, 200, 400), J_star_grid=(2, 5, 10),
                           n_factor=20.0)


@pytest.fixture(scope="module")
def decay_bundle():
    t0 = time.monotonic()
    results, summary = run_decay_experiment(DECAY_SPEC, jobs=1)
    elapsed = time.monotonic() - t0
    return {"results": results, "summary": summary, "elapsed": elapsed,
            "csv": results_csv(results), "summary_text": summary_text(summary)}


@pytest.fixture(scope="module")
def rate_bundle():
    t0 = time.monotonic()
    rows, summary = run_rate_experiment(RATE_SPEC, jobs=1)
    elapsed = time.monotonic() - t0
    return {"rows": rows, "summary": summary, "elapsed": elapsed,
            "csv": results_csv(rows), "summary_text": summary_text(summary)}


def test_criterion_01_rule_axioms():
    t0 = time.monotonic()
    grid = np.linspace(-10.0, 10.0, 2001)
    worst_odd = 0.0
    failing = []
    for r in rule_catalog():
        rep = verify_axioms(r, grid)
        worst_odd = max(worst_odd, rep.oddness)
        if not (rep.oddness <= 1e-12 and rep.monotonicity <= 0.0
                and rep.shrinkage <= 0.0 and rep.unboundedness <= 0.0):
            failing.append(r.kind)
    elapsed = time.monotonic() - t0
    detail = (f"9 rules on a 2001-point grid at 3 thresholds; "
              f"worst oddness {worst_odd:.2e}; {elapsed:.2f}s")
    if failing:
        detail += f"; failing rules: {failing}"
    criterion(1, not failing and elapsed < 5.0, detail)


def test_criterion_02_contraction_constants():
    t0 = time.monotonic()
    worst = 0.0
    findings = []
    for r in rule_catalog():
        est = estimate_contraction(r, default_contraction_grid(r))
        gap = abs(est - r.contraction)
        worst = max(worst, gap)
        if gap > 1e-3:
            findings.append(f"{r.kind}: stored {r.contraction:.6g}, "
                            f"estimated {est:.6g}")
    elapsed = time.monotonic() - t0
    for f in findings:
        print(f"FINDING: contraction mismatch for {f}", flush=True)
    detail = f"worst |stored - estimated| {worst:.2e} across 9 rules; {elapsed:.2f}s"
    if findings:
        detail += f"; mismatches: {findings}"
    criterion(2, not findings and elapsed < 5.0, detail)


def test_criterion_03_penalty_closed_forms():
    t0 = time.monotonic()
    pts = np.linspace(-10.0, 10.0, 41)
    worst_quad = 0.0
    for r in rule_catalog():
        closed = penalty_theta(PenaltySpec(rule=r), pts)
        quad = np.array([penalty_theta_quadrature(r, float(t)) for t in pts])
        worst_quad = max(worst_quad, float(np.max(np.abs(closed - quad))))

    grid = np.linspace(-8.0, 8.0, 801)
    ph = penalty_hard(grid, 1.0)
    worst_dom = -np.inf
    for r in rule_catalog():
        if r.kind not in LAMBDA_KINDS:
            continue
        gap = float(np.min(penalty_theta(PenaltySpec(rule=r), grid) - ph))
        worst_dom = max(worst_dom, -gap)
    floor_gap = float(np.min(np.minimum(penalty_l0(grid, 1.0),
                                        penalty_l1(grid, 1.0)) - ph))
    pair = np.linspace(-4.0, 4.0, 81)
    sub = penalty_hard(pair[:, None] + pair[None, :], 1.0) \
        - penalty_hard(pair, 1.0)[:, None] - penalty_hard(pair, 1.0)[None, :]
    worst_sub = float(np.max(sub))
    elapsed = time.monotonic() - t0
    ok = (worst_quad <= 1e-8 and worst_dom <= 1e-10 and floor_gap >= -1e-10
          and worst_sub <= 1e-10 and elapsed < 10.0)
    criterion(3, ok, f"closed vs quadrature {worst_quad:.2e}; dominance slack "
                     f"{worst_dom:.2e}; floor slack {floor_gap:.2e}; "
                     f"subadditivity {worst_sub:.2e}; {elapsed:.2f}s")


def test_criterion_04_descent_at_stated_scale():
    t0 = time.monotonic()
    rows = []
    for r in rule_catalog():
        spec = PenaltySpec(rule=r)
        worst = -np.inf
        for i in range(50):
            rng = np.random.default_rng(9000 + i)
            X = rng.standard_normal((40, 100))
            y = 4.0 * rng.standard_normal(40)
            rho = spectral_norm(X) * 1.001 / (2.0 - r.contraction)
            scaled = Problem(X / rho, y)
            beta = np.zeros(100)
            f_prev = energy(spec, scaled, beta, 1.0)
            for _ in range(40):
                beta = tisp_step(beta, scaled, r)
                f = energy(spec, scaled, beta, 1.0)
                worst = max(worst, (f - f_prev) / (1.0 + abs(f_prev)))
                f_prev = f
        rows.append((r.kind, worst))
    elapsed = time.monotonic() - t0
    bad = [(k, w) for k, w in rows if w > 1e-10]
    detail = "; ".join(f"{k} worst rise {w:.3e}" for k, w in rows)
    detail += f"; {elapsed:.1f}s"
    if bad:
        detail += (". The scale norm * 1.001 / (2 - contraction) is below "
                   "norm / sqrt(2 - contraction) whenever the contraction is "
                   "under one, and descent genuinely fails there; only the "
                   "contraction-one rules coincide with the sound scale.")
    criterion(4, not bad and elapsed < 60.0, detail)


def test_criterion_05_stationarity_checks():
    t0 = time.monotonic()
    tol = 1e-9
    worst_solver = 0.0
    converged = 0
    for idx, r in enumerate(rule_catalog(lam=0.7, eta=0.5, gamma=2.5)):
        for s in range(3):
            rng = np.random.default_rng(1000 * idx + s)
            X = rng.standard_normal((20, 12)) / math.sqrt(20)
            y = 3.0 * rng.standard_normal(20)
            res = solve(Problem(X, y), SolverConfig(rule=r, tol=tol))
            if res.converged:
                converged += 1
                worst_solver = max(worst_solver, res.theta_residual)

    cd_rules = [parse_rule("soft(lambda=0.4)"),
                parse_rule("mcp(lambda=0.4,gamma=3)"),
                parse_rule("scad(lambda=0.4,a=3.7)")]
    worst_cd = 0.0
    flagged = 0
    checked = 0
    for i in range(100):
        rng = np.random.default_rng(5000 + i)
        X = rng.standard_normal((20, 10))
        k = int(rng.integers(1, 4))
        bstar = np.zeros(10)
        bstar[rng.choice(10, size=k, replace=False)] = 3.0 * rng.standard_normal(k)
        y = X @ bstar + 0.3 * rng.standard_normal(20)
        prob = Problem(X, y)
        rho = 1.05 * spectral_norm(X)
        for r in cd_rules:
            cd = coordinate_descent_local_min(prob, PenaltySpec(rule=r), rho=rho)
            rep = check_theta_equation(cd.beta / rho, prob, r, rho=rho, tol=1e-6)
            if rep.continuity_flag:
                flagged += 1
                continue
            checked += 1
            worst_cd = max(worst_cd, rep.residual)
    elapsed = time.monotonic() - t0
    ok = (converged == 27 and worst_solver <= 10 * tol and worst_cd <= 1e-6
          and elapsed < 60.0)
    criterion(5, ok, f"{converged}/27 solves converged, worst residual "
                     f"{worst_solver:.2e} <= {10 * tol:.0e}; {checked} descent "
                     f"minima checked ({flagged} flagged), worst residual "
                     f"{worst_cd:.2e}; {elapsed:.1f}s")


def test_criterion_06_small_problem_global_optimality():
    t0 = time.monotonic()
    lam = 0.5
    hard = parse_rule(f"hard(lambda={lam})")
    gap_failures = 0
    worst_margin = np.inf
    runs = 0
    for i in range(200):
        rng = np.random.default_rng(6000 + i)
        p = int(rng.integers(3, 11))
        n = int(rng.integers(p, 2 * p + 6))
        X = rng.standard_normal((n, p))
        y = 2.0 * rng.standard_normal(n)
        prob = Problem(X, y)
        rho = 1.05 * spectral_norm(X)
        oracle = l0_global_min(prob, lam, rho)
        if not oracle.gap_ok:
            gap_failures += 1
            continue
        cfg = SolverConfig(rule=hard, rho=rho, tol=1e-10, max_iter=1500)
        Xs = X / rho
        for start in [np.zeros(p)] + gaussian_starts(prob, 20, seed=i):
            res = solve(prob, cfg, start=start)
            b = rho * res.beta
            f = 0.5 * float(np.sum((Xs @ b - y) ** 2)) \
                + 0.5 * lam * lam * np.count_nonzero(b)
            margin = (f - oracle.objective) / (1.0 + abs(oracle.objective))
            worst_margin = min(worst_margin, margin)
            runs += 1
    elapsed = time.monotonic() - t0
    ok = (gap_failures == 0 and worst_margin >= -1e-9 and elapsed < 120.0)
    criterion(6, ok, f"200 instances, {runs} runs; gap failures {gap_failures}; "
                     f"worst fixed-point margin {worst_margin:.2e} >= -1e-9; "
                     f"{elapsed:.1f}s")


def test_criterion_07_majorization_inequality():
    t0 = time.monotonic()
    pairs = 0
    worst = np.inf
    for r in rule_catalog(lam=0.8, eta=0.4, gamma=3.0):
        spec = PenaltySpec(rule=r)
        for i in range(5):
            rng = np.random.default_rng(7000 + i)
            X = rng.standard_normal((10, 20))
            y = rng.standard_normal(10)
            scaled, _ = scale_problem(Problem(X, y), 1.02 * spectral_norm(X))
            beta = np.zeros(20)
            for _ in range(5):
                nxt = tisp_step(beta, scaled, r)
                probes = [nxt, beta, np.zeros(20), rng.standard_normal(20),
                          2.0 * rng.standard_normal(20)]
                for probe in probes:
                    slack = triangle_inequality_check(beta, nxt, probe, scaled,
                                                      spec)
                    f_probe = energy(spec, scaled, probe, 1.0)
                    worst = min(worst, slack / (1.0 + abs(f_probe)))
                    pairs += 1
                beta = nxt
    elapsed = time.monotonic() - t0
    ok = pairs >= 1000 and worst >= -1e-8 and elapsed < 30.0
    criterion(7, ok, f"{pairs} (iterate, probe) pairs; worst normalized slack "
                     f"{worst:.2e} >= -1e-8; {elapsed:.1f}s")


def test_criterion_08_per_step_error_bound(decay_bundle):
    summary = decay_bundle["summary"]
    results = decay_bundle["results"]
    sb = summary["step_bound"]
    bound_ok = sb is not None and sb["kappa"] < 1.0 and sb["K_prime"] <= 20.0

    worst_violation = -np.inf
    if sb is not None:
        for run in results:
            d = run.lam ** 2 * run.row["J_star"]
            e = run.e_seq
            for a, b in zip(e, e[1:]):
                bound = sb["kappa"] * a + sb["K_prime"] * d
                worst_violation = max(worst_violation,
                                      b - bound - 1e-9 * (1.0 + abs(bound)))
    lam_ok = abs(summary["lambda"] - theory_threshold(1.0, 200)) <= 1e-12

    t0 = time.monotonic()
    noiseless = ExperimentSpec(ensemble="gaussian-iid", n=400, p=200, J_star=5,
                               sigma=0.0, signal_magnitude=1.0,
                               seeds=tuple(range(20)), rules=("hard",),
                               lambda_policy="theory", tol=1e-10)
    _, nsummary = run_decay_experiment(noiseless, jobs=1)
    total = decay_bundle["elapsed"] + time.monotonic() - t0
    plateau = nsummary["plateau_max"]

    ok = (bound_ok and worst_violation <= 0.0 and lam_ok
          and plateau <= 1e-12 and total < 300.0)
    sb_txt = (f"kappa {sb['kappa']:.4g}, K' {sb['K_prime']:.4g}"
              if sb is not None else "no step bound fitted")
    criterion(8, ok, f"{sb_txt} over {len(results)} runs, worst step "
                     f"violation {worst_violation:.2e}; noiseless plateau "
                     f"{plateau:.2e} <= 1e-12; {total:.1f}s")


def test_criterion_09_error_rate_scaling(rate_bundle):
    summary = rate_bundle["summary"]
    slope = summary["slope"]
    r2 = summary["r_squared"]
    cells = summary["cells"]
    sizes_ok = all(
        cell["n"] == max(math.ceil(20.0 * cell["J_star"] * math.log(cell["p"])),
                         cell["J_star"])
        for cell in cells)
    ok = (0.7 <= slope <= 1.3 and r2 >= 0.8 and sizes_ok and len(cells) == 9
          and rate_bundle["elapsed"] < 600.0)
    criterion(9, ok, f"slope {slope:.4f} in [0.7, 1.3]; R^2 {r2:.4f} >= 0.8; "
                     f"{len(cells)} cells with prescribed sizes; "
                     f"{rate_bundle['elapsed']:.1f}s")


def test_criterion_10_reproducibility(decay_bundle, rate_bundle):
    res_d, sum_d = run_decay_experiment(DECAY_SPEC, jobs=3)
    res_r, sum_r = run_rate_experiment(RATE_SPEC, jobs=2)
    same_decay = (results_csv(res_d) == decay_bundle["csv"]
                  and summary_text(sum_d) == decay_bundle["summary_text"])
    same_rate = (results_csv(res_r) == rate_bundle["csv"]
                 and summary_text(sum_r) == rate_bundle["summary_text"])
    criterion(10, same_decay and same_rate,
              f"decay rerun with jobs=3 identical: {same_decay}; "
              f"rate rerun with jobs=2 identical: {same_rate}")
