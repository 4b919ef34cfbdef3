"""Acceptance criteria 1-11, one test each; the terminal summary lists the outcome of every criterion."""

import statistics
import time

import numpy as np
import pytest

from evplan.abompn import abompn_solve
from evplan.cli import main
from evplan.costs import social_cost
from evplan.design import Design
from evplan.equilibrium import SolverConfig, brute_force_equilibrium, solve_equilibrium, wardrop_violations
from evplan.errors import NoFeasibleDesign
from evplan.network import FlowProfile
from evplan.planner import OptimizerConfig, baseline_placement_only, baseline_price_only
from evplan.rounding import integer_adjust
from evplan.scenario_io import save_scenario
from evplan.sweep import plateau_budget, plot_data, sweep_budget

from acceptance_log import record
from fixtures import (
    max_share_deviation,
    nd,
    potential_gradient_error,
    random_design,
    single_corridor,
    symmetric_stations,
    tiny_fixtures,
)

# Every feasible solution produced here is checked again for constraint safety.
EMITTED: list[tuple[str, object, int]] = []


def _emit(label, sol, budget):
    EMITTED.append((label, sol, budget))
    return sol


def test_criterion_01_equilibrium_matches_brute_force():
    start = time.perf_counter()
    worst_share, worst_theta = 0.0, 0.0
    for name, sc, design in tiny_fixtures():
        res = solve_equilibrium(sc, design, cfg=SolverConfig(tol=1e-9))
        grid = brute_force_equilibrium(sc, design, resolution=0.01)
        worst_share = max(worst_share, max_share_deviation(res.profile, grid))
        grid_theta = social_cost(sc, design or Design.empty(), grid)
        worst_theta = max(worst_theta, abs(res.theta - grid_theta) / grid_theta)
    elapsed = time.perf_counter() - start
    ok = worst_share <= 0.011 and worst_theta <= 1e-3 and elapsed < 10.0
    record(1, ok, f"6 fixtures, max share dev {worst_share:.4f} (<=0.011), max theta dev {worst_theta:.2e} (<=1e-3), {elapsed:.1f}s (<10s)")


def test_criterion_02_wardrop_certificate():
    start = time.perf_counter()
    failures = []
    rng = np.random.default_rng(2024)
    for k in range(100):
        sc = nd(
            k,
            lambda2=float(rng.choice([0.5, 2.0, 4.0])),
            gamma_ev=float(rng.uniform(5.0, 40.0)),
            gamma_ncd=float(rng.uniform(20.0, 150.0)),
        )
        design = random_design(sc, rng, integer=bool(k % 2))
        res = solve_equilibrium(sc, design, cfg=SolverConfig(tol=1e-9))
        viol = wardrop_violations(sc, design, res.profile, rel_tol=1e-4)
        if not res.converged or viol:
            failures.append(k)
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60.0
    record(2, ok, f"100 random scenarios, violations in {len(failures)} {failures[:5]}, {elapsed:.1f}s (<60s)")


def test_criterion_03_potential_gradient():
    worst = 0.0
    cases = [(sc, design or Design.empty()) for _, sc, design in tiny_fixtures()]
    rng = np.random.default_rng(3)
    cases += [(nd(s), random_design(nd(s), rng)) for s in range(2)]
    for k, (sc, design) in enumerate(cases):
        worst = max(worst, potential_gradient_error(sc, design, np.random.default_rng(k), points=20))
    record(3, worst < 1e-5, f"{len(cases)} fixtures x 20 points, max relative error {worst:.2e} (<1e-5)")


def _random_initial(sc, design, rng):
    q = []
    for ps in sc.network.extended_paths:
        ok = np.array([design.x.get(p.charge_node, 0) > 0 for p in ps], float)
        raw = rng.random(len(ps)) * ok
        q.append(raw / raw.sum() if raw.sum() > 0 else raw)
    return FlowProfile(q, [rng.dirichlet(np.ones(len(r))) for r in sc.network.routes])


def test_criterion_04_theta_unique_across_starts():
    rng = np.random.default_rng(4)
    cases = [(sc, design or Design.empty()) for _, sc, design in tiny_fixtures()]
    cases += [(nd(s), random_design(nd(s), rng, integer=bool(s % 2))) for s in range(6)]
    worst = 0.0
    cfg = SolverConfig(tol=1e-9)
    for sc, design in cases:
        a = solve_equilibrium(sc, design, cfg=cfg)
        b = solve_equilibrium(sc, design, cfg=cfg, initial=_random_initial(sc, design, rng))
        worst = max(worst, abs(a.theta - b.theta) / a.theta)
    record(4, worst <= 1e-4, f"{len(cases)} fixtures, max relative theta difference {worst:.2e} (<=1e-4)")


@pytest.mark.slow
def test_criterion_05_rounding_gap():
    gaps, rounded = [], []
    for seed in (0, 1):
        for lam2 in (0.5, 2.0, 4.0):
            for budget in (3, 7):
                sc = nd(seed, budget=budget, lambda2=lam2)
                sol = _emit(f"abompn seed={seed} l2={lam2} B={budget}", abompn_solve(sc), budget)
                gaps.append(sol.info["rounding_gap"])
                rounded.append(sol.info["rounded_gap"])
    worst = max(gaps)
    finite = [g for g in rounded if np.isfinite(g)]
    detail = (
        f"{len(gaps)} instances, max gap {100 * worst:.3f}% (<1%); plain rounding: "
        f"{len(rounded) - len(finite)} without profitable prices, max finite {100 * max(finite):.3f}%"
    )
    record(5, worst < 0.01, detail)


@pytest.mark.slow
def test_criterion_06_decomposition_accuracy():
    devs = []
    for seed in range(10):
        sc = nd(seed)
        sol = _emit(f"abompn seed={seed}", abompn_solve(sc), sc.budget)
        assert sol.info["alpha"] <= 0.15 and sol.decomposed_q0 is not None
        devs.append(max(float(np.max(np.abs(a - b))) for a, b in zip(sol.decomposed_q0, sol.profile.q0) if len(a)))
    worst = max(devs)
    detail = f"10 instances at alpha=0.130, L-inf NCD share gap max {worst:.4f} median {statistics.median(devs):.4f} (<0.01)"
    record(6, worst < 0.01, detail)


@pytest.mark.slow
def test_criterion_07_joint_dominance():
    fixtures = [(f"nd{s} B={b}", nd(s, budget=b)) for s in range(4) for b in (3, 7)]
    fixtures += [("symmetric B=3", symmetric_stations(budget=3)), ("corridor B=3", single_corridor(budget=3))]
    losses, improvements = [], []
    for name, sc in fixtures:
        price = _emit(f"price-only {name}", baseline_price_only(sc), sc.budget)
        placement = _emit(f"placement-only {name}", baseline_placement_only(sc), sc.budget)
        joint = _emit(f"joint {name}", abompn_solve(sc), sc.budget)
        if not (price.feasible and placement.feasible and joint.feasible):
            continue
        best = min(price.theta, placement.theta)
        if joint.theta > best + 1e-6:
            losses.append(name)
        if name.startswith("nd"):
            improvements.append((best - joint.theta) / best)
    median = statistics.median(improvements)
    detail = (
        f"{len(fixtures)} fixtures, joint worse than a baseline on {losses or 'none'}; "
        f"median ND improvement over the better baseline {100 * median:.2f}% (target 10%, reported only)"
    )
    record(7, not losses, detail)


@pytest.mark.slow
def test_criterion_08_budget_monotonicity_and_plateau():
    outcomes = []
    ok = True
    for seed in (0, 1):
        rows = sweep_budget(nd(seed), range(1, 13), ["joint"], replications=2)
        for r in rows:
            if r.feasible:
                _emit(f"sweep seed={seed} B={r.budget}", r, r.budget)
        pts = [p for p in plot_data(rows) if p.method == "joint"]
        means = [p.mean_theta for p in pts]
        monotone = all(b <= a * (1 + 1e-4) for a, b in zip(means, means[1:]))
        b_star = plateau_budget(pts)
        ok = ok and monotone and b_star is not None and b_star <= 12
        outcomes.append(f"seed {seed}: non-increasing={monotone} B*={b_star}")
    record(8, ok, "; ".join(outcomes))


def test_criterion_09_rounding_law():
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    bad = 0
    for k in range(1000):
        x = rng.uniform(0, 6, rng.integers(1, 15)) * (rng.random() < 0.9)
        out = integer_adjust(x)
        if out.sum() != np.floor(x.sum() + 0.5) or np.any(np.abs(out - x) >= 1):
            bad += 1
        ints = np.floor(x)
        if not np.array_equal(integer_adjust(ints), ints.astype(int)):
            bad += 1
    elapsed = time.perf_counter() - start
    record(9, bad == 0 and elapsed < 1.0, f"1000 vectors, {bad} violations, {elapsed:.2f}s (<1s)")


def test_criterion_10_plan_is_deterministic(tmp_path):
    sc_path = tmp_path / "nd1.txt"
    save_scenario(nd(1), sc_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["plan", str(sc_path), "--seed", "7", "--out", str(out)]) == 0
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in ("solution.txt", "plan_summary.txt"))
    record(10, same, "two `plan --seed 7` runs on ND-like seed 1: outputs byte-identical" if same else "outputs differ")


def test_criterion_11_constraint_safety():
    checked = list(EMITTED)
    for seed in (4, 5):
        for budget in (1, 2, 5):
            sc = nd(seed, budget=budget)
            cfg = OptimizerConfig(max_solves=600, n_starts=4)
            for label, solve in (
                ("price-only", lambda: baseline_price_only(sc, cfg=cfg)),
                ("placement-only", lambda: baseline_placement_only(sc, cfg=cfg)),
                ("joint", lambda: abompn_solve(sc)),
            ):
                try:
                    checked.append((f"{label} seed={seed} B={budget}", solve(), budget))
                except NoFeasibleDesign:
                    continue
    bad = []
    n_feasible = 0
    for label, sol, budget in checked:
        if not sol.feasible:
            continue
        n_feasible += 1
        if hasattr(sol, "design"):
            total = sum(sol.design.x.values())
            slack_ok = sol.evaluation.min_slack >= -1e-6
        else:  # sweep row: stations are "node:x:y" entries
            total = sum(float(s.split(":")[1]) for s in sol.stations.split(";") if s)
            slack_ok = True
        if total > budget or not slack_ok:
            bad.append(label)
    record(11, not bad, f"{n_feasible} feasible solutions, budget or profitability violated by {bad or 'none'}")
