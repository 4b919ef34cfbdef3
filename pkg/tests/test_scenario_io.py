import math

import numpy as np
import pytest

from evplan.abompn import AbompnConfig
from evplan.errors import ParseError, ValidationError, VersionMismatch
from evplan.planner import OptimizerConfig, solve_relaxed_gaev
from evplan.scenario_io import (
    dumps_scenario,
    dumps_solution,
    generate_nd_like,
    load_design,
    load_scenario,
    load_solution,
    parse_scenario,
    parse_solution,
    save_scenario,
    save_solution,
)
from evplan.sweep import (
    CSV_HEADER,
    SweepRow,
    parse_budgets,
    plateau_budget,
    plot_data,
    read_rows,
    sweep_budget,
)

from fixtures import nd, single_corridor, symmetric_stations

MINIMAL = """\
[meta]
version = 1
seed = 4

[params]
lambda1 = 1
lambda2 = 2
lambda3 = 3
mu = 4
pi = 1.2
budget = 2

[nodes]
# id e t eligible
1 5 10 0
2 6.5 10 1

[links]
1 1 2 1.5 200

[od]
1 2 3 7
"""


def test_minimal_document():
    sc = parse_scenario(MINIMAL)
    assert list(sc.nodes) == [1, 2] and sc.budget == 2 and sc.seed == 4
    assert sc.e[2] == 6.5 and sorted(sc.eligible) == [2]
    assert sc.network.od_pairs[0].gamma_ncd == 7.0


def test_pi_must_exceed_one():
    with pytest.raises(ValidationError, match="pi must exceed 1"):
        parse_scenario(MINIMAL.replace("pi = 1.2", "pi = 1.0"))


def test_unknown_node_in_link():
    with pytest.raises(ValidationError):
        parse_scenario(MINIMAL.replace("1 1 2 1.5 200", "1 1 9 1.5 200"))


def test_unknown_field_is_rejected():
    with pytest.raises(ParseError) as err:
        parse_scenario(MINIMAL.replace("budget = 2", "budget = 2\ncolour = red"))
    assert err.value.field == "colour" and err.value.line == 12


def test_bad_number_reports_line():
    with pytest.raises(ParseError) as err:
        parse_scenario(MINIMAL.replace("1 5 10 0", "1 five 10 0"))
    assert err.value.line == 15


def test_old_version_has_migration_hint():
    with pytest.raises(VersionMismatch, match="save it again"):
        parse_scenario(MINIMAL.replace("version = 1", "version = 0"))


@pytest.mark.parametrize("seed", range(4))
def test_scenario_round_trip(seed, tmp_path):
    sc = nd(seed, budget=5)
    path = tmp_path / "s.txt"
    save_scenario(sc, path)
    back = load_scenario(path)
    assert dumps_scenario(back) == dumps_scenario(sc)
    assert back.e == sc.e and back.budget == 5
    assert [(l.d, l.c) for l in back.network.links] == [(l.d, l.c) for l in sc.network.links]
    assert back.network.n_paths == sc.network.n_paths


def test_generator_ranges_and_determinism():
    sc = generate_nd_like(5)
    assert len(sc.nodes) == 13 and len(sc.network.links) == 19 and len(sc.network.od_pairs) == 4
    w = sc.weights
    assert (w.lambda1, w.lambda2, w.lambda3, sc.mu, sc.pi, sc.budget) == (1.0, 2.0, 3.0, 4.0, 1.2, 7)
    for n in sc.nodes:
        lo, hi = (11.0, 15.0) if n in (1, 2, 3, 4) else (5.0, 7.0)
        assert lo <= sc.e[n] <= hi
    assert all(1.0 <= l.d <= 3.0 and l.c == 200.0 for l in sc.network.links)
    assert dumps_scenario(generate_nd_like(5)) == dumps_scenario(sc)
    assert dumps_scenario(generate_nd_like(6)) != dumps_scenario(sc)
    small = generate_nd_like(5, {"budget": 3})
    assert small.budget == 3 and small.e == sc.e
    with pytest.raises(ValidationError):
        generate_nd_like(5, {"budgett": 3})


@pytest.fixture(scope="module")
def solution():
    return solve_relaxed_gaev(symmetric_stations(budget=3), cfg=OptimizerConfig(max_solves=200, n_starts=2))


def test_solution_round_trip_is_bitwise(solution, tmp_path):
    path = tmp_path / "sol.txt"
    save_solution(solution, path)
    back = load_solution(path)
    assert back.design.x == solution.design.x and back.design.y == solution.design.y
    assert back.theta == solution.theta
    for a, b in zip(back.profile.q + back.profile.q0, solution.profile.q + solution.profile.q0):
        assert np.array_equal(a, b)
    ev, ev0 = back.evaluation, solution.evaluation
    assert ev.profit_slack == ev0.profit_slack and ev.loads == ev0.loads
    assert ev.eq.gap == ev0.eq.gap and ev.eq.iterations == ev0.eq.iterations
    assert dumps_solution(back) == dumps_solution(solution)
    assert load_design(path).x == solution.design.x


def test_truncated_solution(solution):
    text = dumps_solution(solution)
    with pytest.raises(ParseError):
        parse_solution(text[: text.index("[summary]")])


def test_old_solution_version(solution):
    text = dumps_solution(solution).replace("version = 1", "version = 0", 1)
    with pytest.raises(VersionMismatch):
        parse_solution(text)


def test_parse_budgets():
    assert parse_budgets("1..4") == [1, 2, 3, 4]
    assert parse_budgets("2,5") == [2, 5]
    for bad in ("4..1", "a..b", "", "3,3"):
        with pytest.raises(ValidationError):
            parse_budgets(bad)


FAST = AbompnConfig(optimizer=OptimizerConfig(max_solves=200, n_starts=2))


def test_sweep_rows_monotone_and_dominant(tmp_path):
    sc = symmetric_stations()
    rows = sweep_budget(sc, [1, 2, 3], ["joint", "price_only", "placement_only"], cfg=FAST, out=tmp_path / "s.csv")
    assert len(rows) == 9
    by = {(r.budget, r.method): r for r in rows}
    for b in (1, 2, 3):
        joint = by[(b, "joint")]
        assert joint.feasible
        for m in ("price_only", "placement_only"):
            if by[(b, m)].feasible:
                assert joint.theta <= by[(b, m)].theta + 1e-6
    thetas = [by[(b, "joint")].theta for b in (1, 2, 3)]
    assert all(b <= a + 1e-4 * a for a, b in zip(thetas, thetas[1:]))
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 10


def test_sweep_resumes_without_recomputing(tmp_path):
    sc = single_corridor()
    out, cells = tmp_path / "s.csv", tmp_path / "cells"
    first = sweep_budget(sc, [1, 2], ["joint"], cfg=FAST, out=out, cell_dir=cells)
    # Simulate an interruption in the middle of writing the last row.
    text = out.read_text()
    out.write_text(text[: -5])
    seen = []
    second = sweep_budget(sc, [1, 2, 3], ["joint"], cfg=FAST, out=out, cell_dir=cells, on_row=seen.append)
    assert [r.budget for r in seen] == [2, 3]
    assert second[0] == first[0]
    assert [r.budget for r in read_rows(out)] == [1, 2, 3]


def test_sweep_records_errors_in_row(tmp_path):
    rows = sweep_budget(single_corridor(), [0, 1], ["joint"], cfg=FAST, out=tmp_path / "s.csv")
    assert rows[0].stations == "error:NoFeasibleDesign" and math.isnan(rows[0].theta) and not rows[0].feasible
    assert rows[1].feasible
    line = (tmp_path / "s.csv").read_text().splitlines()[1]
    assert line == "0,joint,nan,false,nan,0,error:NoFeasibleDesign"


def test_replications_resample_prices(tmp_path):
    rows = sweep_budget(nd(0, budget=2), [2], ["price_only"], replications=3, cfg=FAST)
    assert [r.replication for r in rows] == [0, 1, 2]
    assert len({r.theta for r in rows}) == 3
    pts = plot_data(rows)
    assert len(pts) == 1 and pts[0].n == 3
    assert pts[0].mean_theta == pytest.approx(np.mean([r.theta for r in rows]))
    assert pts[0].std_theta == pytest.approx(np.std([r.theta for r in rows], ddof=1))


def test_plateau_budget():
    rows = [SweepRow(b, "joint", t, True, 0.0, 1, "") for b, t in [(1, 100.0), (2, 90.0), (3, 89.99), (4, 89.985)]]
    assert plateau_budget(plot_data(rows)) == 2
    falling = [SweepRow(b, "joint", 100.0 - 5 * b, True, 0.0, 1, "") for b in (1, 2, 3)]
    assert plateau_budget(plot_data(falling)) is None
