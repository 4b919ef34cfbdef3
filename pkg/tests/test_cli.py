import csv

import pytest

import evplan.sweep
from evplan.cli import main
from evplan.errors import EvplanError
from evplan.generators import two_link_toy
from evplan.scenario_io import save_scenario

from fixtures import single_corridor

QUICK = ["--max-solves", "200", "--starts", "2"]


@pytest.fixture
def nd_file(tmp_path):
    path = tmp_path / "nd.txt"
    assert main(["generate", "--seed", "1", "--out", str(path)]) == 0
    return path


def test_validate_reports_penetration(nd_file, capsys):
    assert main(["validate", str(nd_file)]) == 0
    out = capsys.readouterr().out
    assert "alpha=0.130" in out and "nodes=13" in out and "links=19" in out


def test_validate_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("[meta]\nversion = 1\n[params]\nlambda1 = x\n")
    assert main(["validate", str(bad)]) == 2
    assert "missing section [nodes]" in capsys.readouterr().err


def test_validate_missing_file(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "absent.txt")]) == 2
    assert "does not exist" in capsys.readouterr().err


def test_equilibrium_two_link_toy(tmp_path, capsys):
    sc_path = tmp_path / "toy.txt"
    save_scenario(two_link_toy(), sc_path)
    out = tmp_path / "eq"
    assert main(["equilibrium", str(sc_path), "--tol", "1e-8", "--out", str(out)]) == 0
    with open(out / "flows.csv") as fh:
        rows = list(csv.DictReader(fh))
    shares = [float(r["share"]) for r in rows if r["class"] == "ncd"]
    assert shares == pytest.approx([2 / 3, 1 / 3], abs=5e-5)
    summary = dict(line.split(" = ", 1) for line in (out / "equilibrium_summary.txt").read_text().splitlines() if " = " in line and not line.startswith("#"))
    assert float(summary["gap"]) <= 1e-8


def test_equilibrium_without_station_for_evs(tmp_path, capsys):
    sc_path = tmp_path / "ev.txt"
    save_scenario(two_link_toy(gamma_ev=1.0), sc_path)
    design = tmp_path / "design.txt"
    design.write_text("[meta]\nversion = 1\nmethod = manual\nmode = integer\n\n[design]\n# node x y\n\n[summary]\ntheta = 0.0\n")
    code = main(["equilibrium", str(sc_path), "--design", str(design), "--out", str(tmp_path / "o")])
    assert code == 3
    assert "InfeasibleMode" in capsys.readouterr().err


def test_plan_is_byte_identical_across_runs(tmp_path, capsys):
    sc_path = tmp_path / "corridor.txt"
    save_scenario(single_corridor(budget=3), sc_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["plan", str(sc_path), "--seed", "3", *QUICK, "--out", str(out)]) == 0
    for name in ("solution.txt", "plan_summary.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    summary = (outs[0] / "plan_summary.txt").read_text()
    assert "rounding_gap_pct" in summary and "profit_slack[2]" in summary


def test_plan_price_only_uniform(nd_file, tmp_path, capsys):
    out = tmp_path / "p"
    assert main(["plan", str(nd_file), "--method", "price-only", "--budget", "11", *QUICK, "--out", str(out)]) == 0
    summary = (out / "plan_summary.txt").read_text()
    expected = ";".join(f"{n}:1" for n in (2, 3, 5, 6, 7, 8, 9, 10, 11, 12, 13))
    assert f"uniform_placement = {expected}" in summary


def test_plan_zero_budget_exits_four(tmp_path, capsys):
    sc_path = tmp_path / "corridor.txt"
    save_scenario(single_corridor(budget=0), sc_path)
    assert main(["plan", str(sc_path), *QUICK, "--out", str(tmp_path / "o")]) == 4


def test_small_sweep_writes_outputs(tmp_path, capsys):
    sc_path = tmp_path / "corridor.txt"
    save_scenario(single_corridor(), sc_path)
    out = tmp_path / "sweep"
    args = ["sweep", str(sc_path), "--budgets", "0..2", "--methods", "joint,price-only", "--replications", "1", *QUICK]
    assert main(args + ["--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "budget,method,theta,feasible,gap,iterations,stations"
    assert len(lines) == 7
    assert (out / "plot_data.csv").exists() and (out / "sweep.png").stat().st_size > 0
    assert "plateau_budget[joint]" in (out / "sweep_summary.txt").read_text()


def test_sweep_total_failure_exits_five(tmp_path, capsys, monkeypatch):
    def broken(*args, **kwargs):
        raise EvplanError("solver unavailable")

    monkeypatch.setattr(evplan.sweep, "_solve", broken)
    sc_path = tmp_path / "corridor.txt"
    save_scenario(single_corridor(), sc_path)
    code = main(["sweep", str(sc_path), "--budgets", "1..2", "--replications", "1", "--no-figure", "--out", str(tmp_path / "s")])
    assert code == 5
    assert "error:EvplanError" in (tmp_path / "s" / "sweep.csv").read_text()
