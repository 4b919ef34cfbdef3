"""Budget sweeps with resumable, append-only CSV output."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .abompn import AbompnConfig, abompn_solve
from .errors import EvplanError, NoFeasibleDesign, ValidationError
from .generators import resample_electricity_prices
from .planner import PlannerSolution, baseline_placement_only, baseline_price_only

JOINT, PRICE_ONLY, PLACEMENT_ONLY = "joint", "price_only", "placement_only"
METHODS = (JOINT, PRICE_ONLY, PLACEMENT_ONLY)
CSV_HEADER = ("budget", "method", "theta", "feasible", "gap", "iterations", "stations")
PLOT_HEADER = ("budget", "method", "mean_theta", "std_theta", "n")
PLATEAU_REL = 1e-3


@dataclass
class SweepRow:
    budget: int
    method: str
    theta: float
    feasible: bool
    gap: float
    iterations: int
    stations: str
    replication: int = 0

    def as_csv(self) -> list[str]:
        return [
            str(self.budget),
            self.method,
            repr(self.theta),
            str(self.feasible).lower(),
            repr(self.gap),
            str(self.iterations),
            self.stations,
        ]


def parse_budgets(text: str) -> list[int]:
    """``"1..10"``, ``"3"`` or ``"1,3,7"`` to an ascending budget list."""
    try:
        if ".." in text:
            lo, hi = (int(s) for s in text.split("..", 1))
            budgets = list(range(lo, hi + 1))
        else:
            budgets = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"cannot read budget range {text!r}", "budgets") from None
    _check_budgets(budgets)
    return budgets


def _check_budgets(budgets: Sequence[int]) -> None:
    if not budgets:
        raise ValidationError("budget list is empty", "budgets")
    if any(b < 0 for b in budgets):
        raise ValidationError("budgets must be non-negative", "budgets")
    if list(budgets) != sorted(set(budgets)):
        raise ValidationError("budgets must be strictly ascending", "budgets")


def _row(budget, method, sol: PlannerSolution, replication) -> SweepRow:
    eq = sol.evaluation.eq
    return SweepRow(budget, method, sol.theta, sol.feasible, eq.gap, eq.iterations, sol.design.stations_label(), replication)


def _error_row(budget, method, exc, replication) -> SweepRow:
    return SweepRow(budget, method, math.nan, False, math.nan, 0, f"error:{type(exc).__name__}", replication)


def read_rows(path: Path) -> list[SweepRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return rows
        if tuple(header) != CSV_HEADER:
            raise ValidationError(f"{path} is not a sweep file", "sweep_header")
        seen: dict[tuple, int] = {}
        for rec in reader:
            if len(rec) != len(CSV_HEADER):
                break  # partial trailing line from an interrupted run
            key = (int(rec[0]), rec[1])
            rep = seen.get(key, 0)
            seen[key] = rep + 1
            rows.append(
                SweepRow(int(rec[0]), rec[1], float(rec[2]), rec[3] == "true", float(rec[4]), int(rec[5]), rec[6], rep)
            )
    return rows


def _solve(method, scenario, cfg: AbompnConfig, warm):
    if method == PRICE_ONLY:
        return baseline_price_only(scenario, None, cfg.optimizer)
    if method == PLACEMENT_ONLY:
        return baseline_placement_only(scenario, None, cfg.optimizer, warm_starts=warm)
    return abompn_solve(scenario, cfg, warm_starts=warm)


def sweep_budget(
    scenario,
    budgets: Iterable[int],
    methods: Sequence[str] = (JOINT,),
    replications: int = 1,
    cfg: AbompnConfig | None = None,
    out: str | Path | None = None,
    cell_dir: str | Path | None = None,
    on_row: Callable[[SweepRow], None] | None = None,
) -> list[SweepRow]:
    """Run every (replication, budget, method) cell and return one row per cell.

    Replication 0 uses the scenario's own electricity prices; later ones
    redraw them from the seed. Within a replication, budgets run in
    ascending order and each cell is seeded with the previous budget's
    solution of the same method; joint cells are also seeded with the
    baselines of the same budget. A larger budget therefore never scores
    worse than a smaller one and the joint method never loses to a
    baseline it was run alongside.

    With ``out`` the rows are appended to that CSV as they finish and cells
    already present are skipped. ``cell_dir`` keeps each cell's full
    solution so a resumed sweep can still seed from skipped cells.
    """
    from .scenario_io import load_solution, save_solution

    budgets = list(budgets)
    _check_budgets(budgets)
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise ValidationError(f"unknown sweep methods {unknown}", "methods")
    if replications < 1:
        raise ValidationError("replications must be at least 1", "replications")
    cfg = cfg or AbompnConfig()
    order = [m for m in (PRICE_ONLY, PLACEMENT_ONLY, JOINT) if m in methods]

    done: dict[tuple, SweepRow] = {}
    path = Path(out) if out is not None else None
    if path is not None and path.exists() and path.stat().st_size > 0:
        _truncate_partial(path)
        for row in read_rows(path):
            done[(row.replication, row.budget, row.method)] = row
    cells = Path(cell_dir) if cell_dir is not None else None
    if cells is not None:
        cells.mkdir(parents=True, exist_ok=True)
    writer_fh = None
    if path is not None:
        new_file = not path.exists() or path.stat().st_size == 0
        writer_fh = open(path, "a", newline="")
        writer = csv.writer(writer_fh, lineterminator="\n")
        if new_file:
            writer.writerow(CSV_HEADER)
            writer_fh.flush()

    rows: list[SweepRow] = []
    try:
        for rep in range(replications):
            base = resample_electricity_prices(scenario, rep)
            previous: dict[str, PlannerSolution] = {}
            for budget in budgets:
                sc = base.with_changes(budget=budget)
                current: dict[str, PlannerSolution] = {}
                for method in order:
                    key = (rep, budget, method)
                    cell_file = cells / f"r{rep}_b{budget}_{method}.sol" if cells is not None else None
                    if key in done:
                        row = done[key]
                        if cell_file is not None and cell_file.exists():
                            current[method] = load_solution(cell_file)
                        rows.append(row)
                        continue
                    warm = [previous[method]] if method in previous else []
                    if method == JOINT:
                        warm += [current[m] for m in (PRICE_ONLY, PLACEMENT_ONLY) if m in current]
                    try:
                        sol = _solve(method, sc, cfg, warm)
                        row = _row(budget, method, sol, rep)
                        if sol.feasible:
                            current[method] = sol
                            if cell_file is not None:
                                save_solution(sol, cell_file)
                    except EvplanError as exc:
                        row = _error_row(budget, method, exc, rep)
                    rows.append(row)
                    if writer_fh is not None:
                        writer.writerow(row.as_csv())
                        writer_fh.flush()
                    if on_row is not None:
                        on_row(row)
                for method, sol in current.items():
                    previous[method] = sol
    finally:
        if writer_fh is not None:
            writer_fh.close()
    return rows


def _truncate_partial(path: Path) -> None:
    """Drop an unterminated last line left by an interrupted run."""
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        path.write_bytes(data[: data.rfind(b"\n") + 1])


def cell_succeeded(row: SweepRow) -> bool:
    """Completed without an error; an infeasible planning outcome still counts."""
    return not row.stations.startswith("error:") or row.stations == f"error:{NoFeasibleDesign.__name__}"


@dataclass
class PlotPoint:
    budget: int
    method: str
    mean_theta: float
    std_theta: float
    n: int


def plot_data(rows: Sequence[SweepRow]) -> list[PlotPoint]:
    """Mean and sample standard deviation of feasible Θ per (budget, method)."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        groups.setdefault((row.budget, row.method), [])
        if row.feasible and math.isfinite(row.theta):
            groups[(row.budget, row.method)].append(row.theta)
    out = []
    for (budget, method), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], METHODS.index(kv[0][1]))):
        if vals:
            mean = statistics.fmean(vals)
            std = statistics.stdev(vals) if len(vals) > 1 else 0.0
        else:
            mean = std = math.nan
        out.append(PlotPoint(budget, method, mean, std, len(vals)))
    return out


def write_plot_data(points: Sequence[PlotPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_HEADER)
        for p in points:
            w.writerow([p.budget, p.method, repr(p.mean_theta), repr(p.std_theta), p.n])


def plateau_budget(points: Sequence[PlotPoint], method: str = JOINT, rel: float = PLATEAU_REL) -> int | None:
    """First budget after which every unit of extra budget lowers mean Θ by less than ``rel``.

    Requires at least one later budget to compare against; returns None
    when the curve is still falling at the end of the sweep.
    """
    pts = [p for p in points if p.method == method and math.isfinite(p.mean_theta)]
    pts.sort(key=lambda p: p.budget)
    if len(pts) < 2:
        return None
    steep = [
        (a.mean_theta - b.mean_theta) / (abs(a.mean_theta) * (b.budget - a.budget)) >= rel
        for a, b in zip(pts, pts[1:])
    ]
    for k in range(len(steep)):
        if not any(steep[k:]):
            return pts[k].budget
    return None
