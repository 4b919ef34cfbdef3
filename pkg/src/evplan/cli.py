"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 equilibrium convergence failure or
infeasible equilibrium mode, 4 no feasible design, 5 every sweep cell failed.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

from . import __version__
from .abompn import AbompnConfig, abompn_solve, penetration_rate
from .costs import strategy_costs
from .design import Design
from .equilibrium import JOINT, MODES, NCD_ONLY, SolverConfig, solve_equilibrium
from .errors import EvplanError, InfeasibleMode, InputError, NoFeasibleDesign, NotConverged
from .generators import generate_nd_like
from .planner import OptimizerConfig, PlannerSolution, baseline_placement_only, baseline_price_only
from .scenario_io import load_design, load_scenario, save_scenario, save_solution
from .sweep import (
    METHODS,
    cell_succeeded,
    parse_budgets,
    plateau_budget,
    plot_data,
    sweep_budget,
    write_plot_data,
)

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_INFEASIBLE, EXIT_SWEEP = 0, 2, 3, 4, 5
PLAN_METHODS = ("abompn", "price-only", "placement-only")


def _color(text: str, code: str, stream) -> str:
    if os.environ.get("NO_COLOR") is not None or not getattr(stream, "isatty", lambda: False)():
        return text
    return f"\033[{code}m{text}\033[0m"


def _error(msg: str) -> None:
    print(_color("error:", "31", sys.stderr), msg, file=sys.stderr)


def _config_lines(args: argparse.Namespace) -> list[str]:
    """Every parsed option except the output path, defaults included, as ``# key = value`` lines."""
    skip = {"func", "out"}  # the output location does not affect results
    return [f"# {k} = {v}" for k, v in sorted(vars(args).items()) if k not in skip]


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(path: str):
    if not Path(path).is_file():
        raise InputError(f"scenario file {path!r} does not exist or is not a file")
    return load_scenario(path)


# --------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    sc = _load(args.scenario)
    net = sc.network
    print(
        f"nodes={len(net.nodes)} links={len(net.links)} od_pairs={len(net.od_pairs)} "
        f"routes={net.n_routes} extended_paths={net.n_paths} eligible={len(sc.eligible)} "
        f"budget={sc.budget} alpha={penetration_rate(sc):.3f}"
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    overrides = {}
    if args.budget is not None:
        overrides["budget"] = args.budget
    sc = generate_nd_like(args.seed, overrides)
    save_scenario(sc, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# equilibrium


def cmd_equilibrium(args) -> int:
    sc = _load(args.scenario)
    design = load_design(args.design) if args.design else None
    mode = args.mode or (JOINT if design is not None else NCD_ONLY)
    cfg = SolverConfig(tol=args.tol, max_iterations=args.max_iterations, method=args.solver)
    result = solve_equilibrium(sc, design, mode, cfg)
    if not result.converged and not args.allow_nonconverged:
        raise NotConverged(f"equilibrium gap {result.gap:.3e} after {result.iterations} iterations", result)

    out = _out_dir(args.out)
    net = sc.network
    c_ev, c_ncd = strategy_costs(sc, design or Design.empty(), result.profile)
    flows_path = out / "flows.csv"
    with open(flows_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["od", "class", "strategy", "share", "cost"])
        for k, od in enumerate(net.od_pairs):
            label = f"{od.origin}-{od.dest}"
            if mode != NCD_ONLY:
                for j, share in enumerate(result.profile.q[k]):
                    w.writerow([label, "ev", net.describe_path(k, j), f"{share:.10g}", _fmt(c_ev[k][j])])
            for j, share in enumerate(result.profile.q0[k]):
                w.writerow([label, "ncd", net.describe_route(k, j), f"{share:.10g}", _fmt(c_ncd[k][j])])
    summary = [
        f"theta = {result.theta!r}",
        f"gap = {result.gap!r}",
        f"iterations = {result.iterations}",
        f"converged = {str(result.converged).lower()}",
        f"mode = {mode}",
    ]
    summary_path = out / "equilibrium_summary.txt"
    summary_path.write_text("\n".join(_config_lines(args) + summary) + "\n")
    print(" ".join(summary))
    print(f"wrote {flows_path} {summary_path}")
    return EXIT_OK


def _fmt(v: float) -> str:
    return "inf" if not math.isfinite(v) else f"{v:.10g}"


# --------------------------------------------------------------------------
# plan


def _optimizer_cfg(args, seed: int) -> OptimizerConfig:
    return OptimizerConfig(
        seed=seed,
        max_solves=args.max_solves,
        n_starts=args.starts,
        threads=args.threads,
        solver=SolverConfig(tol=args.tol),
    )


def _plan_summary(sc, sol: PlannerSolution, method: str) -> list[str]:
    ev = sol.evaluation
    lines = [
        f"method = {method}",
        f"theta = {sol.theta!r}",
        f"feasible = {str(sol.feasible).lower()}",
        f"chargers = {sol.design.total_chargers():g} / {sc.budget}",
        f"stations = {sol.design.stations_label() or '(none)'}",
        f"equilibrium_gap = {ev.eq.gap!r}",
    ]
    for n in sorted(ev.profit_slack):
        lines.append(f"profit_slack[{n}] = {ev.profit_slack[n]!r}")
    if method == "abompn":
        info = sol.info
        lines += [
            f"alpha = {info.get('alpha', float('nan')):.4f}",
            f"layer1 = {info.get('layer1', '')}",
            f"relaxed_theta = {info.get('relaxed_theta', float('nan'))!r}",
            f"adjusted_theta = {info.get('adjusted_theta', float('nan'))!r}",
            f"rounding_gap_pct = {100.0 * info.get('rounding_gap', float('nan')):.4f}",
            f"rounded_theta = {info.get('rounded_theta', float('nan'))!r}",
            f"rounded_gap_pct = {100.0 * info.get('rounded_gap', float('nan')):.4f}",
        ]
    if method == "price-only":
        lines.append(f"uniform_placement = {sol.info.get('uniform_placement', '')}")
    if method == "placement-only":
        lines.append("price_rule = profitability floor at the realised load")
    return lines


def cmd_plan(args) -> int:
    sc = _load(args.scenario)
    if args.budget is not None:
        sc = sc.with_changes(budget=args.budget)
    seed = sc.seed if args.seed is None else args.seed
    args.seed = seed
    opt = _optimizer_cfg(args, seed)
    if args.method == "abompn":
        sol = abompn_solve(sc, AbompnConfig(alpha_threshold=args.alpha_threshold, optimizer=opt))
    elif args.method == "price-only":
        sol = baseline_price_only(sc, None, opt)
    else:
        sol = baseline_placement_only(sc, None, opt)
    out = _out_dir(args.out)
    sol_path = out / "solution.txt"
    save_solution(sol, sol_path)
    summary = _plan_summary(sc, sol, args.method)
    summary_path = out / "plan_summary.txt"
    summary_path.write_text("\n".join(_config_lines(args) + summary) + "\n")
    print("\n".join(summary))
    print(f"wrote {sol_path} {summary_path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    sc = _load(args.scenario)
    budgets = parse_budgets(args.budgets)
    methods = [m.strip().replace("-", "_") for m in args.methods.split(",") if m.strip()]
    seed = sc.seed if args.seed is None else args.seed
    args.seed = seed
    cfg = AbompnConfig(alpha_threshold=args.alpha_threshold, optimizer=_optimizer_cfg(args, seed))
    out = _out_dir(args.out)
    csv_path = out / "sweep.csv"

    def report(row):
        status = "ok" if cell_succeeded(row) else _color("failed", "31", sys.stdout)
        print(f"budget={row.budget} method={row.method} rep={row.replication} theta={row.theta:.6g} {status}", flush=True)

    rows = sweep_budget(
        sc, budgets, methods, args.replications, cfg, out=csv_path, cell_dir=out / "cells", on_row=report
    )
    points = plot_data(rows)
    plot_path = out / "plot_data.csv"
    write_plot_data(points, plot_path)
    written = [csv_path, plot_path]
    if not args.no_figure:
        from .plotting import plot_sweep

        written.append(plot_sweep(points, out / "sweep.png"))
    summary = [f"cells = {len(rows)}", f"succeeded = {sum(cell_succeeded(r) for r in rows)}"]
    for m in methods:
        b_star = plateau_budget(points, m)
        summary.append(f"plateau_budget[{m}] = {b_star if b_star is not None else 'none'}")
    summary_path = out / "sweep_summary.txt"
    summary_path.write_text("\n".join(_config_lines(args) + summary) + "\n")
    written.append(summary_path)
    print("\n".join(summary))
    print("wrote " + " ".join(str(p) for p in written))
    return EXIT_OK if any(cell_succeeded(r) for r in rows) else EXIT_SWEEP


# --------------------------------------------------------------------------


def _add_optimizer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="optimizer seed (default: the scenario seed)")
    p.add_argument("--max-solves", type=int, default=OptimizerConfig.max_solves, help="equilibrium solves per search")
    p.add_argument("--starts", type=int, default=OptimizerConfig.n_starts, help="multistart count")
    p.add_argument("--threads", type=int, default=1, help="worker threads for candidate evaluation")
    p.add_argument("--tol", type=float, default=1e-8, help="equilibrium relative gap tolerance")
    p.add_argument("--alpha-threshold", type=float, default=AbompnConfig.alpha_threshold,
                   help="EV share at or below which driver classes are decomposed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evplan", description="EV charging station placement and pricing")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load a scenario and print a summary")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", help="write a Nguyen-Dupuis style scenario file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("equilibrium", help="solve the driver equilibrium for a fixed design")
    p.add_argument("scenario")
    p.add_argument("--design", help="solution file whose [design] section is used")
    p.add_argument("--mode", choices=MODES[:2], default=None, help="default: joint with a design, ncd_only without")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iterations", type=int, default=5000)
    p.add_argument("--solver", choices=("projected", "frank_wolfe"), default="projected")
    p.add_argument("--allow-nonconverged", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("plan", help="optimise charger placement and prices")
    p.add_argument("scenario")
    p.add_argument("--method", choices=PLAN_METHODS, default="abompn")
    p.add_argument("--budget", type=int, default=None, help="override the scenario budget")
    _add_optimizer_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sweep", help="plan over a range of budgets")
    p.add_argument("scenario")
    p.add_argument("--budgets", required=True, help="range a..b or comma list")
    p.add_argument("--methods", default="joint", help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--replications", type=int, default=5, help="electricity price draws per budget")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG rendering")
    _add_optimizer_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        _error(str(exc))
        return EXIT_INPUT
    except (NotConverged, InfeasibleMode) as exc:
        _error(f"{type(exc).__name__}: {exc}")
        return EXIT_CONVERGENCE
    except NoFeasibleDesign as exc:
        _error(f"NoFeasibleDesign: {exc}")
        return EXIT_INFEASIBLE
    except EvplanError as exc:
        _error(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT
    except OSError as exc:
        _error(f"cannot access {exc.filename}: {exc.strerror}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
