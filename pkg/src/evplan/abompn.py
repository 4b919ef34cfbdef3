"""Two-layer approximation for the joint placement and pricing problem.

Layer 1 handles the coupling between driver classes. When the EV share of
demand is small, NCD routing is solved once without EVs and then frozen
while the EV side is designed. Otherwise the two sides are solved in turn
until the social cost stops changing.

Layer 2 handles integrality: the EV-side design is first searched with
continuous charger counts, the counts are rounded by ``integer_adjust`` and
prices are searched again with the rounded counts fixed. A whole-charger
local search then starts from the rounded design, which also recovers
designs whose rounding leaves no profitable prices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .design import INTEGER, Design
from .errors import NoFeasibleDesign, ValidationError, ZeroDemand
from .network import FlowProfile
from .planner import (
    OptimizerConfig,
    PlannerSolution,
    _Searcher,
    _no_ev,
    _solution,
    _trivial_solution,
    optimize_prices,
    relaxed_search,
    solution_markups,
    solve_ga_ncd,
)
from .rounding import integer_adjust

if TYPE_CHECKING:
    from .scenario import Scenario

__all__ = [
    "AbompnConfig",
    "penetration_rate",
    "integer_adjust",
    "layer2_solve",
    "layer1_solve",
    "abompn_solve",
]


@dataclass(frozen=True)
class AbompnConfig:
    alpha_threshold: float = 0.2
    refine_tol: float = 1e-4
    refine_max_rounds: int = 20
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if not 0.0 <= self.alpha_threshold <= 1.0:
            raise ValidationError("alpha_threshold must lie in [0, 1]", "alpha_threshold")
        if not self.refine_tol > 0:
            raise ValidationError("refine_tol must be positive", "refine_tol")
        if self.refine_max_rounds < 1:
            raise ValidationError("refine_max_rounds must be at least 1", "refine_max_rounds")


def penetration_rate(scenario: "Scenario") -> float:
    """EV share of total demand."""
    net = scenario.network
    ev = math.fsum(net.gamma_ev)
    total = ev + math.fsum(net.gamma_ncd)
    if total <= 0:
        raise ZeroDemand("scenario has no demand")
    return ev / total


def _integer_warm(sol) -> bool:
    return isinstance(sol, PlannerSolution) and sol.feasible and sol.design.is_integral()


# Extra solve allowance, as a share of max_solves, for resuming the
# continuous search when an integer design beats its optimum.
RESTART_SHARE = 0.25
# Integer points the whole-charger search starts from.
POLISH_STARTS = 3


def _round_and_price(scenario, background, cfg, searcher, relaxed, relaxed_sol, warm_starts, trace):
    """Round the relaxed counts and re-optimise prices with them fixed.

    Returns ``(rounded theta, integer incumbent, s_initial, delta)``; the
    theta is infinite when no prices make the rounded placement profitable.
    """
    x_int, s_initial, delta = integer_adjust(relaxed.x, scenario.budget, with_info=True)
    rounded = Design({n: float(v) for n, v in zip(searcher.stations, x_int) if v > 0}, {}, INTEGER)
    markups = solution_markups(scenario, relaxed_sol)
    same_x = [s for s in warm_starts if _integer_warm(s) and s.design.x == rounded.x]
    adjusted_theta = math.inf
    try:
        adjusted, _ = optimize_prices(
            scenario, rounded, background, cfg, markup_starts=[markups], warm_starts=same_x, label="adjusted"
        )
        adjusted_theta = adjusted.theta
        trace.extend(adjusted.trace)
        incumbent = searcher.adopt(adjusted)
    except NoFeasibleDesign:
        incumbent = searcher.evaluate(x_int.astype(float), relaxed.m, relaxed)
    trace.append({"stage": "adjusted", "theta": adjusted_theta})
    return adjusted_theta, incumbent, s_initial, delta


def _integer_phase(searcher, incumbent, warm_starts, solve_cap, trace):
    """Whole-charger and price searches from a few integer points.

    The incumbent is always searched from; the best other seeds among the
    integer points already evaluated, integer warm starts and the rounded
    end point of each continuous run are searched from as well.
    """
    seeds = [incumbent]
    seeds += [c for c in list(searcher.cache.values()) if c.feasible and c.integral]
    seeds += [searcher.adopt(ws) for ws in warm_starts if _integer_warm(ws)]
    budget = searcher.scenario.budget
    for lo in searcher.local_optima:
        if math.isfinite(lo.theta):
            x_int = integer_adjust(lo.x, budget).astype(float)
            seeds.append(searcher.evaluate(x_int, np.where(x_int > 0, lo.m, 0.0), lo))
    distinct: dict[tuple, object] = {}
    for c in sorted(seeds, key=lambda c: c.theta):
        distinct.setdefault(tuple(np.round(c.x).tolist()), c)
    # The rounded point is always polished, even when it has no profitable prices.
    first = tuple(np.round(incumbent.x).tolist())
    picks = [distinct[first]]
    picks += [c for k, c in distinct.items() if c.feasible and k != first][: POLISH_STARTS - 1]
    searcher.limit = max(searcher.limit, solve_cap)
    best = None
    for k, start in enumerate(picks):
        cap = searcher.solves + max((solve_cap - searcher.solves) // (len(picks) - k), 1)
        polished = searcher.integer_polish(start, cap, trace, f"integer:{k}")
        if polished is not start and polished.feasible:
            polished = searcher.pattern_search(polished, False, True, cap, trace, f"integer-prices:{k}")
        if best is None or polished.theta < best.theta:
            best = polished
    return best

def layer2_solve(
    scenario: "Scenario",
    background: FlowProfile | None = None,
    cfg: OptimizerConfig | None = None,
    warm_starts: Sequence = (),
) -> PlannerSolution:
    """Relaxed search, rounding, then a price search with the rounded counts fixed.

    The re-priced rounded design (``info["rounded_theta"]``) seeds a
    whole-charger neighbourhood search together with the best integer points
    already evaluated or supplied in ``warm_starts``. The returned design is
    the result of that search, so it is never worse than the rounded one;
    its value is ``info["adjusted_theta"]`` and its relative excess over
    ``info["relaxed_theta"]`` is ``info["rounding_gap"]``.
    """
    cfg = cfg or OptimizerConfig()
    if _no_ev(scenario):
        sol = _trivial_solution(scenario, background, cfg, "abompn")
        sol.info.update(
            relaxed_theta=sol.theta, adjusted_theta=sol.theta, rounding_gap=0.0, rounded_theta=sol.theta, rounded_gap=0.0
        )
        return sol
    searcher, relaxed, trace = relaxed_search(scenario, background, cfg, warm_starts)
    if not relaxed.feasible:
        raise NoFeasibleDesign(f"no profitable design found within budget {scenario.budget}")
    relaxed_sol = _solution(searcher, relaxed, [], "relaxed")
    trace.append({"stage": "relaxed", "theta": relaxed.theta})

    rounded_theta, incumbent, s_initial, delta = _round_and_price(
        scenario, background, cfg, searcher, relaxed, relaxed_sol, warm_starts, trace
    )
    polished = _integer_phase(searcher, incumbent, warm_starts, cfg.max_solves, trace)

    if polished.feasible and polished.theta < relaxed.theta * (1 - 1e-9):
        # A whole-charger design beat the continuous optimum, so the
        # continuous search stopped early: resume it from there and round again.
        searcher.limit = searcher.solves + int(cfg.max_solves * RESTART_SHARE)
        restarted = searcher.pattern_search(polished, True, True, searcher.limit, trace, "relaxed-restart")
        if restarted.theta < relaxed.theta:
            relaxed = restarted
            relaxed_sol = _solution(searcher, relaxed, [], "relaxed")
            rounded_theta, again, s_initial, delta = _round_and_price(
                scenario, background, cfg, searcher, relaxed, relaxed_sol, warm_starts, trace
            )
            if again.feasible and again.theta < polished.theta:
                searcher.limit = searcher.solves + int(cfg.max_solves * RESTART_SHARE)
                polished = _integer_phase(searcher, again, (), searcher.limit, trace)
    if not polished.feasible:
        raise NoFeasibleDesign("no integer design is profitable")
    best = _solution(searcher, polished, [], "abompn")
    best.design = Design(best.design.x, best.design.y, INTEGER)
    theta = best.theta

    # Any integer design is also a relaxed one, so it bounds the relaxed optimum.
    relaxed_theta = min(relaxed.theta, theta, rounded_theta)
    trace.append({"stage": "integer", "theta": theta})
    info = dict(best.info)
    info.update(
        relaxed_theta=relaxed_theta,
        relaxed_design=relaxed_sol.design.stations_label(),
        adjusted_theta=theta,
        rounding_gap=(theta - relaxed_theta) / relaxed_theta if relaxed_theta else 0.0,
        rounded_theta=rounded_theta,
        rounded_gap=(rounded_theta - relaxed_theta) / relaxed_theta if relaxed_theta else 0.0,
        integer_theta=theta,
        s_initial=s_initial,
        delta=delta,
        solves=searcher.solves,
    )
    return PlannerSolution(best.design, best.profile, best.theta, best.evaluation, trace, "abompn", info)


def layer1_solve(
    scenario: "Scenario", cfg: AbompnConfig | None = None, warm_starts: Sequence = ()
) -> PlannerSolution:
    """Decompose driver classes at low EV penetration, otherwise refine them in turn."""
    cfg = cfg or AbompnConfig()
    opt = cfg.optimizer
    alpha = penetration_rate(scenario)
    if _no_ev(scenario):
        sol = _trivial_solution(scenario, None, opt, "abompn")
        sol.info.update(alpha=alpha, layer1="no-ev", relaxed_theta=sol.theta, adjusted_theta=sol.theta, rounding_gap=0.0,
                        rounded_theta=sol.theta, rounded_gap=0.0)
        return sol

    background = solve_ga_ncd(scenario, opt.solver)
    if alpha <= cfg.alpha_threshold:
        sol = layer2_solve(scenario, background, opt, warm_starts)
        sol.trace.insert(0, {"stage": "decomposition", "alpha": alpha})
        sol.info.update(alpha=alpha, layer1="decomposition")
        sol.decomposed_q0 = background.q0
        return sol

    best: PlannerSolution | None = None
    thetas: list[float] = []
    trace: list[dict] = [{"stage": "refinement", "alpha": alpha}]
    converged = False
    starts = list(warm_starts)
    for rnd in range(cfg.refine_max_rounds):
        sol = layer2_solve(scenario, background, opt, starts)
        thetas.append(sol.theta)
        trace.append({"stage": f"refine:{rnd}", "theta": sol.theta})
        if best is not None and sol.theta > best.theta:
            # Alternation moved uphill; keep the better iterate.
            converged = True
            break
        prev = best
        best = sol
        best.decomposed_q0 = background.q0
        if prev is not None and abs(prev.theta - sol.theta) <= cfg.refine_tol * abs(prev.theta):
            converged = True
            break
        background = solve_ga_ncd(scenario, opt.solver, background=sol.profile)
        starts = [sol] + list(warm_starts)
    best.trace = trace + best.trace
    best.info.update(alpha=alpha, layer1="refinement", refine_thetas=thetas, refine_converged=converged)
    return best


def abompn_solve(
    scenario: "Scenario", cfg: AbompnConfig | None = None, warm_starts: Sequence[PlannerSolution] = ()
) -> PlannerSolution:
    """Full pipeline; the returned flows are the joint equilibrium of both classes.

    The Layer 1 design is re-priced against the joint equilibrium (starting
    from its own markups). Feasible joint-mode ``warm_starts`` are kept as
    candidates, so the result is never worse than any of them.
    """
    cfg = cfg or AbompnConfig()
    opt = cfg.optimizer
    joint_warm = [
        s for s in warm_starts
        if _integer_warm(s) and s.evaluation.eq.mode == "joint" and s.design.total_chargers() <= scenario.budget
    ]
    try:
        layer1 = layer1_solve(scenario, cfg, warm_starts)
    except NoFeasibleDesign:
        if not joint_warm:
            raise
        best = min(joint_warm, key=lambda s: s.theta)
        return PlannerSolution(best.design, best.profile, best.theta, best.evaluation, list(best.trace), "abompn", dict(best.info))
    if layer1.info.get("layer1") == "no-ev":
        layer1.method = "abompn"
        return layer1

    candidates: list[tuple[float, int, PlannerSolution]] = []
    try:
        final, _ = optimize_prices(
            scenario, layer1.design, None, opt, markup_starts=[solution_markups(scenario, layer1)], label="joint-prices"
        )
        candidates.append((final.theta, 0, final))
    except NoFeasibleDesign:
        pass
    for k, ws in enumerate(joint_warm):
        candidates.append((ws.theta, k + 1, ws))
    if not candidates:
        raise NoFeasibleDesign("the planned design is not profitable under the joint equilibrium")
    _, pick, best = min(candidates, key=lambda c: (c[0], c[1]))
    info = dict(layer1.info)
    info["decomposed_theta"] = layer1.theta
    info["source"] = "pipeline" if pick == 0 else f"warm_start:{pick - 1}"
    trace = layer1.trace + (best.trace if pick == 0 else [{"stage": "warm-start", "theta": best.theta}])

    # The decomposed ranking can differ from the joint one near the optimum;
    # a whole-charger search under the joint equilibrium settles the last moves.
    searcher = _Searcher(scenario, None, opt, INTEGER)
    start = searcher.adopt(best)
    cap = int(opt.max_solves * RESTART_SHARE)
    searcher.limit = cap
    polished = searcher.integer_polish(start, cap, trace, "joint-integer")
    if polished is not start and polished.feasible:
        polished = searcher.pattern_search(polished, False, True, cap, trace, "joint-integer-prices")
    if polished.feasible and polished.theta < best.theta:
        best = _solution(searcher, polished, [], "abompn")
        info["source"] = "joint-search"
    info["joint_solves"] = searcher.solves
    trace.append({"stage": "final", "theta": best.theta})
    return PlannerSolution(
        Design(best.design.x, best.design.y, INTEGER),
        best.profile,
        best.theta,
        best.evaluation,
        trace,
        "abompn",
        info,
        layer1.decomposed_q0,
    )
