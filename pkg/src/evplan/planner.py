"""The planner's bilevel problem and its outer optimiser.

A design is scored by solving the lower-level equilibrium and computing the
social cost. Candidate designs go through a price repair step before they
are scored: every open station is priced at or above its profitability
floor ``pi * (e + x * T / load)`` (re-solving the equilibrium after each
price change) and stations left without load are closed, which frees their
chargers.

Prices are searched as markups ``m >= 0`` over that floor, i.e. the
realised price solves ``y = floor(load(y)) * (1 + m)``. The outer optimiser
is a derivative-free projected pattern search over the charger vector (kept
on ``{x >= 0, sum(x) <= B}``) and the markups, restarted from several seeded
points. The same machinery, with some
coordinates frozen, gives the price-only and placement-only baselines.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .design import INTEGER, RELAXED, Design
from .equilibrium import (
    EV_FIXED,
    JOINT,
    NCD_ONLY,
    EquilibriumResult,
    SolverConfig,
    solve_equilibrium,
)
from .errors import InfeasibleMode, NoFeasibleDesign, ZeroLoad
from .network import FlowProfile
from .rounding import integer_adjust

if TYPE_CHECKING:
    from .scenario import Scenario

SLACK_TOL = 1e-6
# Prices are lifted slightly above the floor so rounding never leaves a
# station a hair short of break-even.
FLOOR_MARGIN = 1e-9
# Polls evaluated together before the pattern search may move.
POLL_BATCH = 4


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    max_solves: int = 2000
    n_starts: int = 8
    x_step: float | None = None  # default max(1, B / 4)
    markup_step: float = 0.05  # relative price markup over the floor
    min_x_step: float = 0.02
    min_markup_step: float = 0.002
    max_repair_rounds: int = 40
    threads: int = 1
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(tol=1e-8))


@dataclass
class DesignEvaluation:
    theta: float
    eq: EquilibriumResult
    budget_ok: bool
    profit_slack: dict[int, float]
    feasible: bool
    loads: dict[int, float] = field(default_factory=dict)

    @property
    def min_slack(self) -> float:
        return min(self.profit_slack.values(), default=0.0)


@dataclass
class PlannerSolution:
    design: Design
    profile: FlowProfile
    theta: float
    evaluation: DesignEvaluation
    trace: list[dict] = field(default_factory=list)
    method: str = "joint"
    info: dict = field(default_factory=dict)
    # NCD shares of the decomposed solve, when the design came from one.
    decomposed_q0: list[np.ndarray] | None = None

    @property
    def feasible(self) -> bool:
        return self.evaluation.feasible


def price_floor(x_i: float, e_i: float, t_i: float, load_i: float, pi: float) -> float:
    """Smallest price at which a station with ``load_i`` customers breaks even with margin ``pi``."""
    if load_i <= 0:
        raise ZeroLoad("a station with chargers and no load cannot be profitable")
    return pi * (e_i + x_i * t_i / load_i)


def _station_loads(scenario, profile: FlowProfile, mode: str) -> np.ndarray:
    net = scenario.network
    if mode == NCD_ONLY:
        return np.zeros(len(net.nodes))
    q = np.concatenate(profile.q) if profile.q else np.zeros(0)
    return np.bincount(
        net.path_station, weights=net.gamma_ev[net.path_od] * q, minlength=len(net.nodes)
    )


def _evaluation(scenario, design: Design, eq: EquilibriumResult, mode: str) -> DesignEvaluation:
    nodes = scenario.nodes
    load = _station_loads(scenario, eq.profile, mode)
    x, y = design.arrays(nodes)
    slack = {}
    for i, n in enumerate(nodes):
        if x[i] > 0:
            revenue = load[i] * y[i]
            cost = scenario.pi * (load[i] * scenario.e[n] + x[i] * scenario.t[n])
            slack[n] = float(revenue - cost)
    budget_ok = design.total_chargers() <= scenario.budget
    feasible = budget_ok and eq.converged and min(slack.values(), default=0.0) >= -SLACK_TOL
    return DesignEvaluation(
        theta=eq.theta,
        eq=eq,
        budget_ok=budget_ok,
        profit_slack=slack,
        feasible=feasible,
        loads={n: float(load[i]) for i, n in enumerate(nodes) if x[i] > 0},
    )


def evaluate_design(
    scenario: "Scenario",
    design: Design,
    background: FlowProfile | None = None,
    solver: SolverConfig | None = None,
    initial: FlowProfile | None = None,
) -> DesignEvaluation:
    """Score a design as given (no price repair).

    Without ``background`` the lower level is the joint equilibrium of both
    driver classes; with it, NCD shares are frozen at ``background.q0``.
    """
    mode = EV_FIXED if background is not None else JOINT
    if scenario.network.gamma_ev.sum() == 0 and background is None:
        mode = JOINT
    eq = solve_equilibrium(scenario, design, mode, solver, background=background, initial=initial)
    return _evaluation(scenario, design, eq, mode)


def solve_ga_ncd(scenario: "Scenario", solver: SolverConfig | None = None, background=None) -> FlowProfile:
    """NCD equilibrium with no EVs on the road (or with EV shares frozen at ``background``)."""
    from .equilibrium import NCD_FIXED

    if background is None:
        eq = solve_equilibrium(scenario, Design.empty(), NCD_ONLY, solver)
    else:
        eq = solve_equilibrium(scenario, _open_all_design(scenario, background), NCD_FIXED, solver, background=background)
    return eq.profile


def _open_all_design(scenario, profile):
    # NCD_FIXED mode only needs station loads to exist; costs of EVs are not optimised.
    return Design({n: 1.0 for n in scenario.usable_stations()}, {}, RELAXED)


# --------------------------------------------------------------------------
# Outer search machinery


@dataclass
class _Candidate:
    x: np.ndarray  # chargers over searcher.stations
    m: np.ndarray  # markups over the profitability floor
    y: np.ndarray  # realised prices
    design: Design
    evaluation: DesignEvaluation | None
    theta: float  # inf when infeasible

    @property
    def feasible(self) -> bool:
        return self.evaluation is not None and self.evaluation.feasible

    @property
    def profile(self):
        return None if self.evaluation is None else self.evaluation.eq.profile

    @property
    def integral(self) -> bool:
        return bool(np.all(self.x == np.round(self.x)))


def project_capped_simplex(v: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) <= cap}``."""
    v = np.asarray(v, dtype=float)
    w = np.maximum(v, 0.0)
    if math.fsum(w) <= cap:
        return w
    if cap <= 0:
        return np.zeros_like(w)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - cap
    k = np.arange(1, len(u) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    w = np.maximum(v - tau, 0.0)
    # The budget must hold exactly, not to within a few ulps.
    while math.fsum(w) > cap:
        w = np.nextafter(w, 0.0)
    return w


def _key(x, m):
    return tuple(np.asarray(x, float).tolist()), tuple(np.asarray(m, float).tolist())


class _Searcher:
    """Evaluates (x, markup) proposals with price repair and runs pattern searches."""

    def __init__(self, scenario, background, cfg: OptimizerConfig, mode: str):
        self.scenario = scenario
        self.background = background
        self.cfg = cfg
        self.mode = mode  # design mode for produced designs
        self.stations = scenario.usable_stations()
        self.node_pos = [scenario.network.node_index[n] for n in self.stations]
        self.e = np.array([scenario.e[n] for n in self.stations])
        self.t = np.array([scenario.t[n] for n in self.stations])
        self.solves = 0
        self.evaluations = 0
        # Solve allowance of the current phase; the continuous search leaves
        # a share of the total for the integer phase.
        self.limit = cfg.max_solves
        self.cache: dict[tuple, _Candidate] = {}
        # End points of every multistart run, in run order.
        self.local_optima: list[_Candidate] = []
        self.eq_mode = EV_FIXED if background is not None else JOINT
        total_ev = float(scenario.network.gamma_ev.sum())
        self.load_tol = 1e-7 * max(total_ev, 1.0)
        w = scenario.weights
        fixed = w.lambda3 * scenario.pi * self.t
        with np.errstate(divide="ignore"):
            # Charger count minimising lambda3*pi*T*x + lambda2*load^2/(x*mu) per unit load.
            self.size_per_load = np.where(fixed > 0, np.sqrt(w.lambda2 / (np.maximum(fixed, 1e-300) * scenario.mu)), np.inf)

    @property
    def exhausted(self) -> bool:
        return self.solves >= self.limit

    def _design(self, x, y) -> Design:
        xs = {n: float(v) for n, v in zip(self.stations, x) if v > 0}
        ys = {n: float(y[i]) for i, n in enumerate(self.stations) if x[i] > 0}
        return Design(xs, ys, self.mode)

    def evaluate(self, x, m, warm: _Candidate | None = None) -> _Candidate:
        return self.evaluate_many([(x, m)], warm)[0]

    def evaluate_many(self, items, warm: _Candidate | None = None) -> list[_Candidate]:
        """Evaluate ``(x, m)`` pairs, possibly in parallel.

        Workers only run the pure repair; cache and solve counters are
        updated afterwards in input order, so results do not depend on the
        thread count.
        """
        keys = [_key(x, m) for x, m in items]
        todo, seen = [], set()
        for k, key in enumerate(keys):
            if key not in self.cache and key not in seen:
                seen.add(key)
                todo.append(k)

        def run(k):
            x, m = items[k]
            return self._repair(np.array(x, float), np.array(m, float), warm)

        if self.cfg.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.threads) as pool:
                results = list(pool.map(run, todo))
        else:
            results = [run(k) for k in todo]
        for k, (cand, used) in zip(todo, results):
            self.cache[keys[k]] = cand
            self.solves += used
            self.evaluations += 1
        return [self.cache[key] for key in keys]

    def adopt(self, sol: "PlannerSolution") -> _Candidate:
        """Take an already-evaluated solution as a candidate, keeping its exact numbers."""
        x = np.array([sol.design.x.get(n, 0.0) for n in self.stations])
        y = np.array([sol.design.y.get(n, 0.0) for n in self.stations])
        ev = sol.evaluation
        same_stations = all(n in self.stations for n in sol.design.open_nodes())
        if ev.eq.mode != self.eq_mode or not same_stations:
            return self.evaluate(x, np.zeros_like(x))
        load = np.array([ev.loads.get(n, 0.0) for n in self.stations])
        floor = self.scenario.pi * (self.e + x * self.t / np.where(load > 0, load, 1.0))
        m = np.where(x > 0, np.maximum(y / floor - 1.0, 0.0), 0.0)
        m[m < 1e-6] = 0.0
        design = Design(sol.design.x, sol.design.y, self.mode if sol.design.is_integral() else RELAXED)
        cand = _Candidate(x, m, y, design, ev, ev.theta if ev.feasible else math.inf)
        self.cache.setdefault(_key(x, m), cand)
        return cand

    def _repair(self, x, m, warm: _Candidate | None) -> tuple[_Candidate, int]:
        """Fixed point ``y = floor(load(y)) * (1 + m)`` with dead stations closed.

        Returns the candidate and the number of equilibrium solves used.
        """
        sc = self.scenario
        used = 0
        m = np.where(x > 0, m, 0.0)
        y = np.zeros_like(x)
        if warm is not None:
            y = np.where(warm.x > 0, warm.y, 0.0)
        fresh = (x > 0) & (y <= 0)
        y = np.where(fresh, sc.pi * (self.e + self.t) * (1 + m), y)
        y = np.where(x > 0, y, 0.0)
        warm_profile = warm.profile if warm is not None else None
        prev_y = prev_target = None
        evaluation = None
        design = self._design(x, y)
        for _ in range(self.cfg.max_repair_rounds):
            design = self._design(x, y)
            try:
                eq = solve_equilibrium(
                    sc, design, self.eq_mode, self.cfg.solver, background=self.background, initial=warm_profile
                )
            except InfeasibleMode:
                return _Candidate(x, m, y, design, None, math.inf), used
            used += 1
            warm_profile = eq.profile
            if not eq.converged:
                break
            load = _station_loads(sc, eq.profile, self.eq_mode)[self.node_pos]
            open_ = x > 0
            dead = open_ & (load < self.load_tol)
            if dead.any():
                x = np.where(dead, 0.0, x)
                y = np.where(dead, 0.0, y)
                m = np.where(dead, 0.0, m)
                prev_y = prev_target = None
                continue
            target = np.where(open_, sc.pi * (self.e + x * self.t / np.where(open_, load, 1.0)) * (1 + m), 0.0)
            slack = load * y - sc.pi * (load * self.e + x * self.t)
            resid = target - y
            if np.all(np.abs(resid) <= 1e-9 * np.maximum(target, 1.0)) and np.all(slack[open_] >= -1e-7):
                evaluation = _evaluation(sc, design, eq, self.eq_mode)
                break
            step = np.ones_like(y)
            if prev_y is not None:
                dy = y - prev_y
                ok = np.abs(dy) > 1e-12
                slope = np.where(ok, (target - prev_target) / np.where(ok, dy, 1.0), 0.0)
                step = np.clip(1.0 / np.maximum(1.0 - slope, 1e-3), 0.2, 5.0)
            prev_y, prev_target = y, target
            y = np.where(open_, np.maximum(y + step * resid, sc.pi * self.e), 0.0)
        if evaluation is None or not evaluation.feasible:
            return _Candidate(x, m, y, design, evaluation, math.inf), used
        return _Candidate(x, m, y, design, evaluation, evaluation.theta), used

    def polls(self, cur: _Candidate, sx: float, sm: float, vary_x: bool, vary_m: bool):
        budget = self.scenario.budget
        out = []
        if vary_x and cur.evaluation is not None:
            load = np.array([cur.evaluation.loads.get(n, 0.0) for n in self.stations])
            if load.any():
                sized = np.where(load > 0, np.minimum(self.size_per_load * load, budget), 0.0)
                out.append((project_capped_simplex(sized, budget), cur.m.copy()))
                # Close one station and hand its chargers to the others by load.
                open_ = np.flatnonzero(cur.x > 0)
                if len(open_) > 1:
                    for i in open_:
                        rest = load.copy()
                        rest[i] = 0.0
                        if rest.sum() <= 0:
                            continue
                        closed = np.where(rest > 0, cur.x + cur.x[i] * rest / rest.sum(), 0.0)
                        closed[i] = 0.0
                        out.append((project_capped_simplex(closed, budget), np.where(closed > 0, cur.m, 0.0)))
        for i in range(len(self.stations)):
            if vary_x and sx > 0:
                up = cur.x.copy()
                up[i] += sx
                out.append((project_capped_simplex(up, budget), cur.m.copy()))
                if cur.x[i] > 0:
                    down = cur.x.copy()
                    down[i] = max(0.0, down[i] - sx)
                    out.append((down, cur.m.copy()))
            if vary_m and sm > 0 and cur.x[i] > 0:
                for sign in (1.0, -1.0):
                    mm = cur.m.copy()
                    mm[i] = max(0.0, mm[i] + sign * sm)
                    out.append((cur.x.copy(), mm))
        seen = {_key(cur.x, cur.m)}
        unique = []
        for x, m in out:
            k = _key(x, m)
            if k not in seen:
                seen.add(k)
                unique.append((x, m))
        return unique

    def pattern_search(self, start, vary_x, vary_m, solve_cap, trace, label) -> _Candidate:
        cfg = self.cfg
        budget = self.scenario.budget
        sx = (cfg.x_step if cfg.x_step is not None else max(1.0, budget / 4.0)) if vary_x else 0.0
        sm = cfg.markup_step if vary_m else 0.0
        cur = start
        it = 0
        while (vary_x and sx >= cfg.min_x_step) or (vary_m and sm >= cfg.min_markup_step):
            if self.solves >= solve_cap or self.exhausted:
                break
            polls = self.polls(cur, sx, sm, vary_x, vary_m)
            best = cur
            # Fixed-size batches keep the path independent of the thread count.
            for k in range(0, len(polls), POLL_BATCH):
                cands = self.evaluate_many(polls[k : k + POLL_BATCH], cur)
                for c in cands:  # first strictly better candidate in poll order wins ties
                    if c.theta < best.theta - 1e-12 * (abs(best.theta) if math.isfinite(best.theta) else 1.0):
                        best = c
                if best is not cur or self.solves >= solve_cap or self.exhausted:
                    break
            it += 1
            if best is not cur:
                cur = best
            else:
                sx *= 0.5
                sm *= 0.5
        trace.append({"stage": label, "theta": cur.theta, "iterations": it, "solves": self.solves})
        return cur

    def integer_polish(self, start: _Candidate, solve_cap: int, trace, label) -> _Candidate:
        """Best-improvement local search over whole chargers.

        Moves one charger or a whole station between nodes, or adds one
        charger while budget remains; markups stay as they are (new stations start at the floor). Works
        from infeasible starts too, taking the first feasible neighbour.
        """
        budget = self.scenario.budget
        cur = start
        rounds = 0
        while self.solves < solve_cap and not self.exhausted:
            x0 = np.round(cur.x)
            moves = []
            total = x0.sum()
            for j in range(len(x0)):
                if total + 1 <= budget:
                    up = x0.copy()
                    up[j] += 1
                    moves.append(up)
            for i in np.nonzero(x0 > 0)[0]:
                for j in range(len(x0)):
                    if j != i:
                        mv = x0.copy()
                        mv[i] -= 1
                        mv[j] += 1
                        moves.append(mv)
                        if x0[i] > 1:
                            # Relocate the whole station.
                            whole = x0.copy()
                            whole[j] += whole[i]
                            whole[i] = 0
                            moves.append(whole)
            warm = cur if cur.feasible else None
            cands = self.evaluate_many([(mv, np.where(cur.x > 0, cur.m, 0.0)) for mv in moves], warm)
            best = cur
            for c in cands:
                if c.theta < best.theta - 1e-12 * (abs(best.theta) if math.isfinite(best.theta) else 1.0):
                    best = c
            rounds += 1
            if best is cur:
                break
            cur = best
        trace.append({"stage": label, "theta": cur.theta, "iterations": rounds, "solves": self.solves})
        return cur

    def multistart(self, starts: Sequence[_Candidate], vary_x, vary_m, trace, label) -> _Candidate:
        order = sorted(range(len(starts)), key=lambda k: (starts[k].theta, k))
        best = min(starts, key=lambda c: c.theta) if starts else None
        remaining = len(order)
        for k in order:
            if self.exhausted:
                break
            share = (self.limit - self.solves) // max(remaining, 1)
            remaining -= 1
            res = self.pattern_search(starts[k], vary_x, vary_m, self.solves + max(share, 1), trace, f"{label}:start{k}")
            self.local_optima.append(res)
            if res.theta < best.theta:
                best = res
        return best

    def start_candidates(self, warm_starts, rng, n_random, with_markups=True) -> list[_Candidate]:
        out = []
        for ws in warm_starts:
            if isinstance(ws, PlannerSolution):
                cand = self.adopt(ws)
                if not with_markups and np.any(cand.m > 0):
                    cand = self.evaluate(cand.x, np.zeros_like(cand.x))
                out.append(cand)
            else:
                x = np.array([ws.x.get(n, 0.0) for n in self.stations])
                out.append(self.evaluate(project_capped_simplex(x, self.scenario.budget), np.zeros_like(x)))
        for x in _random_placements(len(self.stations), self.scenario.budget, n_random, rng):
            out.append(self.evaluate(x, np.zeros_like(x)))
        return out


def _random_placements(m: int, budget: float, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    if m == 0 or budget <= 0:
        return [np.zeros(m)]
    out = [np.full(m, budget / m)]
    for _ in range(max(n - 1, 0)):
        k = int(rng.integers(1, min(m, 5) + 1))
        chosen = rng.choice(m, size=k, replace=False)
        x = np.zeros(m)
        x[chosen] = rng.dirichlet(np.ones(k)) * budget * rng.uniform(0.6, 1.0)
        out.append(project_capped_simplex(x, budget))
    return out


def _solution(searcher: _Searcher, cand: _Candidate, trace, method, info=None) -> PlannerSolution:
    ev = cand.evaluation
    info = dict(info or {})
    info.setdefault("evaluations", searcher.evaluations)
    info.setdefault("solves", searcher.solves)
    return PlannerSolution(
        design=cand.design.normalized(),
        profile=ev.eq.profile,
        theta=ev.theta,
        evaluation=ev,
        trace=trace,
        method=method,
        info=info,
    )


def _no_ev(scenario) -> bool:
    return float(scenario.network.gamma_ev.sum()) == 0.0


def _trivial_solution(scenario, background, cfg, method, mode=INTEGER) -> PlannerSolution:
    design = Design.empty(mode)
    ev = evaluate_design(scenario, design, background, cfg.solver)
    if not ev.feasible:
        raise NoFeasibleDesign("equilibrium did not converge for the empty design")
    return PlannerSolution(design, ev.eq.profile, ev.theta, ev, [{"stage": "no-ev", "theta": ev.theta}], method)


INTEGER_SHARE = 0.25


def relaxed_search(
    scenario, background=None, cfg=None, warm_starts=(), vary_m=True, label="relaxed", reserve=INTEGER_SHARE
):
    """Run the continuous search; returns ``(searcher, best candidate, trace)``.

    ``reserve`` is the fraction of the solve allowance kept back for a later
    integer phase on the same searcher.
    """
    cfg = cfg or OptimizerConfig()
    searcher = _Searcher(scenario, background, cfg, RELAXED)
    searcher.limit = int(cfg.max_solves * (1.0 - reserve))
    rng = np.random.default_rng(cfg.seed)
    starts = searcher.start_candidates(warm_starts, rng, cfg.n_starts, with_markups=vary_m)
    trace: list[dict] = []
    best = searcher.multistart(starts, True, vary_m, trace, label)
    return searcher, best, trace


def solve_relaxed_gaev(
    scenario: "Scenario",
    background: FlowProfile | None = None,
    cfg: OptimizerConfig | None = None,
    warm_starts: Sequence = (),
) -> PlannerSolution:
    """Continuous (x, y) search for the EV-side design.

    ``background`` fixes NCD shares (decomposed mode); without it the joint
    equilibrium is used. ``warm_starts`` (designs or solutions) join the
    seeded starting points, so the result is never worse than any of them.
    """
    cfg = cfg or OptimizerConfig()
    if _no_ev(scenario):
        return _trivial_solution(scenario, background, cfg, "relaxed", RELAXED)
    searcher, best, trace = relaxed_search(scenario, background, cfg, warm_starts, reserve=0.0)
    if not best.feasible:
        raise NoFeasibleDesign(f"no profitable design found within budget {scenario.budget}")
    return _solution(searcher, best, trace, "relaxed")


def optimize_prices(
    scenario: "Scenario",
    design: Design,
    background: FlowProfile | None = None,
    cfg: OptimizerConfig | None = None,
    markup_starts: Sequence[dict] = (),
    warm_starts: Sequence["PlannerSolution"] = (),
    label: str = "prices",
) -> tuple[PlannerSolution, list[_Candidate]]:
    """Price search with charger counts frozen at ``design.x``.

    Returns the best solution and every feasible candidate evaluated.
    """
    cfg = cfg or OptimizerConfig()
    searcher = _Searcher(scenario, background, cfg, design.mode)
    x = project_capped_simplex(np.array([design.x.get(n, 0.0) for n in searcher.stations]), scenario.budget)
    starts = [searcher.evaluate(x, np.zeros_like(x))]
    for ms in markup_starts:
        starts.append(searcher.evaluate(x, np.array([ms.get(n, 0.0) for n in searcher.stations])))
    starts += [searcher.adopt(s) for s in warm_starts]
    trace: list[dict] = []
    best = searcher.multistart(starts, False, True, trace, label)
    if best is None or not best.feasible:
        raise NoFeasibleDesign("no profitable prices exist for the given placement")
    feasible = [c for c in searcher.cache.values() if c.feasible]
    return _solution(searcher, best, trace, label), feasible


def uniform_placement(scenario: "Scenario") -> Design:
    """floor(B / |eligible|) chargers per eligible node, remainder by ascending node id."""
    eligible = sorted(scenario.eligible)
    if not eligible:
        return Design.empty()
    base, rem = divmod(scenario.budget, len(eligible))
    x = {n: float(base + (1 if k < rem else 0)) for k, n in enumerate(eligible)}
    return Design({n: v for n, v in x.items() if v > 0}, {}, INTEGER)


def baseline_price_only(
    scenario: "Scenario", background: FlowProfile | None = None, cfg: OptimizerConfig | None = None
) -> PlannerSolution:
    """Uniform placement, optimised prices."""
    cfg = cfg or OptimizerConfig()
    if _no_ev(scenario):
        sol = _trivial_solution(scenario, background, cfg, "price_only")
        return sol
    placement = uniform_placement(scenario)
    sol, _ = optimize_prices(scenario, placement, background, cfg, label="price-only")
    sol.method = "price_only"
    # Stations that attract no load are closed by the repair step; keep the
    # placement that was imposed for reporting.
    sol.info["uniform_placement"] = ";".join(f"{n}:{int(v)}" for n, v in sorted(placement.x.items()))
    return sol


def baseline_placement_only(
    scenario: "Scenario",
    background: FlowProfile | None = None,
    cfg: OptimizerConfig | None = None,
    warm_starts: Sequence = (),
) -> PlannerSolution:
    """Optimised integer placement with prices pinned at the profitability floor.

    The floor is recomputed at each candidate's equilibrium load.
    """
    cfg = cfg or OptimizerConfig()
    if _no_ev(scenario):
        return _trivial_solution(scenario, background, cfg, "placement_only")
    searcher, relaxed, trace = relaxed_search(scenario, background, cfg, warm_starts, False, "placement-relaxed")
    if not relaxed.feasible:
        raise NoFeasibleDesign(f"no profitable placement found within budget {scenario.budget}")
    x_int = integer_adjust(relaxed.x, scenario.budget).astype(float)
    rounded = searcher.evaluate(x_int, np.zeros_like(x_int), relaxed)
    trace.append({"stage": "placement-rounded", "theta": rounded.theta})
    best = rounded
    for cand in list(searcher.cache.values()):
        if cand.feasible and cand.integral and not np.any(cand.m > 0) and cand.theta < best.theta:
            best = cand
    searcher.limit = cfg.max_solves
    best = searcher.integer_polish(best, cfg.max_solves, trace, "placement-integer")
    if not best.feasible:
        raise NoFeasibleDesign("no integer placement is profitable at floor prices")
    best = replace(best, design=Design(best.design.x, best.design.y, INTEGER))
    return _solution(searcher, best, trace, "placement_only", {"relaxed_theta": relaxed.theta})


def solution_markups(scenario: "Scenario", sol: PlannerSolution) -> dict[int, float]:
    """Relative markup of each open station's price over its floor at the solution's loads."""
    out = {}
    for n in sol.design.open_nodes():
        load = sol.evaluation.loads.get(n, 0.0)
        if load <= 0:
            continue
        floor = price_floor(sol.design.x[n], scenario.e[n], scenario.t[n], load, scenario.pi)
        m = sol.design.y.get(n, 0.0) / floor - 1.0
        out[n] = m if m >= 1e-6 else 0.0
    return out
