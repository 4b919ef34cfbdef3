"""Wardrop equilibria of the coupled road/charging congestion game.

The equilibrium for a fixed design minimises a convex quadratic potential
over the product of per-O-D strategy simplices (one simplex per O-D pair and
driver class). In strategy-flow space the costs are affine, ``c = Q h + c0``,
so every quantity the solver needs is a matrix-vector product.

Two search directions are available, both followed by an exact line search:

``"frank_wolfe"``
    all-or-nothing: each class's whole demand moves toward its cheapest
    strategy.
``"projected"`` (default)
    pairwise Frank-Wolfe with Newton-scaled transfers: every used strategy
    sheds ``min(flow, excess_cost / curvature)`` onto its block's cheapest
    strategy. Strategies can be emptied exactly, which gives the linear
    convergence the planner relies on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .costs import CostKernel
from .design import Design
from .errors import InfeasibleMode, NotConverged, TooLarge, ValidationError
from .network import FlowProfile

if TYPE_CHECKING:
    from .scenario import Scenario

JOINT = "joint"
NCD_ONLY = "ncd_only"
EV_FIXED = "ev_with_fixed_background"
NCD_FIXED = "ncd_with_fixed_background"
MODES = (JOINT, NCD_ONLY, EV_FIXED, NCD_FIXED)

EV, NCD = "ev", "ncd"
USED_SHARE = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_iterations: int = 5000
    method: str = "projected"
    check_monotone: bool = False


@dataclass
class EquilibriumResult:
    profile: FlowProfile
    gap: float
    iterations: int
    potential_value: float
    converged: bool
    theta: float = 0.0
    mode: str = JOINT


def _link_gram(network) -> np.ndarray:
    """``M^T diag(d/c) M`` over [EV paths, NCD routes]; cached per network."""
    gram = getattr(network, "_link_gram", None)
    if gram is None:
        m = np.hstack([network.path_links, network.route_links])
        gram = (m.T * (network.d / network.c)) @ m
        network._link_gram = gram
    return gram


class _Game:
    """Affine cost map and block layout for one (scenario, design, mode)."""

    def __init__(self, scenario, design, mode, background):
        if mode not in MODES:
            raise ValidationError(f"unknown equilibrium mode {mode!r}", "mode")
        net = scenario.network
        self.net = net
        self.mode = mode
        kern = CostKernel(scenario, design)
        self.kernel = kern
        n_p, n_r = net.n_paths, net.n_routes
        self.n_p = n_p

        s = np.hstack([net.station_paths, np.zeros((len(net.nodes), n_r))])
        self.q_mat = kern.lam1 * _link_gram(net) + kern.lam2 * ((s.T * kern.inv_cap) @ s)
        self.c0 = np.concatenate([kern.fee, np.zeros(n_r)])
        self.allowed = np.concatenate([kern.allowed, np.ones(n_r, bool)])

        ev_demand = net.gamma_ev if mode != NCD_ONLY else np.zeros_like(net.gamma_ev)
        self.ev_demand = ev_demand
        free_ev = mode in (JOINT, EV_FIXED)
        free_ncd = mode in (JOINT, NCD_ONLY, NCD_FIXED)

        if mode in (EV_FIXED, NCD_FIXED) and background is None:
            raise ValidationError(f"mode {mode} needs a background profile", "background")

        # Frozen classes contribute fixed flows.
        self.h = np.zeros(n_p + n_r)
        if mode == NCD_FIXED:
            self.h[:n_p] = ev_demand[net.path_od] * np.concatenate(background.q)
        if mode == EV_FIXED:
            self.h[n_p:] = net.gamma_ncd[net.route_od] * np.concatenate(background.q0)

        blocks = []  # (class, od, global index array, demand)
        for w in range(len(net.od_pairs)):
            if free_ev and ev_demand[w] > 0:
                sl = net.path_slices[w]
                idx = np.arange(sl.start, sl.stop)
                if not self.allowed[idx].any():
                    od = net.od_pairs[w]
                    raise InfeasibleMode(
                        f"O-D ({od.origin},{od.dest}) has EV demand but no open charging station"
                    )
                blocks.append((EV, w, idx, float(ev_demand[w])))
            if free_ncd and net.gamma_ncd[w] > 0:
                sl = net.route_slices[w]
                blocks.append((NCD, w, n_p + np.arange(sl.start, sl.stop), float(net.gamma_ncd[w])))
        self.blocks = blocks
        width = max((len(b[2]) for b in blocks), default=1)
        self.layout = np.full((len(blocks), width), -1, dtype=int)
        for k, b in enumerate(blocks):
            self.layout[k, : len(b[2])] = b[2]
        valid = self.layout >= 0
        self.valid = valid & self.allowed[np.where(valid, self.layout, 0)]
        self.safe = np.where(valid, self.layout, 0)
        self.demand = np.array([b[3] for b in blocks], dtype=float)

    def start(self, initial: FlowProfile | None) -> None:
        net = self.net
        for k, (cls, w, idx, dem) in enumerate(self.blocks):
            mask = self.valid[k, : len(idx)]
            shares = np.zeros(len(idx))
            if initial is not None:
                src = initial.q[w] if cls == EV else initial.q0[w]
                shares = np.where(mask, np.clip(np.asarray(src, float), 0, None), 0.0)
            if shares.sum() <= 0:
                shares = mask / mask.sum()
            else:
                shares = shares / shares.sum()
            self.h[idx] = dem * shares

    def costs(self, h):
        return self.q_mat @ h + self.c0

    def gap_terms(self, h, c):
        """(relative gap, theta, cheapest strategy per block, block costs)."""
        cb = np.where(self.valid, c[self.safe], np.inf)
        best = np.argmin(cb, axis=1)
        cmin = cb[np.arange(len(best)), best]
        theta = float(np.dot(h, c))
        hb = np.where(self.valid, h[self.safe], 0.0)
        excess = float(np.sum(hb * np.where(self.valid, cb, 0.0)) - np.dot(self.demand, cmin))
        excess = max(excess, 0.0)
        if theta > 0:
            gap = excess / theta
        else:
            gap = 0.0 if excess == 0 else math.inf
        return gap, theta, best, cb

    def direction(self, h, c, best, cb, method):
        rows = np.arange(len(best))
        best_idx = self.layout[rows, best]
        d = np.zeros_like(h)
        if method == "frank_wolfe":
            for k, (_, _, idx, dem) in enumerate(self.blocks):
                d[idx] = -h[idx]
            d[best_idx] += self.demand
            return d
        hb = np.where(self.valid, h[self.safe], 0.0)
        excess = np.where(self.valid, cb - cb[rows, best][:, None], 0.0)
        q = self.q_mat
        diag = np.diag(q)
        curv = diag[self.safe] + diag[best_idx][:, None] - 2.0 * q[self.safe, best_idx[:, None]]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(curv > 0, excess / curv, np.inf)
        shift = np.where((hb > 0) & (excess > 0), np.minimum(hb, step), 0.0)
        shift[rows, best] = 0.0
        np.subtract.at(d, self.safe[self.valid], shift[self.valid])
        d[best_idx] += shift.sum(axis=1)
        return d

    def face_newton(self, h, free, best):
        """Direction to the minimiser of the potential on the face spanned by the current support.

        The support is every free strategy carrying flow plus each block's
        cheapest strategy. Returns None when the face system gives no usable
        direction.
        """
        support = free & (h > 1e-12 * max(1.0, float(self.demand.max(initial=1.0))))
        support[self.layout[np.arange(len(best)), best]] = True
        idx = np.nonzero(support)[0]
        n_s, n_b = len(idx), len(self.blocks)
        kkt = np.zeros((n_s + n_b, n_s + n_b))
        rhs = np.zeros(n_s + n_b)
        kkt[:n_s, :n_s] = self.q_mat[np.ix_(idx, idx)]
        fixed = h.copy()
        fixed[idx] = 0.0
        rhs[:n_s] = -(self.c0[idx] + self.q_mat[idx] @ fixed)
        for b, (_, _, bidx, dem) in enumerate(self.blocks):
            cols = np.searchsorted(idx, bidx[support[bidx]])
            kkt[n_s + b, cols] = 1.0
            kkt[cols, n_s + b] = -1.0
            rhs[n_s + b] = dem
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        target = h.copy()
        target[idx] = sol[:n_s]
        d = target - h
        if not np.all(np.isfinite(d)):
            return None
        # Keep demand exact: absorb residual drift into each block's cheapest strategy.
        for b, (_, _, bidx, _) in enumerate(self.blocks):
            d[self.layout[b, best[b]]] -= d[bidx].sum()
        return d


def solve_equilibrium(
    scenario: "Scenario",
    design: Design | None = None,
    mode: str = JOINT,
    cfg: SolverConfig | None = None,
    background: FlowProfile | None = None,
    initial: FlowProfile | None = None,
    strict: bool = False,
) -> EquilibriumResult:
    """Equilibrium flows for a fixed design.

    ``background`` supplies the frozen class in the two fixed-background
    modes. ``initial`` warm-starts the free classes. With ``strict=True`` a
    run that hits ``max_iterations`` raises ``NotConverged`` (carrying the
    result); otherwise it is returned with ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    design = design or Design.empty()
    game = _Game(scenario, design, mode, background)
    game.start(initial)
    h = game.h
    free = np.zeros(len(h), bool)
    for _, _, idx, _ in game.blocks:
        free[idx] = True

    it = 0
    converged = False
    last_phi = math.inf
    gap = math.inf
    while True:
        c = game.costs(h)
        gap, theta, best, cb = game.gap_terms(h, c)
        if gap <= cfg.tol:
            converged = True
            break
        if it >= cfg.max_iterations:
            break
        d = game.direction(h, c, best, cb, cfg.method)
        if cfg.method == "projected":
            dn = game.face_newton(h, free, best)
            if dn is not None and float(np.dot(c, dn)) < 0:
                neg = dn < 0
                ratio = np.min(h[neg] / -dn[neg]) if neg.any() else 1.0
                if ratio > 1e-12:
                    d = dn * min(1.0, ratio)
        slope = float(np.dot(c, d))
        if slope >= 0:
            # No descent left at machine precision.
            converged = gap <= cfg.tol
            break
        qd = game.q_mat @ d
        curv = float(np.dot(d, qd))
        step = 1.0 if curv <= 0 else min(1.0, -slope / curv)
        h = h + step * d
        h[free & (h < 0)] = 0.0
        it += 1
        if cfg.check_monotone:
            phi = float(0.5 * h @ (game.q_mat @ h) + game.c0 @ h)
            assert phi <= last_phi + 1e-9 * max(1.0, abs(last_phi)), "potential increased"
            last_phi = phi

    profile = _profile_from_flows(game, h, background)
    kern = game.kernel
    v, load = kern.flows(h[: game.n_p], h[game.n_p :])
    result = EquilibriumResult(
        profile=profile,
        gap=float(gap),
        iterations=it,
        potential_value=kern.potential(v, load),
        converged=converged,
        theta=float(np.dot(h, game.costs(h))),
        mode=mode,
    )
    if strict and not converged:
        raise NotConverged(f"equilibrium gap {gap:.3e} after {it} iterations", result)
    return result


def _profile_from_flows(game: _Game, h, background) -> FlowProfile:
    net = game.net
    q = np.zeros(net.n_paths)
    q0 = np.zeros(net.n_routes)
    ev_allowed = game.allowed[: net.n_paths]
    for w in range(len(net.od_pairs)):
        sl, rl = net.path_slices[w], net.route_slices[w]
        if game.ev_demand[w] > 0:
            q[sl] = h[sl] / game.ev_demand[w]
        elif background is not None and len(background.q[w]):
            q[sl] = background.q[w]
        elif sl.stop > sl.start:
            mask = ev_allowed[sl] if ev_allowed[sl].any() else np.ones(sl.stop - sl.start, bool)
            q[sl] = mask / mask.sum()
        if net.gamma_ncd[w] > 0:
            q0[rl] = h[net.n_paths + rl.start : net.n_paths + rl.stop] / net.gamma_ncd[w]
        elif background is not None:
            q0[rl] = background.q0[w]
        else:
            q0[rl] = 1.0 / (rl.stop - rl.start)
    return net.split_shares(q, q0)


def _all_blocks(scenario, design):
    """Every O-D/class block with positive demand, for gap evaluation."""
    net = scenario.network
    kern = CostKernel(scenario, design)
    out = []
    for w in range(len(net.od_pairs)):
        if net.gamma_ev[w] > 0:
            sl = net.path_slices[w]
            out.append((EV, w, np.arange(sl.start, sl.stop), float(net.gamma_ev[w])))
        if net.gamma_ncd[w] > 0:
            sl = net.route_slices[w]
            out.append((NCD, w, net.n_paths + np.arange(sl.start, sl.stop), float(net.gamma_ncd[w])))
    allowed = np.concatenate([kern.allowed, np.ones(net.n_routes, bool)])
    return kern, out, allowed


def _flat(net, profile):
    q, q0 = net.flat_shares(profile)
    return np.concatenate([net.gamma_ev[net.path_od] * q, net.gamma_ncd[net.route_od] * q0])


def equilibrium_gap(scenario: "Scenario", design: Design | None, profile: FlowProfile) -> float:
    """Relative Wardrop gap: demand-weighted excess over the cheapest strategy, over theta."""
    design = design or Design.empty()
    net = scenario.network
    kern, blocks, allowed = _all_blocks(scenario, design)
    h = _flat(net, profile)
    v, load = kern.flows(h[: net.n_paths], h[net.n_paths :])
    c_ev, c_ncd = kern.costs(v, load)
    c = np.concatenate([c_ev, c_ncd])
    theta = float(np.dot(h, c))
    excess = 0.0
    for _, _, idx, dem in blocks:
        ok = allowed[idx] if allowed[idx].any() else np.ones(len(idx), bool)
        excess += float(np.dot(h[idx], c[idx]) - dem * c[idx][ok].min())
    excess = max(excess, 0.0)
    if theta <= 0:
        return 0.0 if excess == 0 else math.inf
    return excess / theta


def best_response(
    scenario: "Scenario", design: Design | None, state: FlowProfile, agent_class: str, od: int
) -> int:
    """Index of the cheapest open strategy at ``state`` (lowest index on ties)."""
    design = design or Design.empty()
    net = scenario.network
    kern = CostKernel(scenario, design)
    h = _flat(net, state)
    v, load = kern.flows(h[: net.n_paths], h[net.n_paths :])
    c_ev, c_ncd = kern.costs(v, load)
    if agent_class == EV:
        sl = net.path_slices[od]
        costs = np.where(kern.allowed[sl], c_ev[sl], np.inf)
    elif agent_class == NCD:
        costs = c_ncd[net.route_slices[od]]
    else:
        raise ValidationError(f"unknown agent class {agent_class!r}", "agent_class")
    return int(np.argmin(costs))


def wardrop_violations(
    scenario: "Scenario", design: Design | None, profile: FlowProfile, rel_tol: float = 1e-4
) -> list[tuple[str, int, int, float]]:
    """Used strategies (share > 1e-6) costing more than ``min * (1 + rel_tol)``.

    Returns ``(class, od, strategy, relative excess)`` tuples; empty means the
    profile certifies the equilibrium conditions at that tolerance.
    """
    design = design or Design.empty()
    net = scenario.network
    ev_costs, ncd_costs = _per_od_costs(scenario, design, profile)
    kern = CostKernel(scenario, design)
    out = []
    for w in range(len(net.od_pairs)):
        for cls, shares, costs, dem, ok in (
            (EV, profile.q[w], ev_costs[w], net.gamma_ev[w], kern.allowed[net.path_slices[w]]),
            (NCD, profile.q0[w], ncd_costs[w], net.gamma_ncd[w], np.ones(len(ncd_costs[w]), bool)),
        ):
            if dem <= 0 or len(costs) == 0:
                continue
            cmin = costs[ok].min() if ok.any() else costs.min()
            for k in np.flatnonzero(shares > USED_SHARE):
                if costs[k] > cmin * (1 + rel_tol) + 1e-12:
                    out.append((cls, w, int(k), float(costs[k] / cmin - 1) if cmin > 0 else math.inf))
    return out


def _per_od_costs(scenario, design, profile):
    from .costs import strategy_costs

    return strategy_costs(scenario, design, profile)


def _simplex_grid(k: int, steps: int) -> np.ndarray:
    """All share vectors of length k with entries in multiples of 1/steps."""
    if k == 1:
        return np.ones((1, 1))
    rows = []
    for bars in itertools.combinations(range(steps + k - 1), k - 1):
        prev, parts = -1, []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(steps + k - 2 - prev)
        rows.append(parts)
    return np.array(rows, dtype=float) / steps


MAX_GRID_POINTS = 3_000_000


def brute_force_equilibrium(
    scenario: "Scenario", design: Design | None = None, resolution: float = 0.01
) -> FlowProfile:
    """Grid-search oracle: the profile on the share lattice with the smallest gap.

    Only for tiny instances (at most 6 strategies with demand and 2 O-D pairs).
    """
    design = design or Design.empty()
    net = scenario.network
    steps = round(1.0 / resolution)
    if steps <= 0 or abs(steps * resolution - 1.0) > 1e-9:
        raise ValidationError("resolution must divide 1", "resolution")
    if len(net.od_pairs) > 2:
        raise TooLarge("brute force supports at most 2 O-D pairs")
    kern, blocks, allowed = _all_blocks(scenario, design)
    n_strat = sum(int(allowed[idx].sum()) for _, _, idx, _ in blocks)
    if n_strat > 6:
        raise TooLarge(f"{n_strat} strategies exceed the brute-force limit of 6")

    grids = []
    total = 1
    for _, _, idx, _ in blocks:
        k = int(allowed[idx].sum())
        if k == 0:
            raise InfeasibleMode("a block with demand has no open strategy")
        g = _simplex_grid(k, steps)
        grids.append(g)
        total *= len(g)
    if total > MAX_GRID_POINTS:
        raise TooLarge(f"grid of {total} points is too large")

    n = net.n_paths + net.n_routes
    h = np.zeros((1, n))
    for (_, _, idx, dem), g in zip(blocks, grids):
        cols = idx[allowed[idx]]
        block = np.zeros((len(g), n))
        block[:, cols] = dem * g
        h = (h[:, None, :] + block[None, :, :]).reshape(-1, n)

    s = net.station_paths
    v = h[:, : net.n_paths] @ net.path_links.T + h[:, net.n_paths :] @ net.route_links.T
    load = h[:, : net.n_paths] @ s.T
    t = v * kern.a
    c_ncd = kern.lam1 * (t @ net.route_links)
    c_ev = c_ncd[:, net.path_route] + kern.lam2 * (load * kern.inv_cap)[:, net.path_station] + kern.fee
    c = np.hstack([c_ev, c_ncd])
    theta = np.sum(h * c, axis=1)
    excess = np.zeros(len(h))
    for _, _, idx, dem in blocks:
        ok = idx[allowed[idx]]
        excess += np.sum(h[:, idx] * c[:, idx], axis=1) - dem * c[:, ok].min(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.where(theta > 0, excess / theta, np.where(excess > 0, np.inf, 0.0))
    best = int(np.argmin(gap))

    hb = h[best]
    q = np.zeros(net.n_paths)
    q0 = np.zeros(net.n_routes)
    for w in range(len(net.od_pairs)):
        sl, rl = net.path_slices[w], net.route_slices[w]
        if net.gamma_ev[w] > 0:
            q[sl] = hb[sl] / net.gamma_ev[w]
        elif sl.stop > sl.start:
            ok = kern.allowed[sl] if kern.allowed[sl].any() else np.ones(sl.stop - sl.start, bool)
            q[sl] = ok / ok.sum()
        if net.gamma_ncd[w] > 0:
            q0[rl] = hb[net.n_paths + rl.start : net.n_paths + rl.stop] / net.gamma_ncd[w]
        else:
            q0[rl] = 1.0 / (rl.stop - rl.start)
    return net.split_shares(q, q0)
