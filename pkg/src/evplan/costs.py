"""Agent cost functions, social cost and the convex potential.

Link travel time is linear in flow, ``f = d * v / c``. Queueing delay at a
station is ``load / (x * mu)`` (linear in load, inverse in chargers), with the
charger count floored at ``EPS_X`` so relaxed designs never divide by zero.
Under these forms the potential below is a convex quadratic whose gradient
with respect to a strategy's flow is exactly that strategy's cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .design import INTEGER, Design
from .errors import DimensionMismatch, NegativeFlow, StationClosed, ValidationError
from .network import ExtendedPath, FlowProfile, Link, Network, Route, link_and_station_flows

if TYPE_CHECKING:
    from .scenario import Scenario

EPS_X = 1e-6


@dataclass(frozen=True)
class BehaviourWeights:
    lambda1: float = 1.0  # travel time
    lambda2: float = 2.0  # queueing delay
    lambda3: float = 3.0  # charging fee

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be >= 0", name)
        if self.lambda1 <= 0:
            raise ValidationError("lambda1 must be positive", "lambda1")


@dataclass(frozen=True)
class CostBreakdown:
    travel: float
    queue: float
    fee: float
    total: float


def link_travel_time(link: Link, total_flow: float) -> float:
    if total_flow < 0:
        raise NegativeFlow(f"link {link.id}: negative flow {total_flow}")
    return link.d * total_flow / link.c


def queue_delay(load: float, chargers_x: float, mu: float) -> float:
    return load / (max(chargers_x, EPS_X) * mu)


def _route_time(network: Network, route: Route, link_flows: Mapping[int, float]) -> float:
    return math.fsum(
        link_travel_time(network.links[network.link_index[lid]], link_flows.get(lid, 0.0))
        for lid in route.links
    )


def ev_path_cost(
    scenario: "Scenario",
    path: ExtendedPath,
    link_flows: Mapping[int, float],
    station_loads: Mapping[int, float],
    design: Design,
) -> CostBreakdown:
    net, w = scenario.network, scenario.weights
    node = path.charge_node
    x = design.x.get(node, 0.0)
    if design.mode == INTEGER and x <= 0:
        raise StationClosed(f"node {node} has no chargers")
    travel = _route_time(net, net.routes[path.od][path.route], link_flows)
    queue = queue_delay(station_loads.get(node, 0.0), x, scenario.mu)
    fee = design.y.get(node, 0.0)
    total = w.lambda1 * travel + w.lambda2 * queue + w.lambda3 * fee
    return CostBreakdown(travel, queue, fee, total)


def ncd_route_cost(
    network: Network, route: Route, link_flows: Mapping[int, float], weights: BehaviourWeights
) -> float:
    return weights.lambda1 * _route_time(network, route, link_flows)


def expected_class_costs(
    profile: FlowProfile,
    costs: tuple[Sequence[np.ndarray], Sequence[np.ndarray]],
) -> tuple[np.ndarray, np.ndarray]:
    """Share-weighted mean strategy cost per O-D pair for (EVs, NCDs)."""
    ev_costs, ncd_costs = costs
    if len(ev_costs) != len(profile.q) or len(ncd_costs) != len(profile.q0):
        raise DimensionMismatch("cost vectors and profile disagree on O-D count")
    ev, ncd = [], []
    for q, cst in zip(profile.q, ev_costs):
        if len(q) != len(cst):
            raise DimensionMismatch("EV cost vector length differs from share vector")
        ev.append(float(np.dot(q, cst)) if len(q) else 0.0)
    for q0, cst in zip(profile.q0, ncd_costs):
        if len(q0) != len(cst):
            raise DimensionMismatch("NCD cost vector length differs from share vector")
        ncd.append(float(np.dot(q0, cst)))
    return np.array(ev), np.array(ncd)


class CostKernel:
    """Vectorised costs for one (scenario, design) pair.

    Works on absolute strategy flows ``h_ev`` (per extended path) and
    ``h_ncd`` (per route). Paths whose station has no chargers are marked
    not ``allowed``; the solvers keep them at zero flow.
    """

    def __init__(self, scenario: "Scenario", design: Design | None = None):
        net = scenario.network
        self.network = net
        self.lam1 = scenario.weights.lambda1
        self.lam2 = scenario.weights.lambda2
        self.lam3 = scenario.weights.lambda3
        self.mu = scenario.mu
        self.a = net.d / net.c
        design = design or Design.empty()
        self.x, self.y = design.arrays(net.nodes)
        self.inv_cap = 1.0 / (np.maximum(self.x, EPS_X) * self.mu)
        self.allowed = self.x[net.path_station] > 0
        self.fee = self.lam3 * self.y[net.path_station]

    def flows(self, h_ev, h_ncd):
        return link_and_station_flows(self.network, h_ev, h_ncd)

    def link_times(self, v):
        return self.a * v

    def costs(self, v, load):
        """(EV path costs, NCD route costs) at the given aggregates."""
        net = self.network
        t = self.a * v
        c_ncd = self.lam1 * (t @ net.route_links)
        c_ev = c_ncd[net.path_route] + self.lam2 * (load * self.inv_cap)[net.path_station] + self.fee
        return c_ev, c_ncd

    def breakdown(self, v, load):
        """Per-path (travel, queue, fee) arrays."""
        net = self.network
        travel = (self.a * v) @ net.route_links
        return (
            travel[net.path_route],
            (load * self.inv_cap)[net.path_station],
            self.y[net.path_station].copy(),
        )

    def potential(self, v, load) -> float:
        return float(
            0.5 * self.lam1 * np.dot(self.a, v * v)
            + 0.5 * self.lam2 * np.dot(self.inv_cap, load * load)
            + self.lam3 * np.dot(self.y, load)
        )

    def curvature(self, dv, dload) -> float:
        """Second directional derivative of the potential."""
        return float(self.lam1 * np.dot(self.a, dv * dv) + self.lam2 * np.dot(self.inv_cap, dload * dload))

    def theta(self, h_ev, h_ncd) -> float:
        v, load = self.flows(h_ev, h_ncd)
        c_ev, c_ncd = self.costs(v, load)
        return float(np.dot(h_ev, c_ev) + np.dot(h_ncd, c_ncd))


def absolute_flows(network: Network, profile: FlowProfile) -> tuple[np.ndarray, np.ndarray]:
    q, q0 = network.flat_shares(profile)
    return network.gamma_ev[network.path_od] * q, network.gamma_ncd[network.route_od] * q0


def strategy_costs(scenario: "Scenario", design: Design, profile: FlowProfile):
    """Per-O-D (EV path costs, NCD route costs) at the profile's flows."""
    net = scenario.network
    kern = CostKernel(scenario, design)
    v, load = kern.flows(*absolute_flows(net, profile))
    c_ev, c_ncd = kern.costs(v, load)
    return [c_ev[s] for s in net.path_slices], [c_ncd[s] for s in net.route_slices]


def social_cost(scenario: "Scenario", design: Design, profile: FlowProfile) -> float:
    net = scenario.network
    ev, ncd = expected_class_costs(profile, strategy_costs(scenario, design, profile))
    return float(np.dot(net.gamma_ev, ev) + np.dot(net.gamma_ncd, ncd))


def potential(scenario: "Scenario", design: Design, profile: FlowProfile) -> float:
    kern = CostKernel(scenario, design)
    v, load = kern.flows(*absolute_flows(scenario.network, profile))
    return kern.potential(v, load)
