"""Deterministic scenario generators.

``generate_nd_like`` builds the 13-node, 19-link Nguyen-Dupuis benchmark with
four O-D pairs. The benchmark does not come with link lengths, so they are
drawn uniformly from [1, 3] with the scenario seed; results are therefore
comparable across runs of this package but not to published figures.
"""

from __future__ import annotations

import numpy as np

from .costs import BehaviourWeights
from .errors import ValidationError
from .network import Link, ODPair, RouteConfig
from .scenario import Scenario, make_scenario

ND_NODES = tuple(range(1, 14))
ND_EDGES = (
    (1, 5), (1, 12), (4, 5), (4, 9), (5, 6), (5, 9), (6, 7), (6, 10), (7, 8), (7, 11),
    (8, 2), (9, 10), (9, 13), (10, 11), (11, 2), (11, 3), (12, 6), (12, 8), (13, 3),
)
ND_OD = ((1, 2), (1, 3), (4, 2), (4, 3))

ND_DEFAULTS = {
    "lambda1": 1.0,
    "lambda2": 2.0,
    "lambda3": 3.0,
    "capacity": 200.0,
    "mu": 4.0,
    "t": 10.0,
    "gamma_ev": 15.0,
    "gamma_ncd": 100.0,
    "pi": 1.2,
    "budget": 7,
    "d_range": (1.0, 3.0),
    "e_od_range": (11.0, 15.0),
    "e_other_range": (5.0, 7.0),
    "max_routes_total": 10,
}


def draw_electricity_prices(nodes, od_nodes, rng, od_range=(11.0, 15.0), other_range=(5.0, 7.0)):
    """O-D nodes draw from the stressed range, all others from the base range."""
    e = {}
    for n in nodes:
        lo, hi = od_range if n in od_nodes else other_range
        e[n] = float(rng.uniform(lo, hi))
    return e


def generate_nd_like(seed: int = 0, overrides: dict | None = None) -> Scenario:
    params = dict(ND_DEFAULTS)
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ValidationError(f"unknown generator override {key!r}", "overrides")
        params[key] = value

    rng = np.random.default_rng(seed)
    lo, hi = params["d_range"]
    links = [
        Link(k + 1, a, b, float(rng.uniform(lo, hi)), float(params["capacity"]))
        for k, (a, b) in enumerate(ND_EDGES)
    ]
    od_nodes = {n for pair in ND_OD for n in pair}
    e = draw_electricity_prices(ND_NODES, od_nodes, rng, params["e_od_range"], params["e_other_range"])
    od_pairs = [ODPair(o, d, float(params["gamma_ev"]), float(params["gamma_ncd"])) for o, d in ND_OD]
    origins = {o for o, _ in ND_OD}
    return make_scenario(
        ND_NODES,
        links,
        od_pairs,
        e,
        {n: float(params["t"]) for n in ND_NODES},
        eligible=[n for n in ND_NODES if n not in origins],
        weights=BehaviourWeights(params["lambda1"], params["lambda2"], params["lambda3"]),
        mu=params["mu"],
        pi=params["pi"],
        budget=params["budget"],
        seed=seed,
        route_cfg=RouteConfig(max_routes_per_od=10, max_routes_total=params["max_routes_total"]),
    )


def resample_electricity_prices(scenario: Scenario, replication: int) -> Scenario:
    """Fresh e draws for sweep replications; replication 0 keeps the original."""
    if replication == 0:
        return scenario
    rng = np.random.default_rng([scenario.seed, replication])
    e = draw_electricity_prices(
        scenario.nodes, scenario.od_nodes, rng, ND_DEFAULTS["e_od_range"], ND_DEFAULTS["e_other_range"]
    )
    return scenario.with_changes(e=e)


def two_link_toy(d=(1.0, 2.0), c=(1.0, 1.0), gamma_ncd=3.0, gamma_ev=0.0, **kw) -> Scenario:
    """Two parallel links from node 1 to node 2; node 2 is the only charging node."""
    links = [Link(1, 1, 2, float(d[0]), float(c[0])), Link(2, 1, 2, float(d[1]), float(c[1]))]
    kw.setdefault("budget", 0)
    return make_scenario(
        [1, 2],
        links,
        [ODPair(1, 2, float(gamma_ev), float(gamma_ncd))],
        kw.pop("e", {1: 5.0, 2: 5.0}),
        kw.pop("t", {1: 10.0, 2: 10.0}),
        eligible=kw.pop("eligible", [2]),
        **kw,
    )
