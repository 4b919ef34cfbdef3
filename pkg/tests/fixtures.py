"""Small hand-built scenarios shared by the test modules."""

from __future__ import annotations

import numpy as np

from evplan.costs import CostKernel
from evplan.design import INTEGER, RELAXED, Design
from evplan.generators import generate_nd_like, two_link_toy
from evplan.network import Link, ODPair
from evplan.scenario import make_scenario


def flat(nodes, value):
    return {n: float(value) for n in nodes}


def three_parallel():
    links = [Link(1, 1, 2, 1.0, 1.0), Link(2, 1, 2, 1.5, 2.0), Link(3, 1, 2, 2.0, 1.0)]
    return make_scenario([1, 2], links, [ODPair(1, 2, 0.0, 4.0)], flat([1, 2], 5), flat([1, 2], 10), eligible=[2])


def crossing_pairs(gamma=(3.0, 2.0)):
    """Two O-D pairs, (1,3) and (2,4), sharing link 2->3."""
    links = [
        Link(1, 1, 3, 2.0, 1.0),
        Link(2, 1, 2, 1.0, 1.0),
        Link(3, 2, 3, 0.5, 1.0),
        Link(4, 2, 4, 2.5, 1.0),
        Link(5, 3, 4, 1.0, 1.0),
    ]
    ods = [ODPair(1, 3, 0.0, gamma[0]), ODPair(2, 4, 0.0, gamma[1])]
    nodes = [1, 2, 3, 4]
    return make_scenario(nodes, links, ods, flat(nodes, 5), flat(nodes, 10), eligible=[2, 3])


def crossing_mixed():
    """EVs on (1,3) with stations at 2 and 3, NCDs on (2,4)."""
    sc = crossing_pairs()
    net = sc.network
    ods = [ODPair(1, 3, 2.0, 0.0), ODPair(2, 4, 0.0, 3.0)]
    sc = sc.with_changes(od_pairs=ods)
    design = Design({2: 1.0, 3: 2.0}, {2: 6.0, 3: 6.5}, INTEGER)
    return sc, design


def toy_with_ev():
    sc = two_link_toy(gamma_ev=2.0, gamma_ncd=0.0, budget=2)
    return sc, Design({2: 1.0}, {2: 6.0}, INTEGER)


def diamond():
    """1 -> {2, 3} -> 4 with stations at 2 and 3."""
    links = [Link(1, 1, 2, 1.0, 2.0), Link(2, 1, 3, 1.5, 2.0), Link(3, 2, 4, 1.0, 1.0), Link(4, 3, 4, 0.5, 1.0)]
    nodes = [1, 2, 3, 4]
    sc = make_scenario(nodes, links, [ODPair(1, 4, 3.0, 2.0)], flat(nodes, 5), flat(nodes, 10), eligible=[2, 3], budget=3)
    return sc, Design({2: 1.0, 3: 2.0}, {2: 7.0, 3: 6.0}, INTEGER)


def tiny_fixtures():
    """(name, scenario, design) cases with at most six strategies."""
    toy = two_link_toy()
    sc_ev, d_ev = toy_with_ev()
    sc_d, d_d = diamond()
    sc_m, d_m = crossing_mixed()
    return [
        ("two_link", toy, None),
        ("three_parallel", three_parallel(), None),
        ("crossing_pairs", crossing_pairs(), None),
        ("two_link_ev", sc_ev, d_ev),
        ("diamond", sc_d, d_d),
        ("crossing_mixed", sc_m, d_m),
    ]


def single_corridor(gamma_ev=10.0, e=5.0, t=10.0, budget=5, pi=1.2):
    """One O-D pair, one route, one eligible station at the middle node."""
    links = [Link(1, 1, 2, 1.0, 100.0), Link(2, 2, 3, 1.0, 100.0)]
    nodes = [1, 2, 3]
    return make_scenario(
        nodes, links, [ODPair(1, 3, gamma_ev, 0.0)], flat(nodes, e), flat(nodes, t), eligible=[2], budget=budget, pi=pi
    )


def symmetric_stations(budget=4):
    """Two mirror-image routes, each with its own station."""
    links = [Link(1, 1, 2, 1.0, 10.0), Link(2, 2, 4, 1.0, 10.0), Link(3, 1, 3, 1.0, 10.0), Link(4, 3, 4, 1.0, 10.0)]
    nodes = [1, 2, 3, 4]
    return make_scenario(
        nodes, links, [ODPair(1, 4, 20.0, 0.0)], flat(nodes, 5), flat(nodes, 10), eligible=[2, 3], budget=budget
    )


def random_design(scenario, rng, integer=True):
    """Random design that keeps every EV O-D pair served."""
    stations = scenario.usable_stations()
    x = {}
    for n in stations:
        if rng.random() < 0.6:
            x[n] = float(rng.integers(1, 4)) if integer else float(rng.uniform(0.2, 3.0))
    net = scenario.network
    for w, ps in enumerate(net.extended_paths):
        if net.gamma_ev[w] > 0 and not any(p.charge_node in x for p in ps):
            x[ps[0].charge_node] = 1.0
    y = {n: float(rng.uniform(5.0, 20.0)) for n in x}
    return Design(x, y, INTEGER if integer else RELAXED)


def nd(seed=0, **overrides):
    return generate_nd_like(seed, overrides or None)


def max_share_deviation(p, q) -> float:
    parts = [np.abs(a - b) for a, b in zip(p.q, q.q) if len(a)] + [np.abs(a - b) for a, b in zip(p.q0, q.q0) if len(a)]
    return float(max((a.max() for a in parts), default=0.0))


def potential_gradient_error(sc, design, rng, points=20):
    """Largest relative error between central differences of the potential and strategy costs.

    Only strategies through open stations carry flow and are perturbed.
    """
    net = sc.network
    kern = CostKernel(sc, design)
    open_ = np.concatenate([kern.allowed, np.ones(net.n_routes, bool)])
    worst = 0.0
    for _ in range(points):
        h = np.where(open_, rng.uniform(0.1, 5.0, len(open_)), 0.0)
        c_ev, c_ncd = kern.costs(*kern.flows(h[: net.n_paths], h[net.n_paths :]))
        grad = np.concatenate([c_ev, c_ncd])

        def phi(z):
            return kern.potential(*kern.flows(z[: net.n_paths], z[net.n_paths :]))

        for i in np.flatnonzero(open_):
            step = 1e-4 * max(1.0, abs(h[i]))
            up, dn = h.copy(), h.copy()
            up[i] += step
            dn[i] -= step
            fd = (phi(up) - phi(dn)) / (2 * step)
            worst = max(worst, abs(fd - grad[i]) / max(abs(grad[i]), 1e-12))
    return worst
