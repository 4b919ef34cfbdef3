"""The Scenario record: network, behaviour weights and economic parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .costs import BehaviourWeights
from .errors import ValidationError
from .network import Link, Network, ODPair, RouteConfig, build_network

FORMAT_VERSION = 1


@dataclass
class Scenario:
    network: Network
    weights: BehaviourWeights
    mu: float
    pi: float
    budget: int
    e: dict[int, float]
    t: dict[int, float]
    eligible: frozenset[int]
    seed: int = 0
    version: int = FORMAT_VERSION
    route_cfg: RouteConfig = field(default_factory=RouteConfig)

    def __post_init__(self):
        if not (math.isfinite(self.pi) and self.pi > 1):
            raise ValidationError("pi must exceed 1", "pi")
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValidationError("mu must be positive", "mu")
        if int(self.budget) != self.budget or self.budget < 0:
            raise ValidationError("budget must be a non-negative integer", "budget")
        self.budget = int(self.budget)
        for name, table in (("e", self.e), ("t", self.t)):
            for node in self.network.nodes:
                v = table.get(node)
                if v is None:
                    raise ValidationError(f"node {node}: missing {name}", name)
                if not (math.isfinite(v) and v >= 0):
                    raise ValidationError(f"node {node}: {name} must be >= 0", name)

    @property
    def nodes(self) -> tuple[int, ...]:
        return self.network.nodes

    @property
    def od_nodes(self) -> frozenset[int]:
        return frozenset(n for od in self.network.od_pairs for n in (od.origin, od.dest))

    def usable_stations(self) -> list[int]:
        """Eligible nodes that at least one extended path can charge at."""
        used = {p.charge_node for ps in self.network.extended_paths for p in ps}
        return sorted(used & self.eligible)

    def with_changes(self, **changes) -> "Scenario":
        """Copy with scalar parameters and/or network inputs replaced.

        Accepts ``budget``, ``mu``, ``pi``, ``weights``, ``e``, ``t``, ``seed``
        directly; ``links``, ``od_pairs``, ``eligible`` and ``route_cfg``
        trigger a network rebuild.
        """
        rebuild = {k: changes.pop(k) for k in ("links", "od_pairs", "eligible", "route_cfg") if k in changes}
        if rebuild:
            net = self.network
            eligible = rebuild.get("eligible", self.eligible)
            cfg = rebuild.get("route_cfg", self.route_cfg)
            network = build_network(
                net.nodes,
                rebuild.get("links", net.links),
                rebuild.get("od_pairs", net.od_pairs),
                eligible,
                cfg,
            )
            changes.update(network=network, eligible=frozenset(eligible), route_cfg=cfg)
        return replace(self, **changes)


def make_scenario(
    nodes: Iterable[int],
    links: Sequence[Link],
    od_pairs: Sequence[ODPair],
    e: Mapping[int, float],
    t: Mapping[int, float],
    *,
    eligible: Iterable[int] | None = None,
    weights: BehaviourWeights | None = None,
    mu: float = 4.0,
    pi: float = 1.2,
    budget: int = 0,
    seed: int = 0,
    route_cfg: RouteConfig | None = None,
) -> Scenario:
    nodes = list(nodes)
    cfg = route_cfg or RouteConfig()
    elig = frozenset(nodes if eligible is None else eligible)
    network = build_network(nodes, links, od_pairs, elig, cfg)
    return Scenario(
        network=network,
        weights=weights or BehaviourWeights(),
        mu=float(mu),
        pi=float(pi),
        budget=budget,
        e={int(k): float(v) for k, v in e.items()},
        t={int(k): float(v) for k, v in t.items()},
        eligible=elig,
        seed=int(seed),
        route_cfg=cfg,
    )
