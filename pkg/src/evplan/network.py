"""Road graph, O-D demand, route enumeration and EV extended paths.

Strategies are indexed densely and canonically: routes are grouped by O-D
pair and sorted by (total length, node sequence); extended paths are grouped
by O-D pair and sorted by (route index, charging node id). Everything the
solvers need is precomputed here as numpy incidence arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from .errors import (
    DimensionMismatch,
    DisconnectedOD,
    DuplicateLink,
    InvalidLink,
    NoChargingOption,
    ValidationError,
)


@dataclass(frozen=True)
class Link:
    id: int
    source: int
    target: int
    d: float
    c: float


@dataclass(frozen=True)
class ODPair:
    origin: int
    dest: int
    gamma_ev: float
    gamma_ncd: float

    @property
    def total(self) -> float:
        return self.gamma_ev + self.gamma_ncd


@dataclass(frozen=True)
class Route:
    od: int
    links: tuple[int, ...]
    nodes: tuple[int, ...]


@dataclass(frozen=True)
class ExtendedPath:
    od: int
    route: int  # index within the O-D pair's route list
    charge_node: int


@dataclass(frozen=True)
class RouteConfig:
    max_routes_per_od: int = 10
    max_hops: int | None = None
    # Global cap, filled round-robin over O-D pairs by route rank.
    max_routes_total: int | None = None
    origin_charging: bool = False


@dataclass
class FlowProfile:
    """Per-O-D strategy shares: ``q`` over extended paths, ``q0`` over routes."""

    q: list[np.ndarray]
    q0: list[np.ndarray]

    def copy(self) -> "FlowProfile":
        return FlowProfile([a.copy() for a in self.q], [a.copy() for a in self.q0])

    def check(self, network: "Network", atol: float = 1e-9) -> None:
        if len(self.q) != len(network.od_pairs) or len(self.q0) != len(network.od_pairs):
            raise DimensionMismatch("profile has a different number of O-D pairs than the network")
        for w in range(len(network.od_pairs)):
            if len(self.q[w]) != len(network.extended_paths[w]):
                raise DimensionMismatch(f"O-D {w}: EV share vector has wrong length")
            if len(self.q0[w]) != len(network.routes[w]):
                raise DimensionMismatch(f"O-D {w}: NCD share vector has wrong length")
            for arr in (self.q[w], self.q0[w]):
                if len(arr) and (np.any(arr < -atol) or np.any(arr > 1 + atol)):
                    raise ValidationError(f"O-D {w}: shares outside [0, 1]", "simplex")
                if len(arr) and abs(arr.sum() - 1.0) > atol:
                    raise ValidationError(f"O-D {w}: shares do not sum to one", "simplex")


class Network:
    """Immutable transportation network with enumerated strategies."""

    def __init__(
        self,
        nodes: Sequence[int],
        links: Sequence[Link],
        od_pairs: Sequence[ODPair],
        routes: Sequence[Sequence[Route]],
        extended_paths: Sequence[Sequence[ExtendedPath]],
        charging_nodes: Iterable[int],
    ):
        self.nodes = tuple(sorted(nodes))
        self.links = tuple(links)
        self.od_pairs = tuple(od_pairs)
        self.routes = tuple(tuple(r) for r in routes)
        self.extended_paths = tuple(tuple(p) for p in extended_paths)
        self.charging_nodes = frozenset(charging_nodes)
        self._build_arrays()

    def _build_arrays(self) -> None:
        self.node_index = {n: i for i, n in enumerate(self.nodes)}
        self.link_index = {lk.id: i for i, lk in enumerate(self.links)}
        self.d = np.array([lk.d for lk in self.links], dtype=float)
        self.c = np.array([lk.c for lk in self.links], dtype=float)
        self.gamma_ev = np.array([od.gamma_ev for od in self.od_pairs], dtype=float)
        self.gamma_ncd = np.array([od.gamma_ncd for od in self.od_pairs], dtype=float)

        n_links = len(self.links)
        route_od, route_cols, self.route_slices = [], [], []
        route_offset = []
        for w, rs in enumerate(self.routes):
            route_offset.append(len(route_od))
            self.route_slices.append(slice(len(route_od), len(route_od) + len(rs)))
            for r in rs:
                col = np.zeros(n_links)
                for lid in r.links:
                    col[self.link_index[lid]] += 1.0
                route_cols.append(col)
                route_od.append(w)
        self.route_od = np.array(route_od, dtype=int)
        self.route_links = (
            np.array(route_cols).T if route_cols else np.zeros((n_links, 0))
        )

        path_od, path_route, path_station, self.path_slices = [], [], [], []
        for w, ps in enumerate(self.extended_paths):
            self.path_slices.append(slice(len(path_od), len(path_od) + len(ps)))
            for p in ps:
                path_od.append(w)
                path_route.append(route_offset[w] + p.route)
                path_station.append(self.node_index[p.charge_node])
        self.path_od = np.array(path_od, dtype=int)
        self.path_route = np.array(path_route, dtype=int)
        self.path_station = np.array(path_station, dtype=int)
        self.path_links = self.route_links[:, self.path_route]
        self.station_paths = np.zeros((len(self.nodes), len(path_od)))
        self.station_paths[self.path_station, np.arange(len(path_od))] = 1.0

    @property
    def n_routes(self) -> int:
        return len(self.route_od)

    @property
    def n_paths(self) -> int:
        return len(self.path_od)

    def flat_shares(self, profile: FlowProfile) -> tuple[np.ndarray, np.ndarray]:
        profile.check(self)
        q = np.concatenate(profile.q) if profile.q else np.zeros(0)
        q0 = np.concatenate(profile.q0) if profile.q0 else np.zeros(0)
        return q.astype(float), q0.astype(float)

    def split_shares(self, q: np.ndarray, q0: np.ndarray) -> FlowProfile:
        return FlowProfile(
            [np.array(q[s], dtype=float) for s in self.path_slices],
            [np.array(q0[s], dtype=float) for s in self.route_slices],
        )

    def uniform_profile(self, allowed: np.ndarray | None = None) -> FlowProfile:
        q = np.zeros(self.n_paths)
        for s in self.path_slices:
            mask = np.ones(s.stop - s.start, bool) if allowed is None else allowed[s]
            if mask.any():
                q[s][mask] = 1.0 / mask.sum()
        q0 = np.zeros(self.n_routes)
        for s in self.route_slices:
            q0[s] = 1.0 / (s.stop - s.start)
        return self.split_shares(q, q0)

    def describe_path(self, w: int, k: int) -> str:
        p = self.extended_paths[w][k]
        route = self.routes[w][p.route]
        return "-".join(str(n) for n in route.nodes) + f"@{p.charge_node}"

    def describe_route(self, w: int, k: int) -> str:
        return "-".join(str(n) for n in self.routes[w][k].nodes)


def _validate_links(nodes: set, links: Sequence[Link]) -> None:
    seen = set()
    for lk in links:
        if lk.id in seen:
            raise DuplicateLink(f"duplicate link id {lk.id}")
        seen.add(lk.id)
        if lk.source not in nodes or lk.target not in nodes:
            raise InvalidLink(f"link {lk.id} references an unknown node")
        if lk.source == lk.target:
            raise InvalidLink(f"link {lk.id} is a self-loop")
        if not (math.isfinite(lk.d) and lk.d > 0):
            raise InvalidLink(f"link {lk.id}: length d must be positive")
        if not (math.isfinite(lk.c) and lk.c > 0):
            raise InvalidLink(f"link {lk.id}: capacity c must be positive")


def _validate_od(nodes: set, od: ODPair) -> None:
    if od.origin not in nodes or od.dest not in nodes:
        raise ValidationError(f"O-D ({od.origin},{od.dest}) references an unknown node", "od_nodes")
    if od.origin == od.dest:
        raise ValidationError(f"O-D ({od.origin},{od.dest}): origin equals destination", "od_distinct")
    for name, g in (("gamma_ev", od.gamma_ev), ("gamma_ncd", od.gamma_ncd)):
        if not (math.isfinite(g) and g >= 0):
            raise ValidationError(f"O-D ({od.origin},{od.dest}): {name} must be finite and >= 0", name)
    if od.total <= 0:
        raise ValidationError(f"O-D ({od.origin},{od.dest}) has no demand", "od_demand")


def enumerate_routes(
    links: Sequence[Link],
    od: ODPair,
    max_routes: int,
    max_hops: int | None = None,
    od_index: int = 0,
) -> list[Route]:
    """Up to ``max_routes`` simple paths, shortest total length first.

    Ties are broken by the node sequence, then by the link id sequence (which
    only matters for parallel links).
    """
    g = nx.MultiDiGraph()
    for lk in links:
        g.add_edge(lk.source, lk.target, key=lk.id, d=lk.d)
    if od.origin not in g or od.dest not in g:
        return []
    found = []
    for edges in nx.all_simple_edge_paths(g, od.origin, od.dest, cutoff=max_hops):
        nodes = (edges[0][0],) + tuple(e[1] for e in edges)
        link_ids = tuple(e[2] for e in edges)
        length = math.fsum(g.edges[e]["d"] for e in edges)
        found.append((length, nodes, link_ids))
    found.sort()
    return [Route(od_index, lids, nodes) for _, nodes, lids in found[:max_routes]]


def build_extended_paths(
    routes: Sequence[Sequence[Route]],
    charging_nodes: Iterable[int],
    od_pairs: Sequence[ODPair] | None = None,
    origin_charging: bool = False,
) -> list[list[ExtendedPath]]:
    eligible = set(charging_nodes)
    out = []
    for w, rs in enumerate(routes):
        paths = []
        for k, r in enumerate(rs):
            candidates = r.nodes if origin_charging else r.nodes[1:]
            for node in sorted(set(candidates) & eligible):
                paths.append(ExtendedPath(w, k, node))
        if od_pairs is not None and od_pairs[w].gamma_ev > 0 and not paths:
            od = od_pairs[w]
            raise NoChargingOption(
                f"O-D ({od.origin},{od.dest}) has EV demand but no route passes a charging-eligible node"
            )
        out.append(paths)
    return out


def build_network(
    nodes: Iterable[int],
    links: Sequence[Link],
    od_pairs: Sequence[ODPair],
    charging_nodes: Iterable[int] | None = None,
    route_cfg: RouteConfig | None = None,
) -> Network:
    cfg = route_cfg or RouteConfig()
    node_set = set(nodes)
    _validate_links(node_set, links)
    for od in od_pairs:
        _validate_od(node_set, od)
    eligible = node_set if charging_nodes is None else set(charging_nodes)
    if not eligible <= node_set:
        raise ValidationError("charging-eligible set contains unknown nodes", "eligible_nodes")

    ranked = []
    for w, od in enumerate(od_pairs):
        rs = enumerate_routes(links, od, cfg.max_routes_per_od, cfg.max_hops, od_index=w)
        if not rs:
            raise DisconnectedOD(f"no route from {od.origin} to {od.dest}")
        ranked.append(rs)

    if cfg.max_routes_total is not None:
        if cfg.max_routes_total < len(od_pairs):
            raise ValidationError("max_routes_total is smaller than the number of O-D pairs", "route_cfg")
        kept = [[] for _ in ranked]
        total, rank = 0, 0
        while total < cfg.max_routes_total and any(rank < len(rs) for rs in ranked):
            for w, rs in enumerate(ranked):
                if rank < len(rs) and total < cfg.max_routes_total:
                    kept[w].append(rs[rank])
                    total += 1
            rank += 1
        ranked = kept

    paths = build_extended_paths(ranked, eligible, od_pairs, cfg.origin_charging)
    return Network(node_set, links, od_pairs, ranked, paths, eligible)


def link_and_station_flows(
    network: Network, h_ev: np.ndarray, h_ncd: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised aggregation from absolute strategy flows."""
    v = network.path_links @ h_ev + network.route_links @ h_ncd
    load = np.bincount(network.path_station, weights=h_ev, minlength=len(network.nodes))
    return v, load


def aggregate_flows(
    network: Network,
    profile: FlowProfile,
    demands: tuple[Sequence[float], Sequence[float]] | None = None,
) -> tuple[dict[int, float], dict[int, float]]:
    """Link flows and station loads induced by a profile.

    ``demands`` optionally overrides the (EV, NCD) demand per O-D pair.
    """
    q, q0 = network.flat_shares(profile)
    g_ev, g_ncd = network.gamma_ev, network.gamma_ncd
    if demands is not None:
        g_ev = np.asarray(demands[0], dtype=float)
        g_ncd = np.asarray(demands[1], dtype=float)
        if len(g_ev) != len(network.od_pairs) or len(g_ncd) != len(network.od_pairs):
            raise DimensionMismatch("demand vectors do not match the O-D pairs")
    v, load = link_and_station_flows(network, g_ev[network.path_od] * q, g_ncd[network.route_od] * q0)
    link_flow = {lk.id: float(v[i]) for i, lk in enumerate(network.links)}
    station_load = {n: float(load[i]) for i, n in enumerate(network.nodes)}
    return link_flow, station_load
