"""Text formats for scenarios and planner solutions.

Both formats are line oriented: ``[section]`` headers, ``key = value`` lines
in keyed sections and whitespace separated rows in tabular ones. ``#``
starts a comment. Floats are written with ``repr`` so a save/load round
trip reproduces every number bit for bit.
"""

from __future__ import annotations

import io
import json
import math
import os
from pathlib import Path
from typing import IO, Union

import numpy as np

from .costs import BehaviourWeights
from .design import Design
from .equilibrium import MODES, EquilibriumResult
from .errors import ParseError, ValidationError, VersionMismatch
from .generators import generate_nd_like  # noqa: F401  (re-exported)
from .network import FlowProfile, Link, ODPair, RouteConfig
from .planner import DesignEvaluation, PlannerSolution
from .scenario import FORMAT_VERSION, Scenario, make_scenario

Source = Union[str, os.PathLike, IO[str]]

SOLUTION_VERSION = 1

SCENARIO_SECTIONS = {
    "meta": ("version", "seed"),
    "params": ("lambda1", "lambda2", "lambda3", "mu", "pi", "budget"),
    "nodes": ("id", "e", "t", "eligible"),
    "links": ("id", "from", "to", "d", "c"),
    "od": ("origin", "dest", "gamma_ev", "gamma_ncd"),
}
# Route enumeration settings; optional, defaults from RouteConfig.
ROUTING_KEYS = ("max_routes_per_od", "max_routes_total", "max_hops", "origin_charging")
TABLES = ("nodes", "links", "od")


# --------------------------------------------------------------------------
# Low-level reading


def _read_text(source: Source) -> str:
    if hasattr(source, "read"):
        return source.read()
    try:
        return Path(source).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {source}: {exc.strerror or exc}") from exc


def _write_text(text: str, sink) -> None:
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text)


def _sections(text: str, allowed: dict[str, tuple | None]) -> dict[str, list[tuple[int, str]]]:
    """Split into ``{section: [(line_no, content), ...]}``; rejects unknown sections."""
    out: dict[str, list[tuple[int, str]]] = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("unterminated section header", no)
            current = line[1:-1].strip()
            if current not in allowed:
                raise ParseError(f"unknown section [{current}]", no, current)
            if current in out:
                raise ParseError(f"duplicate section [{current}]", no, current)
            out[current] = []
            continue
        if current is None:
            raise ParseError("content before the first section header", no)
        out[current].append((no, line))
    return out


def _keyed(lines, section: str, allowed: tuple, required: tuple) -> dict[str, tuple[int, str]]:
    out = {}
    for no, line in lines:
        if "=" not in line:
            raise ParseError(f"expected 'key = value' in [{section}]", no)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise ParseError(f"unknown field {key!r} in [{section}]", no, key)
        if key in out:
            raise ParseError(f"duplicate field {key!r}", no, key)
        out[key] = (no, value)
    for key in required:
        if key not in out:
            raise ParseError(f"missing field {key!r} in [{section}]", None, key)
    return out


def _float(value: str, no, field) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"{field}: expected a number, got {value!r}", no, field) from None


def _int(value: str, no, field) -> int:
    try:
        v = float(value)
    except ValueError:
        raise ParseError(f"{field}: expected an integer, got {value!r}", no, field) from None
    if not math.isfinite(v) or v != int(v):
        raise ParseError(f"{field}: expected an integer, got {value!r}", no, field)
    return int(v)


def _bool(value: str, no, field) -> bool:
    low = value.lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ParseError(f"{field}: expected a boolean, got {value!r}", no, field)


def _rows(lines, section: str, columns: tuple) -> list[tuple[int, list[str]]]:
    out = []
    for no, line in lines:
        parts = line.split()
        if len(parts) != len(columns):
            raise ParseError(
                f"[{section}] row needs {len(columns)} fields ({' '.join(columns)}), got {len(parts)}", no
            )
        out.append((no, parts))
    return out


def _check_version(lines, kind: str, supported: int) -> int:
    meta = dict((k, v) for k, v in _keyed(lines, "meta", ("version", "seed", "method", "mode"), ("version",)).items())
    no, raw = meta["version"]
    version = _int(raw, no, "version")
    if version != supported:
        hint = (
            f"load it with the release that wrote it and save it again"
            if version < supported
            else "upgrade this package"
        )
        raise VersionMismatch(
            f"{kind} format version {version} is not supported (expected {supported}); {hint}"
        )
    return version


# --------------------------------------------------------------------------
# Scenarios


def parse_scenario(text: str) -> Scenario:
    allowed = dict(SCENARIO_SECTIONS)
    secs = _sections(text, allowed)
    for name in SCENARIO_SECTIONS:
        if name not in secs:
            raise ParseError(f"missing section [{name}]", None, name)
    _check_version(secs["meta"], "scenario", FORMAT_VERSION)
    meta = _keyed(secs["meta"], "meta", ("version", "seed"), ("version",))
    seed = _int(*reversed(meta["seed"]), "seed") if "seed" in meta else 0

    params = _keyed(secs["params"], "params", SCENARIO_SECTIONS["params"] + ROUTING_KEYS, SCENARIO_SECTIONS["params"])
    p = {k: _float(v, no, k) for k, (no, v) in params.items() if k not in ROUTING_KEYS and k != "budget"}
    no, raw = params["budget"]
    budget = _int(raw, no, "budget")
    defaults = RouteConfig()
    route_kw = {}
    for key in ("max_routes_per_od", "max_routes_total", "max_hops"):
        if key in params:
            no, raw = params[key]
            route_kw[key] = None if raw.lower() == "none" else _int(raw, no, key)
    if "origin_charging" in params:
        no, raw = params["origin_charging"]
        route_kw["origin_charging"] = _bool(raw, no, "origin_charging")
    if route_kw.get("max_routes_per_od", 1) is None:
        route_kw["max_routes_per_od"] = defaults.max_routes_per_od
    route_cfg = RouteConfig(**route_kw)

    nodes, e, t, eligible = [], {}, {}, []
    for no, (nid, ev, tv, el) in _rows(secs["nodes"], "nodes", SCENARIO_SECTIONS["nodes"]):
        n = _int(nid, no, "id")
        if n in e:
            raise ParseError(f"duplicate node id {n}", no, "id")
        nodes.append(n)
        e[n] = _float(ev, no, "e")
        t[n] = _float(tv, no, "t")
        if _bool(el, no, "eligible"):
            eligible.append(n)
    links = []
    for no, (lid, a, b, d, c) in _rows(secs["links"], "links", SCENARIO_SECTIONS["links"]):
        links.append(Link(_int(lid, no, "id"), _int(a, no, "from"), _int(b, no, "to"), _float(d, no, "d"), _float(c, no, "c")))
    od_pairs = []
    for no, (o, d, ge, gn) in _rows(secs["od"], "od", SCENARIO_SECTIONS["od"]):
        od_pairs.append(ODPair(_int(o, no, "origin"), _int(d, no, "dest"), _float(ge, no, "gamma_ev"), _float(gn, no, "gamma_ncd")))

    return make_scenario(
        nodes,
        links,
        od_pairs,
        e,
        t,
        eligible=eligible,
        weights=BehaviourWeights(p["lambda1"], p["lambda2"], p["lambda3"]),
        mu=p["mu"],
        pi=p["pi"],
        budget=budget,
        seed=seed,
        route_cfg=route_cfg,
    )


def load_scenario(source: Source) -> Scenario:
    """Read and validate a scenario from a path or an open text stream."""
    return parse_scenario(_read_text(source))


def dumps_scenario(scenario: Scenario) -> str:
    w = scenario.weights
    cfg = scenario.route_cfg
    net = scenario.network
    lines = [
        "[meta]",
        f"version = {scenario.version}",
        f"seed = {scenario.seed}",
        "",
        "[params]",
        f"lambda1 = {w.lambda1!r}",
        f"lambda2 = {w.lambda2!r}",
        f"lambda3 = {w.lambda3!r}",
        f"mu = {scenario.mu!r}",
        f"pi = {scenario.pi!r}",
        f"budget = {scenario.budget}",
        f"max_routes_per_od = {cfg.max_routes_per_od}",
        f"max_routes_total = {cfg.max_routes_total}",
        f"max_hops = {cfg.max_hops}",
        f"origin_charging = {str(cfg.origin_charging).lower()}",
        "",
        "[nodes]",
        "# id e t eligible",
    ]
    for n in scenario.nodes:
        lines.append(f"{n} {scenario.e[n]!r} {scenario.t[n]!r} {int(n in scenario.eligible)}")
    lines += ["", "[links]", "# id from to d c"]
    for lk in net.links:
        lines.append(f"{lk.id} {lk.source} {lk.target} {lk.d!r} {lk.c!r}")
    lines += ["", "[od]", "# origin dest gamma_ev gamma_ncd"]
    for od in net.od_pairs:
        lines.append(f"{od.origin} {od.dest} {od.gamma_ev!r} {od.gamma_ncd!r}")
    return "\n".join(lines) + "\n"


def save_scenario(scenario: Scenario, sink) -> None:
    _write_text(dumps_scenario(scenario), sink)


# --------------------------------------------------------------------------
# Solutions

SOLUTION_SECTIONS = {
    "meta": None,
    "design": ("node", "x", "y"),
    "flows": ("od", "class", "strategy", "share"),
    "summary": None,
    "diagnostics": None,
    "slack": ("node", "slack", "load"),
    "trace": None,
    "info": None,
}
DIAGNOSTIC_KEYS = ("gap", "iterations", "potential", "converged", "eq_theta", "eq_mode", "budget_ok", "feasible")


def _json_safe(value):
    try:
        json.dumps(value, allow_nan=True)
        return True
    except (TypeError, ValueError):
        return False


def dumps_solution(sol: PlannerSolution) -> str:
    ev = sol.evaluation
    eq = ev.eq
    lines = [
        "[meta]",
        f"version = {SOLUTION_VERSION}",
        f"method = {sol.method}",
        f"mode = {sol.design.mode}",
        "",
        "[design]",
        "# node x y",
    ]
    for n in sorted(set(sol.design.x) | set(sol.design.y)):
        lines.append(f"{n} {sol.design.x.get(n, 0.0)!r} {sol.design.y.get(n, 0.0)!r}")
    lines += ["", "[flows]", "# od class strategy share"]
    classes = [("ev", sol.profile.q), ("ncd", sol.profile.q0)]
    if sol.decomposed_q0 is not None:
        classes.append(("ncd_decomposed", sol.decomposed_q0))
    for cls, shares in classes:
        for w, arr in enumerate(shares):
            for k, v in enumerate(arr):
                lines.append(f"{w} {cls} {k} {float(v)!r}")
    lines += ["", "[summary]", f"theta = {sol.theta!r}", "", "[diagnostics]"]
    lines += [
        f"gap = {eq.gap!r}",
        f"iterations = {eq.iterations}",
        f"potential = {eq.potential_value!r}",
        f"converged = {str(eq.converged).lower()}",
        f"eq_theta = {eq.theta!r}",
        f"eq_mode = {eq.mode}",
        f"budget_ok = {str(ev.budget_ok).lower()}",
        f"feasible = {str(ev.feasible).lower()}",
        f"eval_theta = {ev.theta!r}",
        "",
        "[slack]",
        "# node slack load",
    ]
    for n in sorted(ev.profit_slack):
        lines.append(f"{n} {ev.profit_slack[n]!r} {ev.loads.get(n, 0.0)!r}")
    lines += ["", "[trace]"]
    lines += [f"step = {json.dumps(step, sort_keys=True)}" for step in sol.trace if _json_safe(step)]
    lines += ["", "[info]"]
    for key in sorted(sol.info):
        if _json_safe(sol.info[key]):
            lines.append(f"{key} = {json.dumps(sol.info[key], sort_keys=True)}")
    return "\n".join(lines) + "\n"


def save_solution(sol: PlannerSolution, sink) -> None:
    _write_text(dumps_solution(sol), sink)


def parse_solution(text: str) -> PlannerSolution:
    secs = _sections(text, SOLUTION_SECTIONS)
    for name in ("meta", "design", "flows", "summary", "diagnostics"):
        if name not in secs:
            raise ParseError(f"missing section [{name}]", None, name)
    _check_version(secs["meta"], "solution", SOLUTION_VERSION)
    meta = _keyed(secs["meta"], "meta", ("version", "method", "mode"), ("version", "method", "mode"))

    x, y = {}, {}
    for no, (n, xv, yv) in _rows(secs["design"], "design", SOLUTION_SECTIONS["design"]):
        node = _int(n, no, "node")
        xf, yf = _float(xv, no, "x"), _float(yv, no, "y")
        if xf:
            x[node] = xf
        if yf or xf:
            y[node] = yf
    design = Design(x, y, meta["mode"][1])

    shares: dict[str, dict[int, dict[int, float]]] = {"ev": {}, "ncd": {}, "ncd_decomposed": {}}
    for no, (w, cls, k, v) in _rows(secs["flows"], "flows", SOLUTION_SECTIONS["flows"]):
        if cls not in shares:
            raise ParseError(f"unknown class {cls!r}", no, "class")
        shares[cls].setdefault(_int(w, no, "od"), {})[_int(k, no, "strategy")] = _float(v, no, "share")
    n_od = max([*shares["ev"], *shares["ncd"], *shares["ncd_decomposed"], -1]) + 1

    def arrays(table):
        out = []
        for w in range(n_od):
            row = table.get(w, {})
            if row and sorted(row) != list(range(len(row))):
                raise ParseError(f"O-D {w}: strategy indices are not contiguous", None, "strategy")
            out.append(np.array([row[k] for k in range(len(row))], dtype=float))
        return out

    profile = FlowProfile(arrays(shares["ev"]), arrays(shares["ncd"]))

    summary = _keyed(secs["summary"], "summary", ("theta",), ("theta",))
    theta = _float(summary["theta"][1], summary["theta"][0], "theta")
    diag_keys = DIAGNOSTIC_KEYS + ("eval_theta",)
    diag = _keyed(secs["diagnostics"], "diagnostics", diag_keys, diag_keys)
    d = {k: v for k, (_, v) in diag.items()}
    if d["eq_mode"] not in MODES:
        raise ParseError(f"unknown equilibrium mode {d['eq_mode']!r}", diag["eq_mode"][0], "eq_mode")
    eq = EquilibriumResult(
        profile=profile,
        gap=_float(d["gap"], diag["gap"][0], "gap"),
        iterations=_int(d["iterations"], diag["iterations"][0], "iterations"),
        potential_value=_float(d["potential"], diag["potential"][0], "potential"),
        converged=_bool(d["converged"], diag["converged"][0], "converged"),
        theta=_float(d["eq_theta"], diag["eq_theta"][0], "eq_theta"),
        mode=d["eq_mode"],
    )
    slack, loads = {}, {}
    for no, (n, s, ld) in _rows(secs.get("slack", []), "slack", SOLUTION_SECTIONS["slack"]):
        node = _int(n, no, "node")
        slack[node] = _float(s, no, "slack")
        loads[node] = _float(ld, no, "load")
    evaluation = DesignEvaluation(
        theta=_float(d["eval_theta"], diag["eval_theta"][0], "eval_theta"),
        eq=eq,
        budget_ok=_bool(d["budget_ok"], diag["budget_ok"][0], "budget_ok"),
        profit_slack=slack,
        feasible=_bool(d["feasible"], diag["feasible"][0], "feasible"),
        loads=loads,
    )
    trace = []
    for no, line in secs.get("trace", []):
        key, _, value = line.partition("=")
        if key.strip() != "step":
            raise ParseError("trace lines must read 'step = {...}'", no, key.strip())
        trace.append(_json_value(value, no, "step"))
    info = {}
    for no, line in secs.get("info", []):
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError("expected 'key = value' in [info]", no)
        info[key.strip()] = _json_value(value, no, key.strip())
    decomposed = arrays(shares["ncd_decomposed"]) if shares["ncd_decomposed"] else None
    return PlannerSolution(design, profile, theta, evaluation, trace, meta["method"][1], info, decomposed)


def _json_value(text: str, no, field):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise ParseError(f"{field}: malformed value", no, field) from None


def load_solution(source: Source) -> PlannerSolution:
    return parse_solution(_read_text(source))


def load_design(source: Source) -> Design:
    """Read only the design part of a solution file."""
    secs = _sections(_read_text(source), SOLUTION_SECTIONS)
    if "design" not in secs:
        raise ParseError("missing section [design]", None, "design")
    mode = "integer"
    if "meta" in secs:
        meta = _keyed(secs["meta"], "meta", ("version", "method", "mode"), ())
        mode = meta.get("mode", (None, "integer"))[1]
    x, y = {}, {}
    for no, (n, xv, yv) in _rows(secs["design"], "design", SOLUTION_SECTIONS["design"]):
        node = _int(n, no, "node")
        x[node] = _float(xv, no, "x")
        y[node] = _float(yv, no, "y")
    return Design(x, y, mode)
