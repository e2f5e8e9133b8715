"""Scenario documents and result files.

A scenario is one self-contained JSON document (sections: nodes, edges,
transit_lines, switch_overrides, background_volumes, zones, job_windows,
profiles, simulation).  The loader validates every cross-reference, builds
the merged graph (switch links are generated from node proximity, transit
leg edges from the line schedules), and returns an immutable Scenario.
Column orders and formats of the emitted CSV files are documented in
docs/file_formats.md; floats are written with six decimal places so
repeated runs produce byte-identical output.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

from .congestion import DAY_S, BackgroundProfile, StepProfile
from .network import (
    Edge,
    EdgeKind,
    Mode,
    MultiModalGraph,
    Node,
    SwitchConditions,
    TransitLine,
    UserProfile,
    link_switch_nodes,
    validate_graph,
)
from .simulation import (
    DemandZone,
    JobWindow,
    RunResult,
    SimulationConfig,
    SweepResult,
    compute_metrics,
)


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


class ValidationError(ScenarioError):
    def __init__(self, findings):
        self.findings = list(findings)
        super().__init__("; ".join(str(f) for f in self.findings))


class IoError(ScenarioError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    document: dict  # normalized source document
    graph: MultiModalGraph = field(compare=False)
    zones: tuple = field(compare=False, default=())
    job_windows: dict = field(compare=False, default_factory=dict)
    background: Optional[BackgroundProfile] = field(compare=False, default=None)
    config: SimulationConfig = field(compare=False, default_factory=SimulationConfig)
    scm_defaults: SwitchConditions = field(compare=False,
                                           default_factory=SwitchConditions)
    profiles: tuple = field(compare=False, default=())  # ((UserProfile, weight),)


def _mode(value: str, where: str) -> Mode:
    try:
        return Mode(value)
    except ValueError:
        raise ParseError(where, f"unknown mode {value!r}")


def _modes(values, where: str) -> frozenset:
    return frozenset(_mode(v, where) for v in values)


def _scm_from_doc(doc: dict, where: str) -> SwitchConditions:
    known = {"required_possession", "parking_available", "rental_available",
             "storage_for", "switch_cost", "switch_time", "max_cost"}
    unknown = set(doc) - known - {"from", "to"}
    if unknown:
        raise ParseError(where, f"unknown switch-condition fields {sorted(unknown)}")
    req = doc.get("required_possession")
    return SwitchConditions(
        required_possession=_mode(req, where) if req else None,
        parking_available=bool(doc.get("parking_available", False)),
        rental_available=bool(doc.get("rental_available", False)),
        storage_for=_modes(doc.get("storage_for", ()), where),
        switch_cost=float(doc.get("switch_cost", 0.0)),
        switch_time=float(doc.get("switch_time", 0.0)),
        max_cost=None if doc.get("max_cost") is None else float(doc["max_cost"]),
    )


def _profile_from_doc(doc: dict, where: str) -> tuple:
    weight = float(doc.get("weight", 1.0))
    profile = UserProfile(
        id=doc.get("id", "default"),
        owns_car=bool(doc.get("owns_car", False)),
        owns_bike=bool(doc.get("owns_bike", False)),
        budget=float(doc.get("budget", math.inf)),
        objective_weights=tuple(doc.get("objective_weights", (1.0, 0.0, 0.0))),
        walk_speed=float(doc.get("walk_speed", 1.4)),
        bike_speed=float(doc.get("bike_speed", 4.0)),
    )
    return profile, weight


def _build_graph(doc: dict) -> MultiModalGraph:
    link_radius = float(doc.get("link_radius_m", 100.0))
    scm_defaults = _scm_from_doc(doc.get("scm_defaults", {}), "scm_defaults")

    nodes = {}
    for nd in doc.get("nodes", ()):
        where = f"nodes[{nd.get('id')}]"
        if "id" not in nd or "x" not in nd or "y" not in nd:
            raise ParseError(where, "node needs id, x, y")
        if nd["id"] in nodes:
            raise ParseError(where, "duplicate node id")
        nodes[nd["id"]] = Node(
            id=nd["id"], x=float(nd["x"]), y=float(nd["y"]),
            modes=_modes(nd.get("modes", ()), where),
            link_radius=(None if nd.get("link_radius") is None
                         else float(nd["link_radius"])),
        )

    edges = {}
    for ed in doc.get("edges", ()):
        where = f"edges[{ed.get('id')}]"
        for need in ("id", "from", "to"):
            if need not in ed:
                raise ParseError(where, f"edge needs {need!r}")
        if ed["id"] in edges:
            raise ParseError(where, "duplicate edge id")
        kind = EdgeKind(ed.get("kind", "street"))
        scm = None
        if kind is EdgeKind.SWITCH_LINK:
            scm = _scm_from_doc(ed.get("switch_conditions", {}), where)
        elif "switch_conditions" in ed:
            raise ParseError(where, "switch_conditions only valid on switch links")
        capacity = ed.get("capacity")
        edges[ed["id"]] = Edge(
            id=ed["id"], from_node=ed["from"], to_node=ed["to"],
            modes=_modes(ed.get("modes", ()), where), kind=kind,
            length=float(ed.get("length", 0.0)),
            free_flow_time=float(ed.get("free_flow_time", 0.0)),
            capacity=math.inf if capacity is None else float(capacity),
            bpr_alpha=float(ed.get("bpr_alpha", 0.15)),
            bpr_beta=float(ed.get("bpr_beta", 4.0)),
            monetary_cost=float(ed.get("monetary_cost", 0.0)),
            switch_conditions=scm,
        )

    lines = []
    for ld in doc.get("transit_lines", ()):
        where = f"transit_lines[{ld.get('id')}]"
        try:
            line = TransitLine(
                id=ld["id"], stops=tuple(ld["stops"]),
                departures=tuple(float(x) for x in ld["departures"]),
                leg_times=tuple(float(x) for x in ld["leg_times"]),
                vehicle_capacity=int(ld["vehicle_capacity"]),
            )
        except (KeyError, ValueError) as exc:
            raise ParseError(where, str(exc))
        lines.append(line)
        leg_cost = float(ld.get("leg_cost", 0.0))
        for k in range(len(line.stops) - 1):
            eid = f"tl:{line.id}:{k}"
            a = nodes.get(line.stops[k])
            b = nodes.get(line.stops[k + 1])
            length = a.distance_to(b) if a and b else 0.0
            edges[eid] = Edge(
                id=eid, from_node=line.stops[k], to_node=line.stops[k + 1],
                modes=frozenset({Mode.TRANSIT}), kind=EdgeKind.TRANSIT_LEG,
                length=length, free_flow_time=line.leg_times[k],
                monetary_cost=leg_cost, line_id=line.id, leg_index=k,
            )

    overrides = {}
    for ov in doc.get("switch_overrides", ()):
        where = f"switch_overrides[{ov.get('from')}->{ov.get('to')}]"
        if "from" not in ov or "to" not in ov:
            raise ParseError(where, "override needs from and to")
        overrides[(ov["from"], ov["to"])] = _scm_from_doc(ov, where)

    nodes, edges = link_switch_nodes(nodes, edges, link_radius, scm_defaults,
                                     overrides)
    return MultiModalGraph(list(nodes.values()), list(edges.values()),
                           lines=lines, link_radius=link_radius)


def _normalize_document(doc: dict) -> dict:
    """Stable-order copy of the source document used for equality and
    serialization."""
    out = json.loads(json.dumps(doc, sort_keys=True))
    for section in ("nodes", "edges", "transit_lines", "zones"):
        if section in out:
            out[section] = sorted(out[section], key=lambda d: str(d.get("id")))
    if "switch_overrides" in out:
        out["switch_overrides"] = sorted(
            out["switch_overrides"],
            key=lambda d: (str(d.get("from")), str(d.get("to"))))
    if "profiles" in out:
        out["profiles"] = sorted(out["profiles"],
                                 key=lambda d: d.get("id", "default"))
    return out


def parse_scenario(doc: dict, name: str = "scenario") -> Scenario:
    """Build and validate a Scenario from a parsed document."""
    if not isinstance(doc, dict):
        raise ParseError(name, "scenario document must be an object")
    doc = _normalize_document(doc)
    graph = _build_graph(doc)

    findings = list(validate_graph(graph))

    zones = []
    for zd in doc.get("zones", ()):
        where = f"zones[{zd.get('id')}]"
        try:
            zone = DemandZone(
                id=zd["id"], weight=float(zd.get("weight", 1.0)),
                origins=tuple((n, float(w)) for n, w in zd["origins"]),
                job_mix=tuple(sorted((str(j), float(w))
                              for j, w in zd.get("job_mix", {"default": 1.0}).items())),
                destinations=tuple(zd["destinations"]),
            )
        except (KeyError, ValueError) as exc:
            raise ParseError(where, str(exc))
        zones.append(zone)
        for node_id, _ in zone.origins:
            if node_id not in graph.nodes:
                findings.append(_finding(where, f"origin node {node_id!r} does not exist"))
        for node_id in zone.destinations:
            if node_id not in graph.nodes:
                findings.append(_finding(where, f"destination node {node_id!r} does not exist"))

    job_windows = {}
    for job, wd in doc.get("job_windows", {}).items():
        where = f"job_windows[{job}]"
        try:
            onward = tuple(float(x) for x in wd["onward"])
            ret = wd.get("return")
            job_windows[job] = JobWindow(
                onward=onward,
                return_window=None if ret is None else tuple(float(x) for x in ret))
        except (KeyError, ValueError) as exc:
            raise ParseError(where, str(exc))
        if onward[0] >= onward[1]:
            findings.append(_finding(where, "onward window must have start < end"))
    for zone in zones:
        for job, w in zone.job_mix:
            if w > 0 and job not in job_windows:
                findings.append(_finding(
                    f"zones[{zone.id}]", f"no job window for job type {job!r}"))

    per_edge = {}
    period = float(doc.get("background_period_s", DAY_S))
    for edge_id, steps in doc.get("background_volumes", {}).items():
        where = f"background_volumes[{edge_id}]"
        if edge_id not in graph.edges:
            findings.append(_finding(where, "unknown edge"))
            continue
        try:
            parsed = tuple(sorted((float(s), float(e), float(v))
                                  for s, e, v in steps))
        except (TypeError, ValueError) as exc:
            raise ParseError(where, str(exc))
        if any(v < 0 for _, _, v in parsed):
            findings.append(_finding(where, "volumes must be >= 0"))
        if any(s >= e for s, e, _ in parsed):
            findings.append(_finding(where, "steps must have start < end"))
        per_edge[edge_id] = StepProfile(steps=parsed, period=period)
    background = BackgroundProfile(per_edge=per_edge) if per_edge else None

    profiles = tuple(_profile_from_doc(pd, f"profiles[{pd.get('id')}]")
                     for pd in doc.get("profiles", ()))

    sim = doc.get("simulation", {})
    config = SimulationConfig(
        horizon_s=float(sim.get("horizon_s", doc.get("horizon_s", 86400.0))),
        alpha_grid=tuple(float(a) for a in sim.get(
            "alpha_grid", [round(0.1 * i, 1) for i in range(11)])),
        seed=int(sim.get("seed", 0)),
        population=int(sim.get("population", sim.get("P", 100))),
        replan_limit=int(sim.get("replan_limit", 1)),
        lookahead_s=(None if sim.get("lookahead_s") is None
                     else float(sim["lookahead_s"])),
        epsilon=float(sim.get("epsilon", 0.0)),
        assume_fifo=sim.get("assume_fifo"),
        time_bin_s=float(sim.get("time_bin_s", 900.0)),
        jobs=int(sim.get("jobs", 1)),
    )

    errors = [f for f in findings if f.severity == "error"]
    if errors:
        raise ValidationError(errors)

    scm_defaults = _scm_from_doc(doc.get("scm_defaults", {}), "scm_defaults")
    return Scenario(name=doc.get("name", name), document=doc, graph=graph,
                    zones=tuple(zones), job_windows=job_windows,
                    background=background, config=config,
                    scm_defaults=scm_defaults, profiles=profiles)


def _finding(subject: str, message: str):
    from .network import ValidationFinding
    return ValidationFinding("error", subject, message)


def load_scenario(path: str) -> Scenario:
    """Load and fully validate a scenario document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON at line {exc.lineno}: {exc.msg}")
    return parse_scenario(doc, name=os.path.splitext(os.path.basename(path))[0])


def serialize_scenario(scenario: Scenario) -> dict:
    return json.loads(json.dumps(scenario.document))


def save_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(serialize_scenario(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Graph cache documents (build-graph output)
# ---------------------------------------------------------------------------


def graph_to_document(graph: MultiModalGraph) -> dict:
    nodes = []
    for n in sorted(graph.nodes.values(), key=lambda n: n.id):
        nd = {"id": n.id, "x": n.x, "y": n.y,
              "modes": sorted(m.value for m in n.modes),
              "is_switch": n.is_switch}
        if n.link_radius is not None:
            nd["link_radius"] = n.link_radius
        nodes.append(nd)
    edges = []
    for e in sorted(graph.edges.values(), key=lambda e: e.id):
        ed = {"id": e.id, "from": e.from_node, "to": e.to_node,
              "modes": sorted(m.value for m in e.modes), "kind": e.kind.value,
              "length": e.length, "free_flow_time": e.free_flow_time,
              "capacity": None if math.isinf(e.capacity) else e.capacity,
              "bpr_alpha": e.bpr_alpha, "bpr_beta": e.bpr_beta,
              "monetary_cost": e.monetary_cost}
        if e.switch_conditions is not None:
            scm = e.switch_conditions
            ed["switch_conditions"] = {
                "required_possession": (scm.required_possession.value
                                        if scm.required_possession else None),
                "parking_available": scm.parking_available,
                "rental_available": scm.rental_available,
                "storage_for": sorted(m.value for m in scm.storage_for),
                "switch_cost": scm.switch_cost,
                "switch_time": scm.switch_time,
                "max_cost": scm.max_cost,
            }
        if e.line_id is not None:
            ed["line_id"] = e.line_id
            ed["leg_index"] = e.leg_index
        edges.append(ed)
    lines = [{"id": ln.id, "stops": list(ln.stops),
              "departures": list(ln.departures),
              "leg_times": list(ln.leg_times),
              "vehicle_capacity": ln.vehicle_capacity}
             for ln in sorted(graph.lines.values(), key=lambda ln: ln.id)]
    return {"link_radius_m": graph.link_radius, "nodes": nodes,
            "edges": edges, "transit_lines": lines}


def save_graph(graph: MultiModalGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_document(graph), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_graph(path: str) -> MultiModalGraph:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    nodes = []
    for nd in doc["nodes"]:
        nodes.append(Node(id=nd["id"], x=float(nd["x"]), y=float(nd["y"]),
                          modes=_modes(nd.get("modes", ()), nd["id"]),
                          is_switch=bool(nd.get("is_switch", False)),
                          link_radius=nd.get("link_radius")))
    edges = []
    for ed in doc["edges"]:
        scm = None
        if ed.get("switch_conditions") is not None:
            scm = _scm_from_doc(ed["switch_conditions"], ed["id"])
        cap = ed.get("capacity")
        edges.append(Edge(
            id=ed["id"], from_node=ed["from"], to_node=ed["to"],
            modes=_modes(ed.get("modes", ()), ed["id"]),
            kind=EdgeKind(ed["kind"]), length=float(ed["length"]),
            free_flow_time=float(ed["free_flow_time"]),
            capacity=math.inf if cap is None else float(cap),
            bpr_alpha=float(ed["bpr_alpha"]), bpr_beta=float(ed["bpr_beta"]),
            monetary_cost=float(ed["monetary_cost"]),
            switch_conditions=scm, line_id=ed.get("line_id"),
            leg_index=ed.get("leg_index")))
    lines = [TransitLine(id=ld["id"], stops=tuple(ld["stops"]),
                         departures=tuple(ld["departures"]),
                         leg_times=tuple(ld["leg_times"]),
                         vehicle_capacity=int(ld["vehicle_capacity"]))
             for ld in doc.get("transit_lines", ())]
    return MultiModalGraph(nodes, edges, lines=lines,
                           link_radius=float(doc.get("link_radius_m", 100.0)))


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


SUMMARY_COLUMNS = ("alpha", "mean_ntt", "var_ntt", "share_walk", "share_bike",
                   "share_car", "share_transit", "finished", "unfinished",
                   "unroutable", "fallbacks", "replans")
AGENT_COLUMNS = ("agent_id", "alpha", "actual_s", "best_s", "ntt", "modes",
                 "finished")
HEATMAP_COLUMNS = ("alpha", "edge_id", "bin_start_s", "volume", "ratio")
DELTA_COLUMNS = ("agent_id", "actual_a_s", "actual_b_s", "delta_s")

_INT_COLUMNS = {"finished", "unfinished", "unroutable", "fallbacks", "replans",
                "volume"}


@dataclass
class ResultsBundle:
    summary: list
    agents: list
    heatmap: list
    deltas: list
    diagnostics: list = field(default_factory=list)


def make_results_bundle(result, graph: MultiModalGraph,
                        time_bin_s: float = 900.0,
                        delta_pair: tuple = (0.0, 1.0)) -> ResultsBundle:
    tables = compute_metrics(result, graph, time_bin_s=time_bin_s,
                             delta_pair=delta_pair)
    diagnostics = []
    runs = result.runs if isinstance(result, SweepResult) else {
        result.alpha: result}
    for alpha in sorted(runs):
        diag = runs[alpha].diagnostics
        diagnostics.append(
            f"alpha={alpha:.6f} fallbacks={diag.fallback_activations} "
            f"replans={diag.replans} ntt_floor_warnings={diag.ntt_floor_warnings}")
        diagnostics.extend(f"alpha={alpha:.6f} {note}" for note in diag.notes)
    return ResultsBundle(summary=tables["summary"], agents=tables["agents"],
                         heatmap=tables["heatmap"], deltas=tables["deltas"],
                         diagnostics=diagnostics)


def _format_cell(column: str, value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, str):
        return value
    if column in _INT_COLUMNS or isinstance(value, int):
        return str(int(value))
    return f"{float(value):.6f}"


def _write_csv(path: str, columns, rows) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_format_cell(c, row.get(c)) for c in columns)
                         + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}")


def write_results(bundle: ResultsBundle, out_dir: str) -> list:
    """Write the result tables; returns the list of files written."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = []
    for name, columns, rows in (
            ("summary.csv", SUMMARY_COLUMNS, bundle.summary),
            ("agents.csv", AGENT_COLUMNS, bundle.agents),
            ("heatmap.csv", HEATMAP_COLUMNS, bundle.heatmap),
            ("deltas.csv", DELTA_COLUMNS, bundle.deltas)):
        path = os.path.join(out_dir, name)
        _write_csv(path, columns, rows)
        manifest.append(path)
    diag_path = os.path.join(out_dir, "diagnostics.txt")
    try:
        with open(diag_path, "w", encoding="utf-8") as fh:
            for line in bundle.diagnostics:
                fh.write(line + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {diag_path}: {exc}")
    manifest.append(diag_path)
    return manifest


def export_heatmap_geojson(run: RunResult, graph: MultiModalGraph,
                           out_path: str, time_bin_s: float = 900.0) -> None:
    """One LineString feature per edge traversed at least once, with the
    peak load ratio and time-binned ratios as properties.  Ratios are
    clamped to [0, 1]; edges without a finite capacity report 0."""
    from .simulation import edge_heatmap_rows

    bins_by_edge: dict = {}
    for row in edge_heatmap_rows(run, graph, time_bin_s):
        bins_by_edge.setdefault(row["edge_id"], []).append(row)

    features = []
    for edge_id in sorted(run.used_edges):
        edge = graph.edges[edge_id]
        a = graph.nodes[edge.from_node]
        b = graph.nodes[edge.to_node]
        rows = bins_by_edge.get(edge_id, [])
        peak = max((r["ratio"] for r in rows), default=0.0)
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString",
                         "coordinates": [[a.x, a.y], [b.x, b.y]]},
            "properties": {
                "edge_id": edge_id,
                "peak_ratio": min(1.0, peak),
                "bin_s": time_bin_s,
                "bin_starts": [r["bin_start_s"] for r in rows],
                "ratios": [min(1.0, r["ratio"]) for r in rows],
            },
        })
    doc = {"type": "FeatureCollection", "features": features}
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {out_path}: {exc}")
