"""Multi-modal network model.

A network is built from uni-modal layers (one per travel mode) that are
merged into a single directed graph and linked with switch edges wherever
nodes of different layers sit close enough together.  Switch edges carry a
set of pre-conditions (possession, parking, rental, storage, cost) that a
user must satisfy to traverse them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence


class Mode(str, Enum):
    WALK = "walk"
    BIKE = "bike"
    CAR = "car"
    TRANSIT = "transit"

    def __str__(self) -> str:  # keep file formats readable
        return self.value


#: Modes a user can physically carry along (and park).
VEHICLE_MODES = frozenset({Mode.CAR, Mode.BIKE})


class EdgeKind(str, Enum):
    STREET = "street"
    TRANSIT_LEG = "transit_leg"
    SWITCH_LINK = "switch_link"


class GraphError(Exception):
    """Base class for network construction errors."""


class OverlappingIds(GraphError):
    """Two layers share a node or edge id without a merge directive."""


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    modes: frozenset = frozenset()
    is_switch: bool = False
    link_radius: Optional[float] = None  # per-node override of the graph delta

    def distance_to(self, other: "Node") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class SwitchConditions:
    """Pre-conditions guarding a switch edge.

    ``required_possession`` demands the user carry that mode (or rent it on
    the spot when ``rental_available``).  Carried vehicles must either be
    parked at the near node (``parking_available``) or taken along
    (mode listed in ``storage_for``).  ``switch_cost`` is charged against the
    user's budget; ``max_cost`` is an optional extra cap on the charge.
    """

    required_possession: Optional[Mode] = None
    parking_available: bool = False
    rental_available: bool = False
    storage_for: frozenset = frozenset()
    switch_cost: float = 0.0
    switch_time: float = 0.0
    max_cost: Optional[float] = None

    def __post_init__(self):
        if self.switch_time < 0:
            raise ValueError("switch_time must be >= 0")
        if self.switch_cost < 0:
            raise ValueError("switch_cost must be >= 0")


@dataclass(frozen=True)
class Edge:
    id: str
    from_node: str
    to_node: str
    modes: frozenset = frozenset()
    kind: EdgeKind = EdgeKind.STREET
    length: float = 0.0
    free_flow_time: float = 0.0  # seconds at free flow, car traversal
    capacity: float = math.inf  # concurrent vehicles
    bpr_alpha: float = 0.15
    bpr_beta: float = 4.0
    monetary_cost: float = 0.0
    switch_conditions: Optional[SwitchConditions] = None
    line_id: Optional[str] = None  # transit legs only
    leg_index: Optional[int] = None

    @property
    def is_road(self) -> bool:
        return self.kind is EdgeKind.STREET and Mode.CAR in self.modes


@dataclass(frozen=True)
class TransitLine:
    """A scheduled line: run ``j`` departs ``stops[k]`` at
    ``departures[j] + sum(leg_times[:k])``."""

    id: str
    stops: tuple
    departures: tuple
    leg_times: tuple
    vehicle_capacity: int

    def __post_init__(self):
        if len(self.stops) < 2:
            raise ValueError(f"line {self.id}: needs at least 2 stops")
        if len(self.leg_times) != len(self.stops) - 1:
            raise ValueError(f"line {self.id}: leg_times must have len(stops)-1 entries")
        if any(t <= 0 for t in self.leg_times):
            raise ValueError(f"line {self.id}: leg times must be positive")
        if any(b <= a for a, b in zip(self.departures, self.departures[1:])):
            raise ValueError(f"line {self.id}: departures must be strictly increasing")

    def stop_offset(self, leg_index: int) -> float:
        """Seconds from a run's start until it departs stops[leg_index]."""
        return sum(self.leg_times[:leg_index])

    def leg_departures(self, leg_index: int) -> list:
        off = self.stop_offset(leg_index)
        return [d + off for d in self.departures]


@dataclass(frozen=True)
class UserProfile:
    id: str = "default"
    owns_car: bool = False
    owns_bike: bool = False
    budget: float = math.inf
    objective_weights: tuple = (1.0, 0.0, 0.0)  # (time, money, transfers)
    walk_speed: float = 1.4  # m/s
    bike_speed: float = 4.0  # m/s

    def __post_init__(self):
        w = self.objective_weights
        if len(w) != 3 or any(x < 0 for x in w):
            raise ValueError("objective_weights must be 3 nonnegative numbers")
        total = sum(w)
        if total <= 0:
            raise ValueError("objective_weights must not all be zero")
        if abs(total - 1.0) > 1e-9:
            object.__setattr__(self, "objective_weights", tuple(x / total for x in w))

    def initial_carrying(self) -> frozenset:
        carrying = set()
        if self.owns_car:
            carrying.add(Mode.CAR)
        if self.owns_bike:
            carrying.add(Mode.BIKE)
        return frozenset(carrying)


# ---------------------------------------------------------------------------
# Spatial index
# ---------------------------------------------------------------------------


class _KDNode:
    __slots__ = ("point", "node_id", "axis", "left", "right")

    def __init__(self, point, node_id, axis):
        self.point = point
        self.node_id = node_id
        self.axis = axis
        self.left = None
        self.right = None


class KDTree:
    """2-d tree over node positions supporting radius queries."""

    def __init__(self, items: Iterable[tuple]):
        # items: (x, y, node_id)
        self.root = self._build([(float(x), float(y), i) for x, y, i in items], 0)

    def _build(self, items, depth):
        if not items:
            return None
        axis = depth % 2
        items.sort(key=lambda it: (it[axis], it[2]))
        mid = len(items) // 2
        x, y, node_id = items[mid]
        node = _KDNode((x, y), node_id, axis)
        node.left = self._build(items[:mid], depth + 1)
        node.right = self._build(items[mid + 1:], depth + 1)
        return node

    def within(self, x: float, y: float, radius: float) -> list:
        """Ids of points at Euclidean distance <= radius, sorted by
        (distance, id)."""
        if radius < 0:
            return []
        out = []
        r2 = radius * radius
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node is None:
                continue
            dx = node.point[0] - x
            dy = node.point[1] - y
            d2 = dx * dx + dy * dy
            if d2 <= r2:
                out.append((math.sqrt(d2), node.node_id))
            delta = (x, y)[node.axis] - node.point[node.axis]
            near, far = (node.left, node.right) if delta < 0 else (node.right, node.left)
            stack.append(near)
            if delta * delta <= r2:
                stack.append(far)
        out.sort()
        return [node_id for _, node_id in out]


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------


@dataclass
class UnimodalLayer:
    """One mode's nodes and edges prior to merging."""

    mode: Mode
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)


class MultiModalGraph:
    """Merged multi-modal network.

    Immutable after construction; safe for concurrent readers.
    """

    def __init__(self, nodes: Sequence[Node], edges: Sequence[Edge],
                 lines: Sequence[TransitLine] = (), link_radius: float = 100.0):
        self.nodes = {n.id: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise OverlappingIds("duplicate node ids in graph input")
        self.edges = {e.id: e for e in edges}
        if len(self.edges) != len(edges):
            raise OverlappingIds("duplicate edge ids in graph input")
        self.lines = {ln.id: ln for ln in lines}
        self.link_radius = link_radius
        self._out = {nid: [] for nid in self.nodes}
        for e in self.edges.values():
            if e.from_node in self._out:
                self._out[e.from_node].append(e.id)
        for nid in self._out:
            self._out[nid].sort()
        self._index = KDTree((n.x, n.y, n.id) for n in self.nodes.values())
        self._max_road_speed = self._compute_max_road_speed()

    def outgoing(self, node_id: str) -> list:
        return [self.edges[eid] for eid in self._out.get(node_id, ())]

    def nearest_within(self, x: float, y: float, radius: float) -> list:
        return self._index.within(x, y, radius)

    def _compute_max_road_speed(self) -> float:
        best = 0.0
        for e in self.edges.values():
            if e.kind is EdgeKind.STREET and e.free_flow_time > 0 and e.length > 0:
                best = max(best, e.length / e.free_flow_time)
            elif e.kind is EdgeKind.TRANSIT_LEG and e.line_id in self.lines:
                line = self.lines[e.line_id]
                leg_t = line.leg_times[e.leg_index]
                a = self.nodes.get(e.from_node)
                b = self.nodes.get(e.to_node)
                if a and b and leg_t > 0:
                    best = max(best, a.distance_to(b) / leg_t)
        return best

    def max_speed(self, profile: Optional[UserProfile] = None) -> float:
        """Upper bound on straight-line travel speed anywhere in the network."""
        best = self._max_road_speed
        if profile is not None:
            best = max(best, profile.walk_speed, profile.bike_speed)
        return best if best > 0 else 1.0


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def nearest_within(graph: MultiModalGraph, point: tuple, radius: float) -> list:
    """Node ids within ``radius`` meters of ``point``, sorted by distance then id."""
    return graph.nearest_within(point[0], point[1], radius)


def _pair_radius(u: Node, v: Node, default: float) -> float:
    ru = u.link_radius if u.link_radius is not None else default
    rv = v.link_radius if v.link_radius is not None else default
    return min(ru, rv)


def _switch_edge_id(u: str, v: str) -> str:
    return f"sw:{u}:{v}"


def link_switch_nodes(nodes: dict, edges: dict, link_radius: float,
                      scm_defaults: SwitchConditions,
                      overrides: Optional[dict] = None) -> tuple:
    """Insert switch-link edges between nearby nodes with differing mode sets.

    Returns updated (nodes, edges) dicts.  Existing switch links between a
    pair are kept as-is (no duplicates), which also makes the pass
    idempotent.  ``overrides`` maps (from_id, to_id) to SwitchConditions.
    """
    overrides = overrides or {}
    existing = {(e.from_node, e.to_node) for e in edges.values()
                if e.kind is EdgeKind.SWITCH_LINK}
    index = KDTree((n.x, n.y, n.id) for n in nodes.values())
    max_radius = link_radius
    for n in nodes.values():
        if n.link_radius is not None:
            max_radius = max(max_radius, n.link_radius)

    new_edges = dict(edges)
    switched = set()
    for u in sorted(nodes.values(), key=lambda n: n.id):
        for vid in index.within(u.x, u.y, max_radius):
            if vid <= u.id:
                continue  # handle each unordered pair once
            v = nodes[vid]
            if u.modes == v.modes:
                continue
            dist = u.distance_to(v)
            if dist > _pair_radius(u, v, link_radius):
                continue
            for a, b in ((u.id, v.id), (v.id, u.id)):
                if (a, b) in existing:
                    continue
                scm = overrides.get((a, b), scm_defaults)
                eid = _switch_edge_id(a, b)
                new_edges[eid] = Edge(
                    id=eid, from_node=a, to_node=b,
                    modes=frozenset(), kind=EdgeKind.SWITCH_LINK,
                    length=dist, free_flow_time=scm.switch_time,
                    capacity=math.inf, monetary_cost=scm.switch_cost,
                    switch_conditions=scm,
                )
                existing.add((a, b))
            switched.add(u.id)
            switched.add(v.id)

    new_nodes = dict(nodes)
    for nid in switched:
        if not new_nodes[nid].is_switch:
            new_nodes[nid] = replace(new_nodes[nid], is_switch=True)
    return new_nodes, new_edges


def merge_graphs(layers: Sequence[UnimodalLayer], link_radius: float = 100.0,
                 scm_defaults: Optional[SwitchConditions] = None,
                 lines: Sequence[TransitLine] = (),
                 overrides: Optional[dict] = None,
                 shared_ids: Iterable[str] = ()) -> MultiModalGraph:
    """Merge uni-modal layers into one graph and link switch nodes.

    Node ids appearing in more than one layer raise OverlappingIds unless
    listed in ``shared_ids`` (or ``shared_ids="all"``), in which case the
    node is united and its mode sets merged; united nodes must agree on
    position.
    """
    if link_radius <= 0:
        raise ValueError("link_radius must be positive")
    scm_defaults = scm_defaults or SwitchConditions()
    share_all = shared_ids == "all"
    shared = set() if share_all else set(shared_ids)

    nodes: dict = {}
    for layer in layers:
        for n in layer.nodes:
            n = replace(n, modes=frozenset(n.modes) | {layer.mode})
            if n.id in nodes:
                if not (share_all or n.id in shared):
                    raise OverlappingIds(f"node id {n.id!r} appears in multiple layers")
                prev = nodes[n.id]
                if (prev.x, prev.y) != (n.x, n.y):
                    raise OverlappingIds(
                        f"shared node {n.id!r} has conflicting positions")
                nodes[n.id] = replace(prev, modes=prev.modes | n.modes)
            else:
                nodes[n.id] = n

    edges: dict = {}
    for layer in layers:
        for e in layer.edges:
            if e.id in edges:
                raise OverlappingIds(f"edge id {e.id!r} appears in multiple layers")
            edges[e.id] = e

    nodes, edges = link_switch_nodes(nodes, edges, link_radius, scm_defaults, overrides)
    return MultiModalGraph(list(nodes.values()), list(edges.values()),
                           lines=lines, link_radius=link_radius)


# ---------------------------------------------------------------------------
# Switch-condition evaluation
# ---------------------------------------------------------------------------


def usable_modes(edge: Edge, profile: UserProfile, carrying: frozenset) -> list:
    """Travel modes a user in the given possession can take on a non-switch edge.

    A carried car pins the user to driving; a carried bike may be ridden or
    pushed; transit refuses carried cars (bikes are vetted at the boarding
    switch link).
    """
    if edge.kind is EdgeKind.SWITCH_LINK:
        return []
    if edge.kind is EdgeKind.TRANSIT_LEG:
        return [] if Mode.CAR in carrying else [Mode.TRANSIT]
    out = []
    has_car = Mode.CAR in carrying
    for mode in (Mode.WALK, Mode.BIKE, Mode.CAR):
        if mode not in edge.modes:
            continue
        if mode is Mode.CAR:
            if has_car:
                out.append(mode)
        elif mode is Mode.BIKE:
            if Mode.BIKE in carrying and not has_car:
                out.append(mode)
        else:
            if not has_car:
                out.append(mode)
    return out


def switch_outcomes(edge: Edge, profile: UserProfile, possession,
                    remaining_budget: Optional[float] = None,
                    far_modes: Optional[frozenset] = None) -> list:
    """Feasible far-side possession states for a switch link.

    Each carried vehicle must be parked (``parking_available``) or carried
    through; carrying through needs the new side to accommodate it: the
    vehicle's mode is usable there (``far_modes``), a bike can be pushed
    where walking is possible, or the switch offers explicit storage
    (``storage_for``, e.g. a bike rack on a bus).  Where both park and
    carry hold, both outcomes are returned; [] when any condition fails.
    """
    scm = edge.switch_conditions or SwitchConditions()
    budget = remaining_budget if remaining_budget is not None else profile.budget
    if scm.switch_cost > budget:
        return []
    if scm.max_cost is not None and scm.switch_cost > scm.max_cost:
        return []

    carrying = set(possession.carrying)
    rented = None
    need = scm.required_possession
    if need is not None and need not in carrying:
        if not scm.rental_available:
            return []
        rented = need

    def can_carry_through(mode: Mode) -> bool:
        if mode in scm.storage_for:
            return True
        if far_modes is None:
            return False
        return mode in far_modes or (mode is Mode.BIKE and Mode.WALK in far_modes)

    # Per-vehicle dispositions: carry through and/or park at the near node.
    choices = []
    for mode in sorted(carrying, key=lambda m: m.value):
        opts = []
        if can_carry_through(mode):
            opts.append(("carry", mode))
        if scm.parking_available:
            opts.append(("park", mode))
        if not opts:
            return []
        choices.append(opts)

    outcomes = [possession]
    for opts in choices:
        nxt = []
        for state in outcomes:
            for action, mode in opts:
                if action == "carry":
                    nxt.append(state)
                else:
                    nxt.append(state.park(mode, edge.from_node))
        outcomes = nxt
    if rented is not None:
        outcomes = [state.acquire(rented) for state in outcomes]
    # Deduplicate while keeping deterministic order.
    seen = set()
    unique = []
    for state in outcomes:
        if state not in seen:
            seen.add(state)
            unique.append(state)
    return unique


def evaluate_scm(edge: Edge, profile: UserProfile, tau: float, possession,
                 remaining_budget: Optional[float] = None,
                 far_modes: Optional[frozenset] = None) -> bool:
    """True iff the edge is admissible for this user at time ``tau``.

    Switch links check the full condition set; other edges check that some
    travel mode is permitted by the edge's mode labels and the user's
    possession.  ``far_modes`` is the destination node's mode set, used to
    decide whether carried vehicles can come along.  Pure function of its
    arguments.
    """
    if edge.kind is EdgeKind.SWITCH_LINK:
        return bool(switch_outcomes(edge, profile, possession,
                                    remaining_budget, far_modes))
    return bool(usable_modes(edge, profile, possession.carrying))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationFinding:
    severity: str
    subject: str
    message: str

    def __str__(self):
        return f"[{self.severity}] {self.subject}: {self.message}"


def validate_graph(graph: MultiModalGraph) -> list:
    """Structural checks; an empty list means all invariants hold."""
    findings = []
    for e in sorted(graph.edges.values(), key=lambda e: e.id):
        for endpoint in (e.from_node, e.to_node):
            if endpoint not in graph.nodes:
                findings.append(ValidationFinding(
                    "error", f"edge {e.id}", f"endpoint {endpoint!r} does not exist"))
        if e.kind is EdgeKind.STREET:
            if e.free_flow_time <= 0 and Mode.CAR in e.modes:
                findings.append(ValidationFinding(
                    "error", f"edge {e.id}", "car edge needs free_flow_time > 0"))
            if Mode.CAR in e.modes and (e.capacity <= 0 or math.isinf(e.capacity)):
                findings.append(ValidationFinding(
                    "error", f"edge {e.id}", "car edge needs finite capacity > 0"))
            if e.length < 0:
                findings.append(ValidationFinding(
                    "error", f"edge {e.id}", "negative length"))
        if e.bpr_alpha < 0:
            findings.append(ValidationFinding(
                "error", f"edge {e.id}", "bpr_alpha must be >= 0"))
        if e.bpr_beta < 1:
            findings.append(ValidationFinding(
                "error", f"edge {e.id}", "bpr_beta must be >= 1"))
        if e.kind is EdgeKind.SWITCH_LINK:
            u = graph.nodes.get(e.from_node)
            v = graph.nodes.get(e.to_node)
            if u and v and u.modes == v.modes:
                findings.append(ValidationFinding(
                    "error", f"edge {e.id}", "switch link between identical mode sets"))
        if e.kind is EdgeKind.TRANSIT_LEG and e.line_id not in graph.lines:
            findings.append(ValidationFinding(
                "error", f"edge {e.id}", f"unknown transit line {e.line_id!r}"))
    for line in sorted(graph.lines.values(), key=lambda ln: ln.id):
        for stop in line.stops:
            if stop not in graph.nodes:
                findings.append(ValidationFinding(
                    "error", f"line {line.id}", f"stop {stop!r} does not exist"))
        if line.vehicle_capacity <= 0:
            findings.append(ValidationFinding(
                "error", f"line {line.id}", "vehicle_capacity must be positive"))
    # Transit stops that cannot be reached from any other mode.
    for line in sorted(graph.lines.values(), key=lambda ln: ln.id):
        for stop in line.stops:
            node = graph.nodes.get(stop)
            if node is None:
                continue
            reachable = any(
                e.kind is EdgeKind.SWITCH_LINK or e.kind is EdgeKind.TRANSIT_LEG
                or e.modes & (node.modes - {Mode.TRANSIT})
                for e in graph.edges.values() if e.to_node == stop)
            boarding_only = node.modes <= {Mode.TRANSIT}
            if boarding_only and not reachable:
                findings.append(ValidationFinding(
                    "warning", f"line {line.id}", f"stop {stop!r} is unreachable"))
    return findings
