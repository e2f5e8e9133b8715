"""Multi-objective route search over a multi-modal network.

The search is a label-setting A* over (node, possession, last travel mode)
states with vector costs (travel time, money, transfers).  Edge expansion is
delegated to a provider: the user-optimal provider admits every edge whose
switch conditions hold, while the socially-considerate provider additionally
prunes road edges whose predicted load (committed plans plus background
traffic over a lookahead window) reaches the social-ratio share of capacity,
and transit legs whose matched departure is already full.

Costs are evaluated at edge-entry time.  When the cost model is
time-dependent (committed intervals, stepped background profiles), arriving
later can occasionally be cheaper, so classic prefix-dominance pruning is
unsound; the search then falls back to an exact mode that only prunes
provably redundant labels.  Providers report whether their cost model is
FIFO-safe; ``assume_fifo=True`` forces the fast mode regardless.
"""

from __future__ import annotations

import heapq
import itertools
import math
from bisect import bisect_left
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .congestion import (
    BackgroundProfile,
    CongestionLedger,
    PlanLeg,
    background_volume,
    bpr_travel_time,
)
from .network import (
    Edge,
    EdgeKind,
    Mode,
    MultiModalGraph,
    UserProfile,
    switch_outcomes,
    usable_modes,
)

Leg = PlanLeg


class RoutingError(Exception):
    pass


class NoPath(RoutingError):
    """Destination unreachable under the given edge provider."""


class EmptySet(RoutingError):
    pass


# ---------------------------------------------------------------------------
# Cost vectors and possession
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostVector:
    travel_time: float = 0.0
    money: float = 0.0
    transfers: int = 0

    def __add__(self, other: "CostVector") -> "CostVector":
        return CostVector(self.travel_time + other.travel_time,
                          self.money + other.money,
                          self.transfers + other.transfers)

    def as_tuple(self) -> tuple:
        return (self.travel_time, self.money, self.transfers)


def dominates(a: CostVector, b: CostVector, epsilon: float = 0.0) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere.

    With ``epsilon > 0`` the comparison is relaxed multiplicatively
    (a <= b * (1 + epsilon) componentwise, still strictly better in one
    un-relaxed component).
    """
    at, bt = a.as_tuple(), b.as_tuple()
    scale = 1.0 + epsilon
    if not all(x <= y * scale for x, y in zip(at, bt)):
        return False
    return any(x < y for x, y in zip(at, bt))


def _dominates_or_equal(a: tuple, b: tuple, epsilon: float = 0.0) -> bool:
    scale = 1.0 + epsilon
    return all(x <= y * scale for x, y in zip(a, b))


@dataclass(frozen=True)
class PossessionState:
    """Vehicles the user has along, and where dropped ones are parked."""

    carrying: frozenset = frozenset()
    parked: tuple = ()  # sorted ((mode, node_id), ...)

    def park(self, mode: Mode, node_id: str) -> "PossessionState":
        if mode not in self.carrying:
            raise ValueError(f"cannot park {mode}: not carried")
        parked = tuple(sorted(self.parked + ((mode, node_id),)))
        return PossessionState(self.carrying - {mode}, parked)

    def acquire(self, mode: Mode) -> "PossessionState":
        return PossessionState(self.carrying | {mode}, self.parked)

    @classmethod
    def for_profile(cls, profile: UserProfile) -> "PossessionState":
        return cls(carrying=profile.initial_carrying())


@dataclass(frozen=True)
class RouteQuery:
    origin: str
    destination: str
    depart: float
    profile: UserProfile


@dataclass(frozen=True)
class RoutePlan:
    legs: tuple = ()
    cost: CostVector = CostVector()
    fallback_used: bool = False

    def ledger_legs(self) -> tuple:
        return self.legs

    def modes_used(self) -> frozenset:
        return frozenset(l.mode for l in self.legs if l.mode is not None)

    def edge_ids(self) -> tuple:
        return tuple(l.edge_id for l in self.legs)


# ---------------------------------------------------------------------------
# Edge providers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expansion:
    edge: Edge
    mode: Optional[Mode]  # None for switch links
    arrival: float
    money: float
    possession: PossessionState
    run_index: Optional[int] = None
    leg_index: Optional[int] = None
    from_fallback: bool = False


@dataclass
class ProviderDiagnostics:
    fallback_activations: int = 0


class _BaseProvider:
    """Shared traversal-cost machinery for both routing policies."""

    policy = "uo"

    def __init__(self, graph: MultiModalGraph,
                 background: Optional[BackgroundProfile] = None,
                 live_volumes: Optional[dict] = None):
        self.graph = graph
        self.background = background
        self.live_volumes = live_volumes or {}
        self._leg_deps: dict = {}

    # -- cost model -------------------------------------------------------

    def road_volume(self, edge: Edge, tau: float) -> float:
        return (background_volume(self.background, edge, tau)
                + self.live_volumes.get(edge.id, 0))

    def car_time(self, edge: Edge, tau: float) -> float:
        # The entering vehicle contributes to the volume it experiences.
        return bpr_travel_time(edge, self.road_volume(edge, tau) + 1.0)

    def leg_departures(self, line_id: str, leg_index: int) -> list:
        key = (line_id, leg_index)
        deps = self._leg_deps.get(key)
        if deps is None:
            deps = self.graph.lines[line_id].leg_departures(leg_index)
            self._leg_deps[key] = deps
        return deps

    def match_run(self, edge: Edge, tau: float) -> Optional[int]:
        """Index of the next scheduled departure of this leg at/after tau."""
        deps = self.leg_departures(edge.line_id, edge.leg_index)
        j = bisect_left(deps, tau)
        return j if j < len(deps) else None

    def run_is_full(self, edge: Edge, run_index: int) -> bool:
        return False

    # -- admission --------------------------------------------------------

    def admits_road(self, edge: Edge, tau: float) -> bool:
        return True

    def far_modes(self, edge: Edge) -> frozenset:
        node = self.graph.nodes.get(edge.to_node)
        return node.modes if node is not None else frozenset()

    def scm_feasible(self, edge: Edge, profile: UserProfile, tau: float,
                     possession: PossessionState, budget_left: float) -> bool:
        if edge.kind is EdgeKind.SWITCH_LINK:
            return bool(switch_outcomes(edge, profile, possession, budget_left,
                                        self.far_modes(edge)))
        return bool(usable_modes(edge, profile, possession.carrying))

    def congestion_ratio(self, edge: Edge, tau: float) -> float:
        """Used only to rank edges when the fallback rule fires."""
        if edge.kind is EdgeKind.TRANSIT_LEG:
            return 0.0
        if edge.is_road and not math.isinf(edge.capacity):
            return self.road_volume(edge, tau) / edge.capacity
        return 0.0

    def admissible_edges(self, node_id: str, profile: UserProfile, tau: float,
                         possession: PossessionState,
                         budget_left: Optional[float] = None) -> list:
        if budget_left is None:
            budget_left = profile.budget
        out = []
        for edge in self.graph.outgoing(node_id):
            if not self.scm_feasible(edge, profile, tau, possession, budget_left):
                continue
            if edge.kind is EdgeKind.TRANSIT_LEG:
                run = self.match_run(edge, tau)
                if run is not None and self.run_is_full(edge, run):
                    continue
                out.append(edge)
            elif edge.kind is EdgeKind.SWITCH_LINK:
                out.append(edge)
            else:
                modes = usable_modes(edge, profile, possession.carrying)
                if edge.is_road and not self.admits_road(edge, tau):
                    modes = [m for m in modes if m is not Mode.CAR]
                if modes:
                    out.append(edge)
        return out

    # -- expansion --------------------------------------------------------

    def expand(self, node_id: str, profile: UserProfile, tau: float,
               possession: PossessionState, money_spent: float) -> list:
        budget_left = profile.budget - money_spent
        expansions = []
        feasible = []  # SCM-feasible edges, for the fallback rule
        admitted_any = False
        for edge in self.graph.outgoing(node_id):
            if not self.scm_feasible(edge, profile, tau, possession, budget_left):
                continue
            feasible.append(edge)
            exps = self._expand_edge(edge, profile, tau, possession, budget_left)
            if exps:
                admitted_any = True
                expansions.extend(exps)
        if not admitted_any and feasible:
            fallback = self._fallback_edge(feasible, profile, tau, possession,
                                           budget_left)
            if fallback is not None:
                expansions.extend(fallback)
        return expansions

    def _fallback_edge(self, feasible, profile, tau, possession, budget_left):
        return None

    def _expand_edge(self, edge: Edge, profile: UserProfile, tau: float,
                     possession: PossessionState, budget_left: float,
                     ignore_pruning: bool = False) -> list:
        out = []
        if edge.kind is EdgeKind.SWITCH_LINK:
            scm = edge.switch_conditions
            for poss in switch_outcomes(edge, profile, possession, budget_left,
                                        self.far_modes(edge)):
                out.append(Expansion(edge, None, tau + scm.switch_time,
                                     scm.switch_cost, poss))
            return out
        if edge.kind is EdgeKind.TRANSIT_LEG:
            if Mode.CAR in possession.carrying:
                return []
            run = self.match_run(edge, tau)
            if run is None:
                return []
            # Vehicle capacity is a hard constraint, never bypassed by the
            # fallback rule.
            if self.run_is_full(edge, run):
                return []
            deps = self.leg_departures(edge.line_id, edge.leg_index)
            line = self.graph.lines[edge.line_id]
            arrival = deps[run] + line.leg_times[edge.leg_index]
            if edge.monetary_cost > budget_left:
                return []
            out.append(Expansion(edge, Mode.TRANSIT, arrival, edge.monetary_cost,
                                 possession, run_index=run,
                                 leg_index=edge.leg_index))
            return out
        modes = usable_modes(edge, profile, possession.carrying)
        if not ignore_pruning and edge.is_road and not self.admits_road(edge, tau):
            modes = [m for m in modes if m is not Mode.CAR]
        if edge.monetary_cost > budget_left:
            return []
        for mode in modes:
            if mode is Mode.CAR:
                dt = self.car_time(edge, tau)
            elif mode is Mode.BIKE:
                dt = edge.length / profile.bike_speed
            else:
                dt = edge.length / profile.walk_speed
            out.append(Expansion(edge, mode, tau + dt, edge.monetary_cost,
                                 possession))
        return out

    @property
    def fifo_safe(self) -> bool:
        return self.background is None or self.background.is_constant()


class UOProvider(_BaseProvider):
    """User-optimal edge provider: switch conditions only."""

    policy = "uo"


class SOProvider(_BaseProvider):
    """Socially-considerate edge provider.

    Road edges are admitted only while the predicted vehicle count
    (committed plans overlapping the lookahead window, plus background
    traffic) stays strictly below ``alpha`` times the edge capacity.
    Walk, bike and switch edges are never congestion-pruned.  When pruning
    empties a node's admissible set, the least-congested switch-feasible
    edge is admitted and the activation is counted in the diagnostics.

    ``live_volumes`` should cover only uncommitted traffic (user-optimal
    vehicles); committed vehicles already appear as ledger intervals and
    would otherwise be counted twice.
    """

    policy = "so"

    def __init__(self, graph: MultiModalGraph, ledger: CongestionLedger,
                 alpha: float, background: Optional[BackgroundProfile] = None,
                 live_volumes: Optional[dict] = None,
                 lookahead: Optional[float] = None,
                 diagnostics: Optional[ProviderDiagnostics] = None):
        super().__init__(graph, background, live_volumes)
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        self.ledger = ledger
        self.alpha = alpha
        self.lookahead = lookahead
        self.diagnostics = diagnostics if diagnostics is not None else ProviderDiagnostics()

    def predicted_count(self, edge: Edge, tau: float) -> float:
        committed = self.ledger.predicted_count(edge, tau, self.lookahead)
        return committed + background_volume(self.background, edge, tau)

    def road_volume(self, edge: Edge, tau: float) -> float:
        # Committed plans feed the cost model as well as the admission rule.
        return (super().road_volume(edge, tau)
                + self.ledger.predicted_count(edge, tau, self.lookahead))

    def admits_road(self, edge: Edge, tau: float) -> bool:
        if math.isinf(edge.capacity):
            return True
        return self.predicted_count(edge, tau) < self.alpha * edge.capacity

    def run_is_full(self, edge: Edge, run_index: int) -> bool:
        line = self.graph.lines[edge.line_id]
        occupancy = self.ledger.run_occupancy(edge.line_id, run_index,
                                              edge.leg_index)
        return occupancy >= line.vehicle_capacity

    def congestion_ratio(self, edge: Edge, tau: float) -> float:
        if edge.kind is EdgeKind.TRANSIT_LEG:
            run = self.match_run(edge, tau)
            if run is None:
                return math.inf
            line = self.graph.lines[edge.line_id]
            occ = self.ledger.run_occupancy(edge.line_id, run, edge.leg_index)
            return occ / line.vehicle_capacity
        if edge.is_road and not math.isinf(edge.capacity):
            return self.predicted_count(edge, tau) / edge.capacity
        return 0.0

    def _fallback_edge(self, feasible, profile, tau, possession, budget_left):
        ranked = sorted(feasible,
                        key=lambda e: (self.congestion_ratio(e, tau), e.id))
        for edge in ranked:
            exps = self._expand_edge(edge, profile, tau, possession, budget_left,
                                     ignore_pruning=True)
            if exps:
                self.diagnostics.fallback_activations += 1
                return [replace(x, from_fallback=True) for x in exps]
        return None

    @property
    def fifo_safe(self) -> bool:
        if not super().fifo_safe:
            return False
        return all(len(t) == 0 for t in self.ledger._trees.values())


def make_uo_provider(graph: MultiModalGraph,
                     background: Optional[BackgroundProfile] = None,
                     live_volumes: Optional[dict] = None) -> UOProvider:
    return UOProvider(graph, background, live_volumes)


def make_so_provider(graph: MultiModalGraph, ledger: CongestionLedger,
                     alpha: float, **kwargs) -> SOProvider:
    return SOProvider(graph, ledger, alpha, **kwargs)


def outgoing_edges_uo(graph: MultiModalGraph, node_id: str, profile: UserProfile,
                      tau: float, possession: PossessionState) -> list:
    """Edges leaving the node that pass the switch-condition check."""
    return UOProvider(graph).admissible_edges(node_id, profile, tau, possession)


def outgoing_edges_so(graph: MultiModalGraph, ledger: CongestionLedger,
                      node_id: str, profile: UserProfile, tau: float,
                      possession: PossessionState, alpha: float,
                      background: Optional[BackgroundProfile] = None,
                      lookahead: Optional[float] = None,
                      diagnostics: Optional[ProviderDiagnostics] = None) -> list:
    """Admissible edges under the social policy, including the fallback rule."""
    provider = SOProvider(graph, ledger, alpha, background=background,
                          lookahead=lookahead, diagnostics=diagnostics)
    edges = provider.admissible_edges(node_id, profile, tau, possession)
    if edges:
        return edges
    # Mirror the expansion-level fallback: admit the least congested
    # switch-feasible edge so agents are never stranded by pruning alone.
    feasible = [e for e in graph.outgoing(node_id)
                if provider.scm_feasible(e, profile, tau, possession,
                                         profile.budget)]
    if not feasible:
        return []
    exps = provider._fallback_edge(feasible, profile, tau, possession,
                                   profile.budget)
    return [exps[0].edge] if exps else []


# ---------------------------------------------------------------------------
# Heuristic
# ---------------------------------------------------------------------------


def max_network_speed(graph: MultiModalGraph, profile: UserProfile) -> float:
    """Straight-line speed bound used by the admissible heuristic.

    Switch links that cover distance in zero time would break the bound, so
    their presence degrades it to infinity (heuristic becomes zero).
    """
    best = graph.max_speed(profile)
    for e in graph.edges.values():
        if e.kind is EdgeKind.SWITCH_LINK and e.length > 0:
            scm = e.switch_conditions
            t = scm.switch_time if scm else 0.0
            if t <= 0:
                return math.inf
            best = max(best, e.length / t)
    return best


def heuristic(graph: MultiModalGraph, node_id: str, query: RouteQuery,
              speed_bound: Optional[float] = None) -> CostVector:
    """Per-component lower bound on the cost to reach the destination."""
    node = graph.nodes[node_id]
    dest = graph.nodes[query.destination]
    vmax = speed_bound if speed_bound is not None else max_network_speed(
        graph, query.profile)
    if math.isinf(vmax):
        return CostVector(0.0, 0.0, 0)
    return CostVector(node.distance_to(dest) / vmax, 0.0, 0)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


class _Label:
    __slots__ = ("node", "possession", "tau", "cost", "last_mode", "parent",
                 "expansion", "visited", "fallback", "alive")

    def __init__(self, node, possession, tau, cost, last_mode, parent,
                 expansion, visited, fallback):
        self.node = node
        self.possession = possession
        self.tau = tau
        self.cost = cost
        self.last_mode = last_mode
        self.parent = parent
        self.expansion = expansion
        self.visited = visited
        self.fallback = fallback
        self.alive = True


def _travel_mode(expansion: Expansion) -> Optional[Mode]:
    return expansion.mode


def _reconstruct(label: _Label, query: RouteQuery) -> RoutePlan:
    legs = []
    cur = label
    while cur.parent is not None:
        exp = cur.expansion
        legs.append(Leg(edge_id=exp.edge.id, mode=exp.mode,
                        enter=cur.parent.tau, exit=cur.tau,
                        line_id=exp.edge.line_id, run_index=exp.run_index,
                        leg_index=exp.leg_index))
        cur = cur.parent
    legs.reverse()
    return RoutePlan(legs=tuple(legs), cost=label.cost, fallback_used=label.fallback)


def moa_star(graph: MultiModalGraph, query: RouteQuery, edge_provider,
             epsilon: float = 0.0, assume_fifo: Optional[bool] = None,
             max_labels: int = 2_000_000, use_heuristic: bool = True) -> list:
    """All Pareto-optimal route plans from the query origin to destination.

    Returns one representative plan per non-dominated cost vector, sorted by
    (time, money, transfers).  ``epsilon`` enables relaxed dominance
    pruning; ``assume_fifo=None`` auto-selects the fast pruning mode when
    the provider's cost model is FIFO-safe.

    Raises NoPath when the destination is unreachable.
    """
    if query.origin not in graph.nodes:
        raise KeyError(f"unknown origin {query.origin!r}")
    if query.destination not in graph.nodes:
        raise KeyError(f"unknown destination {query.destination!r}")
    profile = query.profile
    if query.origin == query.destination:
        return [RoutePlan(legs=(), cost=CostVector(0.0, 0.0, 0))]

    fifo = edge_provider.fifo_safe if assume_fifo is None else assume_fifo
    vmax = max_network_speed(graph, profile)
    dest = graph.nodes[query.destination]
    h_cache: dict = {}

    def h_time(node_id: str) -> float:
        if not use_heuristic:
            return 0.0
        val = h_cache.get(node_id)
        if val is None:
            if math.isinf(vmax):
                val = 0.0
            else:
                val = graph.nodes[node_id].distance_to(dest) / vmax
            h_cache[node_id] = val
        return val

    start_poss = PossessionState.for_profile(profile)
    start_state = (query.origin, start_poss)
    visited0 = frozenset((start_state,)) if not fifo else None
    root = _Label(query.origin, start_poss, query.depart,
                  CostVector(), None, None, None, visited0, False)

    counter = itertools.count()
    heap = []

    def push(label: _Label):
        f = (label.cost.travel_time + h_time(label.node),
             label.cost.money, label.cost.transfers)
        heapq.heappush(heap, (f, next(counter), label))

    # state key -> list of labels (mutually unpruned)
    state_labels: dict = {(query.origin, start_poss, None): [root]}
    solutions: list = []  # (cost_tuple, label)

    def solution_pruned(f: tuple) -> bool:
        return any(_dominates_or_equal(s, f, epsilon) for s, _ in solutions)

    def state_pruned(key, label: _Label) -> bool:
        bucket = state_labels.get(key)
        if not bucket:
            return False
        ct = label.cost.as_tuple()
        for other in bucket:
            if not other.alive:
                continue
            ot = other.cost.as_tuple()
            if fifo:
                if _dominates_or_equal(ot, ct, epsilon):
                    return True
            else:
                # Arriving at a different time changes future edge costs, so
                # only same-time labels whose forbidden sets are no larger
                # are provably redundant.
                if (ot[0] == ct[0] and ot[1] <= ct[1] and ot[2] <= ct[2]
                        and other.visited <= label.visited):
                    return True
        return False

    def state_insert(key, label: _Label):
        bucket = state_labels.setdefault(key, [])
        ct = label.cost.as_tuple()
        keep = []
        for other in bucket:
            if not other.alive:
                continue
            ot = other.cost.as_tuple()
            if fifo and _dominates_or_equal(ct, ot) and ct != ot:
                other.alive = False
                continue
            if (not fifo and ct[0] == ot[0] and ct[1] <= ot[1] and ct[2] <= ot[2]
                    and ct != ot and label.visited <= other.visited):
                other.alive = False
                continue
            keep.append(other)
        keep.append(label)
        state_labels[key] = keep

    push(root)
    expanded = 0
    while heap:
        f, _, label = heapq.heappop(heap)
        if not label.alive:
            continue
        if solution_pruned(f):
            continue
        if label.node == query.destination:
            ct = label.cost.as_tuple()
            if any(_dominates_or_equal(s, ct) for s, _ in solutions):
                continue
            solutions[:] = [(s, l) for s, l in solutions
                            if not (_dominates_or_equal(ct, s) and ct != s)]
            solutions.append((ct, label))
            continue
        expanded += 1
        if expanded > max_labels:
            raise RoutingError(f"label budget exhausted ({max_labels})")
        for exp in edge_provider.expand(label.node, profile, label.tau,
                                        label.possession, label.cost.money):
            mode = _travel_mode(exp)
            transfers = label.cost.transfers
            last_mode = label.last_mode
            if mode is not None:
                if last_mode is not None and mode is not last_mode:
                    transfers += 1
                last_mode = mode
            cost = CostVector(exp.arrival - query.depart,
                              label.cost.money + exp.money, transfers)
            if cost.money > profile.budget + 1e-9:
                continue
            nxt_state = (exp.edge.to_node, exp.possession)
            visited = label.visited
            if not fifo:
                if nxt_state in visited:
                    continue
                visited = visited | {nxt_state}
            key = (exp.edge.to_node, exp.possession, last_mode)
            child = _Label(exp.edge.to_node, exp.possession, exp.arrival, cost,
                           last_mode, label, exp, visited,
                           label.fallback or exp.from_fallback)
            fv = (cost.travel_time + h_time(child.node), cost.money, transfers)
            if solution_pruned(fv):
                continue
            if state_pruned(key, child):
                continue
            state_insert(key, child)
            push(child)

    if not solutions:
        raise NoPath(f"no route from {query.origin!r} to {query.destination!r}")
    solutions.sort(key=lambda s: s[0])
    return [_reconstruct(label, query) for _, label in solutions]


def select_route(pareto: Iterable[RoutePlan], profile: UserProfile) -> RoutePlan:
    """Pick one plan by weighted normalized cost.

    Each component is scaled by its maximum over the set (zero maxima
    contribute nothing); ties break lexicographically on
    (time, money, transfers) and then on the edge-id sequence.
    """
    plans = list(pareto)
    if not plans:
        raise EmptySet("cannot select from an empty Pareto set")
    scales = [max(p.cost.as_tuple()[k] for p in plans) for k in range(3)]
    weights = profile.objective_weights

    def score(plan: RoutePlan) -> float:
        total = 0.0
        for w, c, s in zip(weights, plan.cost.as_tuple(), scales):
            if s > 0:
                total += w * (c / s)
        return total

    return min(plans, key=lambda p: (score(p), p.cost.as_tuple(), p.edge_ids()))
