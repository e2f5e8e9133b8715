"""Predicted-congestion state.

Committed route plans are stored per edge as traversal intervals in an
interval tree (a treap keyed by interval start, augmented with the subtree's
maximum end), so that "how many committed vehicles overlap this window"
queries stay cheap as plans accumulate.  Transit occupancy is tracked per
scheduled departure and leg.  Static background-volume profiles stand in
for ambient traffic that is not produced by simulated agents.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .network import Edge, Mode, MultiModalGraph


class CongestionError(Exception):
    pass


class NonRoadEdge(CongestionError):
    """The edge has no BPR parameterization (not a car road)."""


class TransitOverCapacity(CongestionError):
    """Committing the plan would exceed a vehicle's capacity."""


class UnknownAgent(CongestionError):
    pass


def bpr_travel_time(edge: Edge, volume: float) -> float:
    """BPR volume-delay: t_f * (1 + alpha * (volume / capacity)) ** beta.

    Exact per the formula; no capping at capacity.
    """
    if not edge.is_road:
        raise NonRoadEdge(f"edge {edge.id} has no road travel-time model")
    if volume < 0:
        raise ValueError("volume must be >= 0")
    return edge.free_flow_time * (1.0 + edge.bpr_alpha * (volume / edge.capacity)) ** edge.bpr_beta


# ---------------------------------------------------------------------------
# Interval tree (treap, max-end augmented)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraversalInterval:
    start: float
    end: float
    value: int = 1
    tag: tuple = ()

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("interval start must be < end")
        if self.value < 1:
            raise ValueError("interval value must be >= 1")


class _TreapNode:
    __slots__ = ("iv", "prio", "left", "right", "max_end")

    def __init__(self, iv: TraversalInterval, prio: float):
        self.iv = iv
        self.prio = prio
        self.left = None
        self.right = None
        self.max_end = iv.end


def _key(iv: TraversalInterval):
    return (iv.start, iv.end, iv.tag)


def _pull(node):
    node.max_end = node.iv.end
    if node.left is not None:
        node.max_end = max(node.max_end, node.left.max_end)
    if node.right is not None:
        node.max_end = max(node.max_end, node.right.max_end)


class IntervalTree:
    """Set of weighted intervals with overlap-sum queries.

    Intervals are half-open [start, end); a query window [lo, hi) overlaps
    an interval iff start < hi and end > lo.
    """

    def __init__(self, seed: int = 0x5EED):
        self._root = None
        self._rng = random.Random(seed)
        self._count = 0

    def __len__(self):
        return self._count

    def insert(self, iv: TraversalInterval) -> None:
        self._root = self._insert(self._root, _TreapNode(iv, self._rng.random()))
        self._count += 1

    def _insert(self, node, new):
        if node is None:
            return new
        if _key(new.iv) < _key(node.iv):
            node.left = self._insert(node.left, new)
            if node.left.prio < node.prio:
                node = self._rotate_right(node)
        else:
            node.right = self._insert(node.right, new)
            if node.right.prio < node.prio:
                node = self._rotate_left(node)
        _pull(node)
        return node

    @staticmethod
    def _rotate_right(node):
        left = node.left
        node.left = left.right
        left.right = node
        _pull(node)
        _pull(left)
        return left

    @staticmethod
    def _rotate_left(node):
        right = node.right
        node.right = right.left
        right.left = node
        _pull(node)
        _pull(right)
        return right

    def remove(self, iv: TraversalInterval) -> None:
        self._root, removed = self._remove(self._root, iv)
        if not removed:
            raise KeyError(f"interval not present: {iv}")
        self._count -= 1

    def _remove(self, node, iv):
        if node is None:
            return None, False
        if _key(iv) < _key(node.iv):
            node.left, removed = self._remove(node.left, iv)
        elif _key(iv) > _key(node.iv):
            node.right, removed = self._remove(node.right, iv)
        elif node.iv is not iv and node.iv != iv:
            node.right, removed = self._remove(node.right, iv)
        else:
            return self._merge(node.left, node.right), True
        _pull(node)
        return node, removed

    def _merge(self, a, b):
        # All keys in a precede all keys in b.
        if a is None:
            return b
        if b is None:
            return a
        if a.prio < b.prio:
            a.right = self._merge(a.right, b)
            _pull(a)
            return a
        b.left = self._merge(a, b.left)
        _pull(b)
        return b

    def overlap_sum(self, lo: float, hi: float) -> int:
        """Total value of intervals overlapping [lo, hi)."""
        if hi <= lo:
            return 0
        total = 0
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node is None or node.max_end <= lo:
                continue
            iv = node.iv
            if iv.start < hi and iv.end > lo:
                total += iv.value
            stack.append(node.left)
            if iv.start < hi:
                stack.append(node.right)
        return total

    def intervals(self) -> list:
        out = []
        stack = [(self._root, False)]
        while stack:
            node, seen = stack.pop()
            if node is None:
                continue
            if seen:
                out.append(node.iv)
            else:
                stack.append((node.right, False))
                stack.append((node, True))
                stack.append((node.left, False))
        return out


# ---------------------------------------------------------------------------
# Background profiles
# ---------------------------------------------------------------------------


DAY_S = 86400.0


@dataclass(frozen=True)
class StepProfile:
    """Piecewise-constant, right-continuous function of time-of-day,
    periodic over ``period``.  ``steps`` is a sorted tuple of
    (start_s, end_s, value); gaps read as 0."""

    steps: tuple = ()
    period: float = DAY_S

    def value_at(self, tau: float) -> float:
        t = tau % self.period
        for start, end, value in self.steps:
            if start <= t < end:
                return value
        return 0.0

    def is_constant(self) -> bool:
        values = {v for _, _, v in self.steps}
        covered = sum(max(0.0, min(e, self.period) - max(s, 0.0))
                      for s, e, _ in self.steps)
        if covered < self.period:
            values.add(0.0)
        return len(values) <= 1


@dataclass(frozen=True)
class BackgroundProfile:
    """Per-edge background traffic volumes (vehicles on the edge)."""

    per_edge: dict = field(default_factory=dict)

    def is_constant(self) -> bool:
        return all(p.is_constant() for p in self.per_edge.values())


def background_volume(profile: Optional[BackgroundProfile], edge, tau: float) -> float:
    """Background vehicles on the edge at time-of-day ``tau`` (0 if absent)."""
    if profile is None:
        return 0.0
    edge_id = edge.id if isinstance(edge, Edge) else edge
    step = profile.per_edge.get(edge_id)
    if step is None:
        return 0.0
    return step.value_at(tau)


# ---------------------------------------------------------------------------
# Ledger
# ---------------------------------------------------------------------------


@dataclass
class PlanLeg:
    """One committed leg: edge id, travel mode, and its traversal window."""

    edge_id: str
    mode: Optional[Mode]
    enter: float
    exit: float
    line_id: Optional[str] = None
    run_index: Optional[int] = None
    leg_index: Optional[int] = None


class CongestionLedger:
    """Committed-plan state for one simulation run.

    Car legs become intervals in the per-edge trees; transit legs increment
    the occupancy counter of their scheduled departure (keyed by line, run
    and leg so capacity binds per vehicle segment).  Walk and bike legs do
    not touch the ledger.  Mutations are transactional: a commit that would
    overfill a vehicle leaves no partial state behind.
    """

    def __init__(self, graph: MultiModalGraph, seed: int = 0x5EED):
        self.graph = graph
        self._trees: dict = {}
        self._seed = seed
        self.occupancy: dict = {}
        self._plans: dict = {}

    def _tree(self, edge_id: str) -> IntervalTree:
        tree = self._trees.get(edge_id)
        if tree is None:
            tree = IntervalTree(seed=hash((self._seed, edge_id)) & 0x7FFFFFFF)
            self._trees[edge_id] = tree
        return tree

    def has_plan(self, agent_id: str) -> bool:
        return agent_id in self._plans

    def add_user_plan(self, plan, agent_id: str) -> None:
        """Commit a plan: car intervals plus transit occupancy.

        ``plan`` is an iterable of PlanLeg (a routing.RoutePlan also works
        via its ``ledger_legs()``).  Raises TransitOverCapacity (with no
        partial mutation) when a transit leg's departure is already full.
        """
        if agent_id in self._plans:
            raise CongestionError(f"agent {agent_id!r} already has a committed plan")
        legs = list(plan.ledger_legs() if hasattr(plan, "ledger_legs") else plan)
        last = None
        for leg in legs:
            if last is not None and leg.enter < last:
                raise ValueError("plan leg times must be non-decreasing")
            last = leg.exit

        # Validate transit capacity first so failure leaves no partial state.
        boardings: dict = {}
        for leg in legs:
            if leg.mode is Mode.TRANSIT:
                key = (leg.line_id, leg.run_index, leg.leg_index)
                boardings[key] = boardings.get(key, 0) + 1
        for key, added in boardings.items():
            line = self.graph.lines.get(key[0])
            cap = line.vehicle_capacity if line else math.inf
            if self.occupancy.get(key, 0) + added > cap:
                raise TransitOverCapacity(
                    f"line {key[0]} run {key[1]} leg {key[2]} is full")

        inserted = []
        for i, leg in enumerate(legs):
            if leg.mode is Mode.CAR:
                iv = TraversalInterval(leg.enter, leg.exit, 1, tag=(agent_id, i))
                self._tree(leg.edge_id).insert(iv)
                inserted.append((leg.edge_id, iv))
        for key, added in boardings.items():
            self.occupancy[key] = self.occupancy.get(key, 0) + added
        self._plans[agent_id] = (inserted, boardings)

    def remove_user_plan(self, agent_id: str) -> None:
        """Revert a committed plan entirely."""
        if agent_id not in self._plans:
            raise UnknownAgent(f"no committed plan for agent {agent_id!r}")
        inserted, boardings = self._plans.pop(agent_id)
        for edge_id, iv in inserted:
            self._trees[edge_id].remove(iv)
        for key, added in boardings.items():
            left = self.occupancy.get(key, 0) - added
            if left > 0:
                self.occupancy[key] = left
            else:
                self.occupancy.pop(key, None)

    def interval_sum(self, edge_id: str, lo: float, hi: float) -> int:
        tree = self._trees.get(edge_id)
        return tree.overlap_sum(lo, hi) if tree is not None else 0

    def predicted_count(self, edge: Edge, tau: float,
                        window: Optional[float] = None) -> int:
        """Committed vehicles whose traversal overlaps [tau, tau + window)."""
        if window is None:
            window = edge.free_flow_time if edge.free_flow_time > 0 else 1.0
        if window <= 0:
            raise ValueError("window must be positive")
        return self.interval_sum(edge.id, tau, tau + window)

    def run_occupancy(self, line_id: str, run_index: int, leg_index: int) -> int:
        return self.occupancy.get((line_id, run_index, leg_index), 0)

    def intervals_on(self, edge_id: str) -> list:
        tree = self._trees.get(edge_id)
        return tree.intervals() if tree is not None else []


def predicted_congestion_level(ledger: CongestionLedger, edge: Edge, tau: float,
                               window: Optional[float] = None) -> float:
    """Committed volume overlapping the lookahead window, as a fraction of
    edge capacity, clamped to [0, 1].  The window defaults to the edge's
    free-flow traversal time."""
    count = ledger.predicted_count(edge, tau, window)
    if edge.capacity <= 0 or math.isinf(edge.capacity):
        return 0.0
    return min(1.0, count / edge.capacity)
