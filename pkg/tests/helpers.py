"""Shared fixture builders for the test suite."""

from __future__ import annotations

import math
import random

from modalsim.network import (
    Edge,
    EdgeKind,
    Mode,
    MultiModalGraph,
    Node,
    SwitchConditions,
    TransitLine,
    UserProfile,
    link_switch_nodes,
)


def street(eid, a, b, modes=(Mode.WALK,), length=100.0, free_flow=0.0,
           capacity=math.inf, money=0.0, bpr_alpha=0.15, bpr_beta=4.0):
    return Edge(id=eid, from_node=a, to_node=b, modes=frozenset(modes),
                kind=EdgeKind.STREET, length=length, free_flow_time=free_flow,
                capacity=capacity, monetary_cost=money, bpr_alpha=bpr_alpha,
                bpr_beta=bpr_beta)


def switch_link(eid, a, b, scm=None, length=0.0):
    scm = scm or SwitchConditions()
    return Edge(id=eid, from_node=a, to_node=b, modes=frozenset(),
                kind=EdgeKind.SWITCH_LINK, length=length,
                free_flow_time=scm.switch_time, monetary_cost=scm.switch_cost,
                switch_conditions=scm)


def car_edge(eid, a, b, free_flow=100.0, capacity=4.0, length=1000.0,
             money=0.0):
    return street(eid, a, b, modes=(Mode.CAR,), length=length,
                  free_flow=free_flow, capacity=capacity, money=money)


def build_graph(nodes, edges, lines=(), link_radius=100.0, autolink=False,
                scm_defaults=None):
    node_map = {n.id: n for n in nodes}
    edge_map = {e.id: e for e in edges}
    if autolink:
        node_map, edge_map = link_switch_nodes(
            node_map, edge_map, link_radius,
            scm_defaults or SwitchConditions())
    return MultiModalGraph(list(node_map.values()), list(edge_map.values()),
                           lines=lines, link_radius=link_radius)


def transit_leg_edges(line: TransitLine, nodes: dict, leg_cost=0.0):
    edges = []
    for k in range(len(line.stops) - 1):
        a, b = nodes[line.stops[k]], nodes[line.stops[k + 1]]
        edges.append(Edge(
            id=f"tl:{line.id}:{k}", from_node=a.id, to_node=b.id,
            modes=frozenset({Mode.TRANSIT}), kind=EdgeKind.TRANSIT_LEG,
            length=a.distance_to(b), free_flow_time=line.leg_times[k],
            monetary_cost=leg_cost, line_id=line.id, leg_index=k))
    return edges


def walker(pid="walker", budget=math.inf, weights=(1.0, 0.0, 0.0)):
    return UserProfile(id=pid, owns_car=False, owns_bike=False, budget=budget,
                       objective_weights=weights)


def driver(pid="driver", budget=math.inf, weights=(1.0, 0.0, 0.0)):
    return UserProfile(id=pid, owns_car=True, owns_bike=False, budget=budget,
                       objective_weights=weights)


# ---------------------------------------------------------------------------
# Random instance generator for the Pareto oracle
# ---------------------------------------------------------------------------


def random_instance(rng: random.Random, max_nodes: int = 12):
    """Small random multi-modal graph with random switch conditions, plus a
    random profile and query endpoints.  Total node count (street plus
    transit stops) stays within max_nodes."""
    mode_pool = rng.sample([Mode.WALK, Mode.CAR, Mode.TRANSIT], k=rng.randint(2, 3))
    if Mode.WALK not in mode_pool:
        mode_pool[0] = Mode.WALK  # keep instances mostly routable
    stop_budget = rng.randint(2, 3) if Mode.TRANSIT in mode_pool else 0
    n = rng.randint(4, max_nodes - stop_budget)
    nodes = []
    for i in range(n):
        picks = [m for m in mode_pool if m is not Mode.TRANSIT]
        modes = frozenset(rng.sample(picks, k=rng.randint(1, len(picks))))
        nodes.append(Node(id=f"n{i:02d}", x=rng.uniform(0, 2000),
                          y=rng.uniform(0, 2000), modes=modes))

    edge_prob = min(0.28, 2.6 / n)
    edges = []
    eid = 0
    for i in range(n):
        for j in range(n):
            if i == j or rng.random() > edge_prob:
                continue
            a, b = nodes[i], nodes[j]
            shared = (a.modes & b.modes) - {Mode.TRANSIT}
            if not shared:
                continue
            modes = frozenset(rng.sample(sorted(shared, key=str),
                                         k=rng.randint(1, len(shared))))
            length = max(10.0, a.distance_to(b))
            if Mode.CAR in modes:
                e = street(f"e{eid:03d}", a.id, b.id, modes=modes,
                           length=length,
                           free_flow=length / rng.uniform(8, 20),
                           capacity=float(rng.randint(1, 5)),
                           money=round(rng.uniform(0, 2), 2))
            else:
                e = street(f"e{eid:03d}", a.id, b.id, modes=modes,
                           length=length, money=round(rng.uniform(0, 1), 2))
            edges.append(e)
            eid += 1

    lines = []
    if stop_budget >= 2 and n >= 3 and rng.random() < 0.7:
        stop_count = min(stop_budget, n - 1)
        stop_base = rng.sample(range(n), k=stop_count)
        stop_nodes = []
        for i in stop_base:
            sid = f"s{i:02d}"
            base = nodes[i]
            stop_nodes.append(Node(id=sid, x=base.x + rng.uniform(-40, 40),
                                   y=base.y + rng.uniform(-40, 40),
                                   modes=frozenset({Mode.TRANSIT})))
        nodes.extend(stop_nodes)
        first = rng.uniform(0, 600)
        deps = tuple(first + 400.0 * k for k in range(rng.randint(1, 4)))
        line = TransitLine(id="L0", stops=tuple(s.id for s in stop_nodes),
                           departures=deps,
                           leg_times=tuple(rng.uniform(30, 300)
                                           for _ in range(stop_count - 1)),
                           vehicle_capacity=rng.randint(1, 4))
        lines.append(line)
        edges.extend(transit_leg_edges(line, {s.id: s for s in stop_nodes},
                                       leg_cost=round(rng.uniform(0, 1), 2)))

    scm = SwitchConditions(
        required_possession=rng.choice([None, None, Mode.CAR]),
        parking_available=rng.random() < 0.7,
        rental_available=rng.random() < 0.3,
        storage_for=frozenset({Mode.BIKE}) if rng.random() < 0.5 else frozenset(),
        switch_cost=round(rng.uniform(0, 3), 2),
        switch_time=rng.choice([30.0, 60.0, 120.0]),
    )
    graph = build_graph(nodes, edges, lines=lines,
                        link_radius=rng.uniform(150, 600), autolink=True,
                        scm_defaults=scm)

    profile = UserProfile(
        id="p", owns_car=rng.random() < 0.6, owns_bike=False,
        budget=rng.choice([math.inf, rng.uniform(2, 30)]),
        objective_weights=(rng.uniform(0.2, 1), rng.uniform(0, 1),
                           rng.uniform(0, 1)))
    street_nodes = [nd for nd in nodes if nd.modes - {Mode.TRANSIT}]
    origin = rng.choice(street_nodes).id
    dest = rng.choice(street_nodes).id
    depart = rng.uniform(0, 800)
    return graph, profile, origin, dest, depart
