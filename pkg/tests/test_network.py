"""Network model: merge, spatial queries, switch conditions, validation."""

from __future__ import annotations

import random

import pytest

from modalsim.network import (
    Edge,
    EdgeKind,
    KDTree,
    Mode,
    MultiModalGraph,
    Node,
    OverlappingIds,
    SwitchConditions,
    UnimodalLayer,
    UserProfile,
    evaluate_scm,
    link_switch_nodes,
    merge_graphs,
    nearest_within,
    switch_outcomes,
    validate_graph,
)
from modalsim.routing import PossessionState

from .helpers import build_graph, car_edge, street
from .oracles import all_pairs_switch_links, linear_scan_within


def layer(mode, nodes, edges=()):
    return UnimodalLayer(mode=mode, nodes=list(nodes), edges=list(edges))


class TestMergeGraphs:
    def test_two_nodes_within_radius_get_both_switch_links(self):
        walk = layer(Mode.WALK, [Node("w", 0.0, 0.0)])
        car = layer(Mode.CAR, [Node("c", 50.0, 0.0)])
        graph = merge_graphs([walk, car], link_radius=100.0)
        switches = [e for e in graph.edges.values()
                    if e.kind is EdgeKind.SWITCH_LINK]
        assert {(e.from_node, e.to_node) for e in switches} == {
            ("w", "c"), ("c", "w")}
        assert all(graph.nodes[n].is_switch for n in ("w", "c"))

    def test_nodes_outside_radius_not_linked(self):
        walk = layer(Mode.WALK, [Node("w", 0.0, 0.0)])
        car = layer(Mode.CAR, [Node("c", 50.0, 0.0)])
        graph = merge_graphs([walk, car], link_radius=30.0)
        assert not [e for e in graph.edges.values()
                    if e.kind is EdgeKind.SWITCH_LINK]

    def test_random_layers_match_all_pairs_scan(self):
        rng = random.Random(421)
        layers = []
        for mode in (Mode.WALK, Mode.BIKE, Mode.CAR):
            nodes = [Node(f"{mode.value}{i}", rng.uniform(0, 1000),
                          rng.uniform(0, 1000))
                     for i in range(100)]
            layers.append(layer(mode, nodes))
        graph = merge_graphs(layers, link_radius=80.0)
        got = {(e.from_node, e.to_node) for e in graph.edges.values()
               if e.kind is EdgeKind.SWITCH_LINK}
        want = all_pairs_switch_links(graph.nodes, 80.0)
        assert got == want

    def test_overlapping_ids_rejected_without_directive(self):
        a = layer(Mode.WALK, [Node("n", 0.0, 0.0)])
        b = layer(Mode.CAR, [Node("n", 0.0, 0.0)])
        with pytest.raises(OverlappingIds):
            merge_graphs([a, b], link_radius=10.0)

    def test_shared_ids_directive_unites_modes(self):
        a = layer(Mode.WALK, [Node("n", 0.0, 0.0)])
        b = layer(Mode.CAR, [Node("n", 0.0, 0.0)])
        graph = merge_graphs([a, b], link_radius=10.0, shared_ids={"n"})
        assert graph.nodes["n"].modes == {Mode.WALK, Mode.CAR}

    def test_link_pass_is_idempotent(self):
        rng = random.Random(7)
        layers = [layer(m, [Node(f"{m.value}{i}", rng.uniform(0, 300),
                                 rng.uniform(0, 300)) for i in range(20)])
                  for m in (Mode.WALK, Mode.CAR)]
        graph = merge_graphs(layers, link_radius=60.0)
        nodes2, edges2 = link_switch_nodes(
            graph.nodes, graph.edges, 60.0, SwitchConditions())
        assert set(edges2) == set(graph.edges)
        assert nodes2 == graph.nodes

    def test_switch_link_symmetry(self):
        rng = random.Random(99)
        layers = [layer(m, [Node(f"{m.value}{i}", rng.uniform(0, 500),
                                 rng.uniform(0, 500)) for i in range(40)])
                  for m in (Mode.WALK, Mode.CAR, Mode.BIKE)]
        graph = merge_graphs(layers, link_radius=70.0)
        switches = {(e.from_node, e.to_node) for e in graph.edges.values()
                    if e.kind is EdgeKind.SWITCH_LINK}
        assert switches == {(b, a) for a, b in switches}

    def test_per_node_radius_override(self):
        a = layer(Mode.WALK, [Node("w", 0.0, 0.0, link_radius=20.0)])
        b = layer(Mode.CAR, [Node("c", 50.0, 0.0)])
        graph = merge_graphs([a, b], link_radius=100.0)
        assert not [e for e in graph.edges.values()
                    if e.kind is EdgeKind.SWITCH_LINK]


class TestNearestWithin:
    def test_query_at_node_position_radius_zero(self):
        graph = build_graph([Node("a", 5.0, 5.0), Node("b", 9.0, 9.0)], [])
        assert nearest_within(graph, (5.0, 5.0), 0.0) == ["a"]

    def test_empty_graph(self):
        graph = build_graph([], [])
        assert nearest_within(graph, (0.0, 0.0), 100.0) == []

    def test_matches_linear_scan_on_random_points(self):
        rng = random.Random(1234)
        points = [(rng.uniform(0, 1000), rng.uniform(0, 1000), f"p{i:04d}")
                  for i in range(1000)]
        tree = KDTree(points)
        for _ in range(100):
            x, y = rng.uniform(-50, 1050), rng.uniform(-50, 1050)
            r = rng.uniform(0, 250)
            assert tree.within(x, y, r) == linear_scan_within(points, x, y, r)

    def test_duplicate_positions(self):
        points = [(1.0, 1.0, "a"), (1.0, 1.0, "b"), (2.0, 2.0, "c")]
        tree = KDTree(points)
        assert tree.within(1.0, 1.0, 0.0) == ["a", "b"]


def _switch_edge(scm):
    return Edge(id="sw", from_node="u", to_node="v", modes=frozenset(),
                kind=EdgeKind.SWITCH_LINK, switch_conditions=scm,
                free_flow_time=scm.switch_time)


class TestEvaluateScm:
    def test_car_to_bus_with_parking_and_budget(self):
        scm = SwitchConditions(parking_available=True, switch_cost=2.0)
        profile = UserProfile(id="u", owns_car=True, budget=10.0)
        poss = PossessionState.for_profile(profile)
        assert evaluate_scm(_switch_edge(scm), profile, 0.0, poss) is True

    def test_no_parking_blocks_carried_car(self):
        scm = SwitchConditions(parking_available=False, switch_cost=2.0)
        profile = UserProfile(id="u", owns_car=True, budget=10.0)
        poss = PossessionState.for_profile(profile)
        assert evaluate_scm(_switch_edge(scm), profile, 0.0, poss) is False

    def test_bike_needs_storage_on_new_mode(self):
        scm = SwitchConditions(parking_available=False, storage_for=frozenset())
        profile = UserProfile(id="u", owns_bike=True)
        poss = PossessionState.for_profile(profile)
        assert evaluate_scm(_switch_edge(scm), profile, 0.0, poss) is False
        with_rack = SwitchConditions(parking_available=False,
                                     storage_for=frozenset({Mode.BIKE}))
        assert evaluate_scm(_switch_edge(with_rack), profile, 0.0, poss) is True

    def test_cost_above_budget_blocks(self):
        scm = SwitchConditions(parking_available=True, switch_cost=20.0)
        profile = UserProfile(id="u", budget=10.0)
        poss = PossessionState.for_profile(profile)
        assert evaluate_scm(_switch_edge(scm), profile, 0.0, poss) is False

    def test_rental_satisfies_required_possession(self):
        scm = SwitchConditions(required_possession=Mode.CAR,
                               rental_available=True)
        profile = UserProfile(id="u", owns_car=False)
        poss = PossessionState.for_profile(profile)
        assert evaluate_scm(_switch_edge(scm), profile, 0.0, poss) is True
        outcomes = switch_outcomes(_switch_edge(scm), profile, poss)
        assert all(Mode.CAR in o.carrying for o in outcomes)

    def test_non_switch_edges_check_mode_and_possession(self):
        car = car_edge("e", "u", "v")
        profile = UserProfile(id="u", owns_car=False)
        poss = PossessionState.for_profile(profile)
        assert evaluate_scm(car, profile, 0.0, poss) is False
        drv = UserProfile(id="d", owns_car=True)
        assert evaluate_scm(car, drv, 0.0,
                            PossessionState.for_profile(drv)) is True

    def test_pure_function_of_inputs(self):
        scm = SwitchConditions(parking_available=True, switch_cost=1.0,
                               storage_for=frozenset({Mode.BIKE}))
        edge = _switch_edge(scm)
        profile = UserProfile(id="u", owns_car=True, owns_bike=True, budget=9.0)
        poss = PossessionState.for_profile(profile)
        results = {evaluate_scm(edge, profile, t, poss) for t in (0.0, 5.5, 9e4)}
        assert len(results) == 1
        assert evaluate_scm(edge, profile, 0.0, poss) == evaluate_scm(
            edge, profile, 0.0, poss)

    def test_park_records_location(self):
        scm = SwitchConditions(parking_available=True)
        profile = UserProfile(id="u", owns_car=True)
        poss = PossessionState.for_profile(profile)
        outcomes = switch_outcomes(_switch_edge(scm), profile, poss)
        assert outcomes == [poss.park(Mode.CAR, "u")]


class TestValidateGraph:
    def _good_graph(self):
        nodes = [Node("a", 0, 0, frozenset({Mode.WALK})),
                 Node("b", 100, 0, frozenset({Mode.WALK})),
                 Node("c", 0, 100, frozenset({Mode.CAR})),
                 Node("d", 100, 100, frozenset({Mode.CAR}))]
        edges = [street("w1", "a", "b"), street("w2", "b", "a"),
                 car_edge("c1", "c", "d", capacity=4.0)]
        return nodes, edges

    def test_well_formed_graph_has_no_findings(self):
        nodes, edges = self._good_graph()
        graph = build_graph(nodes, edges)
        assert validate_graph(graph) == []

    def test_dangling_endpoint_is_reported(self):
        nodes, edges = self._good_graph()
        edges.append(street("bad", "a", "missing"))
        graph = MultiModalGraph(nodes, edges)
        findings = validate_graph(graph)
        assert len(findings) == 1
        assert "missing" in str(findings[0])

    def test_zero_capacity_car_edge_is_reported(self):
        nodes, edges = self._good_graph()
        edges.append(car_edge("bad", "c", "d", capacity=0.0))
        findings = validate_graph(build_graph(nodes, edges))
        assert len(findings) == 1
        assert "capacity" in str(findings[0])
