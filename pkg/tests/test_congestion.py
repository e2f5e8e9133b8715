"""Congestion state: BPR, interval ledger, background profiles."""

from __future__ import annotations

import random

import pytest

from modalsim.congestion import (
    BackgroundProfile,
    CongestionLedger,
    IntervalTree,
    NonRoadEdge,
    PlanLeg,
    StepProfile,
    TransitOverCapacity,
    TraversalInterval,
    UnknownAgent,
    background_volume,
    bpr_travel_time,
    predicted_congestion_level,
)
from modalsim.network import Mode, Node, TransitLine

from .helpers import build_graph, car_edge, street, transit_leg_edges
from .oracles import NaiveIntervalSet, NaiveLedger


class TestBprTravelTime:
    def test_free_flow_at_zero_volume(self):
        edge = car_edge("e", "a", "b", free_flow=100.0, capacity=7.0)
        assert bpr_travel_time(edge, 0.0) == 100.0

    def test_at_capacity_default_parameters(self):
        edge = car_edge("e", "a", "b", free_flow=100.0, capacity=5.0)
        assert bpr_travel_time(edge, 5.0) == pytest.approx(174.900625, abs=1e-9)

    def test_at_twice_capacity(self):
        edge = car_edge("e", "a", "b", free_flow=100.0, capacity=5.0)
        assert bpr_travel_time(edge, 10.0) == pytest.approx(100 * 1.3 ** 4,
                                                            rel=1e-12)

    def test_non_road_edge_raises(self):
        with pytest.raises(NonRoadEdge):
            bpr_travel_time(street("w", "a", "b"), 1.0)

    def test_strictly_increasing_in_volume(self):
        rng = random.Random(5)
        edge = car_edge("e", "a", "b", free_flow=60.0, capacity=3.0)
        vols = sorted(rng.uniform(0, 30) for _ in range(50))
        times = [bpr_travel_time(edge, v) for v in vols]
        assert all(a < b for a, b in zip(times, times[1:]))


class TestIntervalTree:
    def test_matches_naive_on_random_operations(self):
        rng = random.Random(31337)
        tree = IntervalTree(seed=1)
        naive = NaiveIntervalSet()
        live = []
        for step in range(3000):
            op = rng.random()
            if op < 0.55 or not live:
                s = rng.uniform(0, 1000)
                e = s + rng.uniform(0.1, 200)
                v = rng.randint(1, 3)
                tag = ("t", step)
                iv = TraversalInterval(s, e, v, tag)
                tree.insert(iv)
                naive.insert(s, e, v, tag)
                live.append(iv)
            elif op < 0.75:
                iv = live.pop(rng.randrange(len(live)))
                tree.remove(iv)
                naive.remove(iv.start, iv.end, iv.value, iv.tag)
            else:
                lo = rng.uniform(-50, 1050)
                hi = lo + rng.uniform(0, 300)
                assert tree.overlap_sum(lo, hi) == naive.overlap_sum(lo, hi)
        assert len(tree) == len(live)
        assert tree.overlap_sum(-1e9, 1e9) == naive.overlap_sum(-1e9, 1e9)

    def test_half_open_boundaries(self):
        tree = IntervalTree()
        tree.insert(TraversalInterval(10.0, 20.0))
        assert tree.overlap_sum(20.0, 25.0) == 0
        assert tree.overlap_sum(5.0, 10.0) == 0
        assert tree.overlap_sum(19.999, 25.0) == 1
        assert tree.overlap_sum(5.0, 10.001) == 1


def _transit_fixture():
    nodes = [Node("s0", 0, 0, frozenset({Mode.TRANSIT})),
             Node("s1", 500, 0, frozenset({Mode.TRANSIT})),
             Node("s2", 1000, 0, frozenset({Mode.TRANSIT})),
             Node("a", 0, 500, frozenset({Mode.CAR})),
             Node("b", 800, 500, frozenset({Mode.CAR}))]
    line = TransitLine(id="L", stops=("s0", "s1", "s2"),
                       departures=(100.0, 400.0), leg_times=(60.0, 60.0),
                       vehicle_capacity=2)
    edges = [car_edge("r1", "a", "b"), car_edge("r2", "b", "a")]
    edges += transit_leg_edges(line, {n.id: n for n in nodes})
    return build_graph(nodes, edges, lines=[line])


def car_leg(edge_id, enter, exit):
    return PlanLeg(edge_id=edge_id, mode=Mode.CAR, enter=enter, exit=exit)


def bus_leg(line_id, run, leg, enter, exit):
    return PlanLeg(edge_id=f"tl:{line_id}:{leg}", mode=Mode.TRANSIT,
                   enter=enter, exit=exit, line_id=line_id, run_index=run,
                   leg_index=leg)


class TestLedger:
    def test_car_plan_inserts_one_interval_per_leg(self):
        graph = _transit_fixture()
        ledger = CongestionLedger(graph)
        ledger.add_user_plan([car_leg("r1", 0.0, 100.0),
                              car_leg("r2", 100.0, 250.0)], "u1")
        assert ledger.interval_sum("r1", 0.0, 100.0) == 1
        assert ledger.interval_sum("r2", 100.0, 250.0) == 1
        assert ledger.interval_sum("r2", 0.0, 100.0) == 0

    def test_walk_plan_leaves_ledger_unchanged(self):
        graph = _transit_fixture()
        ledger = CongestionLedger(graph)
        legs = [PlanLeg(edge_id="r1", mode=Mode.WALK, enter=0.0, exit=50.0)]
        ledger.add_user_plan(legs, "u1")
        assert ledger.interval_sum("r1", 0.0, 1e6) == 0
        assert ledger.occupancy == {}

    def test_transit_over_capacity_is_transactional(self):
        graph = _transit_fixture()
        ledger = CongestionLedger(graph)
        for agent in ("u1", "u2"):
            ledger.add_user_plan([bus_leg("L", 0, 0, 100.0, 160.0)], agent)
        before_occ = dict(ledger.occupancy)
        with pytest.raises(TransitOverCapacity):
            ledger.add_user_plan([car_leg("r1", 0.0, 90.0),
                                  bus_leg("L", 0, 0, 100.0, 160.0)], "u3")
        assert ledger.occupancy == before_occ
        assert ledger.interval_sum("r1", 0.0, 1e6) == 0
        assert not ledger.has_plan("u3")

    def test_remove_reverts_to_pre_add_state(self):
        graph = _transit_fixture()
        ledger = CongestionLedger(graph)
        legs = [car_leg("r1", 0.0, 100.0), bus_leg("L", 1, 1, 460.0, 520.0)]
        ledger.add_user_plan(legs, "u1")
        ledger.remove_user_plan("u1")
        assert ledger.interval_sum("r1", -1e9, 1e9) == 0
        assert ledger.occupancy == {}
        assert not ledger.has_plan("u1")

    def test_remove_unknown_agent(self):
        ledger = CongestionLedger(_transit_fixture())
        with pytest.raises(UnknownAgent):
            ledger.remove_user_plan("ghost")

    def test_interleaved_random_plans_match_replay_oracle(self):
        graph = _transit_fixture()
        rng = random.Random(777)
        ledger = CongestionLedger(graph)
        naive = NaiveLedger(graph)
        active = []
        for i in range(100):
            if active and rng.random() < 0.4:
                agent = active.pop(rng.randrange(len(active)))
                ledger.remove_user_plan(agent)
                naive.remove_user_plan(agent)
                continue
            agent = f"a{i}"
            legs = []
            t = rng.uniform(0, 500)
            for _ in range(rng.randint(1, 4)):
                dt = rng.uniform(10, 120)
                kind = rng.random()
                if kind < 0.6:
                    legs.append(car_leg(rng.choice(["r1", "r2"]), t, t + dt))
                else:
                    legs.append(PlanLeg(edge_id="r1", mode=Mode.WALK,
                                        enter=t, exit=t + dt))
                t += dt
            try:
                ledger.add_user_plan(legs, agent)
                naive.add_user_plan(legs, agent)
                active.append(agent)
            except TransitOverCapacity:
                pass
        for edge_id in ("r1", "r2"):
            for _ in range(50):
                lo = rng.uniform(-20, 900)
                hi = lo + rng.uniform(0, 400)
                assert ledger.interval_sum(edge_id, lo, hi) == \
                    naive.edge_overlap(edge_id, lo, hi)
        assert ledger.occupancy == naive.occupancy


class TestPredictedCongestionLevel:
    def test_empty_tree_is_zero(self):
        graph = _transit_fixture()
        ledger = CongestionLedger(graph)
        edge = graph.edges["r1"]
        assert predicted_congestion_level(ledger, edge, 50.0) == 0.0

    def test_three_overlapping_unit_intervals(self):
        graph = _transit_fixture()
        ledger = CongestionLedger(graph)
        edge = graph.edges["r1"]
        for i in range(3):
            ledger.add_user_plan([car_leg("r1", 10.0, 20.0)], f"u{i}")
        assert predicted_congestion_level(ledger, edge, 15.0, window=2.0) == \
            pytest.approx(0.75)

    def test_clamped_at_one(self):
        graph = _transit_fixture()
        ledger = CongestionLedger(graph)
        edge = graph.edges["r1"]
        for i in range(6):
            ledger.add_user_plan([car_leg("r1", 10.0, 20.0)], f"u{i}")
        assert predicted_congestion_level(ledger, edge, 12.0, window=2.0) == 1.0

    def test_monotone_in_committed_plans(self):
        graph = _transit_fixture()
        ledger = CongestionLedger(graph)
        edge = graph.edges["r1"]
        levels = []
        for i in range(5):
            ledger.add_user_plan([car_leg("r1", 0.0, 200.0)], f"u{i}")
            levels.append(predicted_congestion_level(ledger, edge, 50.0))
        assert levels == sorted(levels)

    def test_default_window_is_free_flow_time(self):
        graph = _transit_fixture()
        ledger = CongestionLedger(graph)
        edge = graph.edges["r1"]  # free_flow 100s
        ledger.add_user_plan([car_leg("r1", 140.0, 190.0)], "u1")
        # Window [50, 150) overlaps; [0, 100) does not.
        assert predicted_congestion_level(ledger, edge, 50.0) == 0.25
        assert predicted_congestion_level(ledger, edge, 0.0) == 0.0


class TestBackgroundProfiles:
    def test_constant_profile(self):
        prof = BackgroundProfile(per_edge={
            "e": StepProfile(steps=((0.0, 86400.0, 10.0),))})
        edge = car_edge("e", "a", "b")
        for tau in (0.0, 1234.5, 86399.9):
            assert background_volume(prof, edge, tau) == 10.0
        assert prof.is_constant()

    def test_absent_edge_is_zero(self):
        prof = BackgroundProfile(per_edge={})
        assert background_volume(prof, car_edge("e", "a", "b"), 100.0) == 0.0
        assert background_volume(None, car_edge("e", "a", "b"), 100.0) == 0.0

    def test_step_boundary_is_right_continuous(self):
        prof = BackgroundProfile(per_edge={
            "e": StepProfile(steps=((0.0, 3600.0, 5.0), (3600.0, 7200.0, 20.0)))})
        edge = car_edge("e", "a", "b")
        assert background_volume(prof, edge, 3600.0) == 20.0
        assert background_volume(prof, edge, 3599.999) == 5.0
        assert not prof.is_constant()

    def test_periodic_wrap(self):
        prof = BackgroundProfile(per_edge={
            "e": StepProfile(steps=((0.0, 3600.0, 5.0),), period=86400.0)})
        edge = car_edge("e", "a", "b")
        assert background_volume(prof, edge, 86400.0 + 100.0) == 5.0
