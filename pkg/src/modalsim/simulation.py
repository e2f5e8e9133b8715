"""One-shot agent-based simulation.

Each agent is routed exactly once, at its departure time, against the
network state at that instant; socially-routed agents additionally commit
their plan to the congestion ledger so later queries see it.  Traversal of a
road edge entered at time tau takes the BPR time at the volume actually on
the edge (including the entering vehicle) plus background traffic; transit
boarding waits for the next scheduled departure with a free seat.  A run
ends when every agent has arrived or the horizon expires, in which case
unfinished agents are flagged rather than failing the run.
"""

from __future__ import annotations

import heapq
import math
import random
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .congestion import BackgroundProfile, CongestionLedger, TransitOverCapacity, \
    background_volume, bpr_travel_time
from .network import Edge, EdgeKind, Mode, MultiModalGraph, UserProfile
from .routing import (
    NoPath,
    ProviderDiagnostics,
    RoutePlan,
    RouteQuery,
    SOProvider,
    UOProvider,
    moa_star,
    select_route,
)


class SimulationError(Exception):
    pass


class EmptyZones(SimulationError):
    pass


class ZeroBest(SimulationError):
    """Normalization needs a positive best travel time."""


# ---------------------------------------------------------------------------
# Demand
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DemandZone:
    id: str
    weight: float
    origins: tuple  # ((node_id, weight), ...)
    job_mix: tuple  # ((job_type, weight), ...)
    destinations: tuple  # (node_id, ...)

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"zone {self.id}: weight must be >= 0")
        if not self.origins or all(w <= 0 for _, w in self.origins):
            raise ValueError(f"zone {self.id}: needs origins with positive weight")
        if not self.destinations:
            raise ValueError(f"zone {self.id}: needs at least one destination")


@dataclass(frozen=True)
class JobWindow:
    onward: tuple  # (start_s, end_s)
    return_window: Optional[tuple] = None


@dataclass(frozen=True)
class Agent:
    id: str
    person_id: str
    depart: float
    origin: str
    destination: str
    profile: UserProfile
    job_type: str = "default"
    cohort: Optional[str] = None  # "uo" | "so", set by split_population


@dataclass(frozen=True)
class PopulationSplit:
    alpha: float
    agents: tuple  # all agents, cohort assigned
    uo_ids: frozenset
    so_ids: frozenset

    @property
    def population(self) -> int:
        return len({a.person_id for a in self.agents})


def generate_population(zones: Sequence[DemandZone], population: int,
                        job_windows: dict, seed: int,
                        profiles: Optional[Sequence] = None) -> list:
    """Sample agents: zone by zone weight, origin by node weight within the
    zone, departure uniform in the job-type window.  When a job type has a
    return window, a second trip back to the origin is emitted for the same
    person.  Deterministic given the seed."""
    zones = [z for z in zones if z.weight > 0]
    if not zones:
        raise EmptyZones("no demand zones with positive weight")
    if population <= 0:
        raise ValueError("population must be positive")
    rng = random.Random(f"{seed}:population")
    if not profiles:
        profiles = [(UserProfile(), 1.0)]
    profile_objs = [p for p, _ in profiles]
    profile_weights = [w for _, w in profiles]
    zone_weights = [z.weight for z in zones]

    width = max(4, len(str(population - 1)))
    agents = []
    for i in range(population):
        person = f"a{i:0{width}d}"
        zone = rng.choices(zones, weights=zone_weights)[0]
        job = rng.choices([j for j, _ in zone.job_mix],
                          weights=[w for _, w in zone.job_mix])[0]
        origin = rng.choices([n for n, _ in zone.origins],
                             weights=[w for _, w in zone.origins])[0]
        destination = zone.destinations[rng.randrange(len(zone.destinations))]
        profile = rng.choices(profile_objs, weights=profile_weights)[0]
        window = job_windows.get(job)
        if window is None:
            raise KeyError(f"no departure window for job type {job!r}")
        depart = rng.uniform(*window.onward)
        agents.append(Agent(id=person, person_id=person, depart=depart,
                            origin=origin, destination=destination,
                            profile=profile, job_type=job))
        if window.return_window is not None:
            t_ret = rng.uniform(*window.return_window)
            agents.append(Agent(id=f"{person}r", person_id=person,
                                depart=t_ret, origin=destination,
                                destination=origin, profile=profile,
                                job_type=job))
    return agents


def split_population(agents: Sequence[Agent], alpha: float,
                     seed: int) -> PopulationSplit:
    """Assign round(alpha * P) persons to the social cohort.

    A single seeded shuffle orders persons; the first round(alpha * P) of
    that order are social at every alpha, so cohorts are nested across a
    sweep run with one seed."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    persons = sorted({a.person_id for a in agents})
    rng = random.Random(f"{seed}:split")
    rng.shuffle(persons)
    count = int(math.floor(alpha * len(persons) + 0.5))  # round half up
    so_persons = frozenset(persons[:count])
    assigned = tuple(
        replace(a, cohort="so" if a.person_id in so_persons else "uo")
        for a in agents)
    return PopulationSplit(
        alpha=alpha, agents=assigned,
        uo_ids=frozenset(a.id for a in assigned if a.cohort == "uo"),
        so_ids=frozenset(a.id for a in assigned if a.cohort == "so"))


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------


DEFAULT_ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class SimulationConfig:
    horizon_s: float = 86400.0
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    seed: int = 0
    population: int = 100
    replan_limit: int = 1
    lookahead_s: Optional[float] = None  # None: per-edge free-flow time
    epsilon: float = 0.0
    assume_fifo: Optional[bool] = None  # None: trust the provider
    time_bin_s: float = 900.0
    jobs: int = 1


@dataclass
class AgentResult:
    agent: Agent
    plan: Optional[RoutePlan] = None
    actual_s: Optional[float] = None
    best_s: Optional[float] = None
    ntt: Optional[float] = None
    finished: bool = False
    unroutable: bool = False
    stranded: bool = False

    @property
    def modes(self) -> frozenset:
        return self.plan.modes_used() if self.plan is not None else frozenset()


@dataclass
class CommitRecord:
    """Issue-time admission evidence for one committed car leg."""

    agent_id: str
    edge_id: str
    enter: float
    window: float
    committed_after: int
    alpha_capacity: float


@dataclass
class RunDiagnostics:
    fallback_activations: int = 0
    replans: int = 0
    commit_records: list = field(default_factory=list)
    committed_intervals: int = 0
    transit_commitments: int = 0
    ntt_floor_warnings: int = 0
    notes: list = field(default_factory=list)


@dataclass
class RunResult:
    alpha: float
    agents: dict  # agent id -> AgentResult
    edge_series: dict  # edge id -> [(time, concurrent vehicles)]
    used_edges: set
    diagnostics: RunDiagnostics
    horizon_exceeded: bool = False

    def finished_results(self) -> list:
        return [r for r in self.agents.values() if r.finished]


@dataclass
class SweepResult:
    alphas: tuple
    runs: dict  # alpha -> RunResult


# ---------------------------------------------------------------------------
# Event-driven execution
# ---------------------------------------------------------------------------


class _Engine:
    def __init__(self, graph: MultiModalGraph, config: SimulationConfig,
                 background: Optional[BackgroundProfile], alpha: float,
                 seed: int):
        self.graph = graph
        self.config = config
        self.background = background
        self.alpha = alpha
        self.ledger = CongestionLedger(graph, seed=seed)
        self.live_car: dict = {}  # every vehicle currently on an edge
        self.live_car_uo: dict = {}  # uncommitted (user-optimal) vehicles only
        self.live_transit: dict = {}
        self.edge_series: dict = {}
        self.used: set = set()
        self.events: list = []
        self._seq = 0
        self.provider_diag = ProviderDiagnostics()
        self.diag = RunDiagnostics()
        self.results: dict = {}
        self._leg_deps: dict = {}

    # -- event queue ------------------------------------------------------

    def schedule(self, time: float, agent_id: str, fn, *args):
        self._seq += 1
        heapq.heappush(self.events, (time, agent_id, self._seq, fn, args))

    def run(self, agents: Sequence[Agent]) -> RunResult:
        for agent in agents:
            self.results[agent.id] = AgentResult(agent=agent)
            self.schedule(agent.depart, agent.id, self._depart, agent)
        horizon = self.config.horizon_s
        horizon_hit = False
        while self.events:
            time, _, _, fn, args = heapq.heappop(self.events)
            if time > horizon:
                horizon_hit = True
                break
            fn(time, *args)
        return RunResult(alpha=self.alpha, agents=self.results,
                         edge_series=self.edge_series, used_edges=self.used,
                         diagnostics=self.diag, horizon_exceeded=horizon_hit)

    # -- routing ----------------------------------------------------------

    def _make_provider(self, cohort: str):
        if cohort == "so":
            # Committed vehicles are visible through their ledger intervals;
            # the live snapshot adds only the uncommitted (UO) traffic.
            return SOProvider(self.graph, self.ledger, self.alpha,
                              background=self.background,
                              live_volumes=self.live_car_uo,
                              lookahead=self.config.lookahead_s,
                              diagnostics=self.provider_diag)
        return UOProvider(self.graph, background=self.background,
                          live_volumes=self.live_car)

    def _route(self, agent: Agent) -> Optional[RoutePlan]:
        provider = self._make_provider(agent.cohort or "uo")
        query = RouteQuery(agent.origin, agent.destination, agent.depart,
                           agent.profile)
        attempts = 0
        while True:
            try:
                pareto = moa_star(self.graph, query, provider,
                                  epsilon=self.config.epsilon,
                                  assume_fifo=self.config.assume_fifo)
            except NoPath:
                return None
            plan = select_route(pareto, agent.profile)
            if agent.cohort != "so":
                return plan
            try:
                self.ledger.add_user_plan(plan, agent.id)
            except TransitOverCapacity:
                attempts += 1
                self.diag.replans += 1
                if attempts > self.config.replan_limit:
                    return None
                continue
            self._record_commit(agent.id, plan)
            return plan

    def _record_commit(self, agent_id: str, plan: RoutePlan):
        for leg in plan.legs:
            if leg.mode is not Mode.CAR:
                continue
            edge = self.graph.edges[leg.edge_id]
            window = self.config.lookahead_s
            if window is None:
                window = edge.free_flow_time if edge.free_flow_time > 0 else 1.0
            after = self.ledger.interval_sum(leg.edge_id, leg.enter,
                                             leg.enter + window)
            self.diag.commit_records.append(CommitRecord(
                agent_id=agent_id, edge_id=leg.edge_id, enter=leg.enter,
                window=window, committed_after=after,
                alpha_capacity=self.alpha * edge.capacity))

    # -- agent lifecycle --------------------------------------------------

    def _depart(self, now: float, agent: Agent):
        result = self.results[agent.id]
        if agent.origin == agent.destination:
            result.plan = RoutePlan()
            result.actual_s = 0.0
            result.finished = True
            return
        plan = self._route(agent)
        if plan is None:
            result.unroutable = True
            return
        result.plan = plan
        self._begin_leg(now, agent, 0)

    def _leg_departures(self, line_id: str, leg_index: int) -> list:
        key = (line_id, leg_index)
        deps = self._leg_deps.get(key)
        if deps is None:
            deps = self.graph.lines[line_id].leg_departures(leg_index)
            self._leg_deps[key] = deps
        return deps

    def _begin_leg(self, now: float, agent: Agent, idx: int):
        result = self.results[agent.id]
        legs = result.plan.legs
        if idx >= len(legs):
            result.actual_s = now - agent.depart
            result.finished = True
            return
        leg = legs[idx]
        edge = self.graph.edges[leg.edge_id]
        self.used.add(edge.id)

        if edge.kind is EdgeKind.SWITCH_LINK:
            dt = edge.switch_conditions.switch_time if edge.switch_conditions else 0.0
            self.schedule(now + dt, agent.id, self._begin_leg, agent, idx + 1)
            return

        if leg.mode is Mode.TRANSIT:
            self._board_transit(now, agent, idx)
            return

        if leg.mode is Mode.CAR:
            count = self.live_car.get(edge.id, 0) + 1
            self.live_car[edge.id] = count
            if agent.cohort != "so":
                self.live_car_uo[edge.id] = self.live_car_uo.get(edge.id, 0) + 1
            self._record_volume(edge.id, now, count)
            volume = count + background_volume(self.background, edge, now)
            dt = bpr_travel_time(edge, volume)
            self.schedule(now + dt, agent.id, self._exit_car, agent, idx)
            return

        speed = (agent.profile.bike_speed if leg.mode is Mode.BIKE
                 else agent.profile.walk_speed)
        self.schedule(now + edge.length / speed, agent.id,
                      self._begin_leg, agent, idx + 1)

    def _exit_car(self, now: float, agent: Agent, idx: int):
        leg = self.results[agent.id].plan.legs[idx]
        count = self.live_car.get(leg.edge_id, 0) - 1
        self.live_car[leg.edge_id] = count
        if agent.cohort != "so":
            self.live_car_uo[leg.edge_id] = self.live_car_uo.get(leg.edge_id, 1) - 1
        self._record_volume(leg.edge_id, now, count)
        self._begin_leg(now, agent, idx + 1)

    def _board_transit(self, now: float, agent: Agent, idx: int):
        """Board the earliest run with a free seat across the whole ride
        (consecutive legs of the same line are one seated ride)."""
        result = self.results[agent.id]
        legs = result.plan.legs
        group = [legs[idx]]
        j = idx + 1
        while (j < len(legs) and legs[j].mode is Mode.TRANSIT
               and legs[j].line_id == group[-1].line_id
               and legs[j].leg_index == group[-1].leg_index + 1):
            group.append(legs[j])
            j += 1
        line = self.graph.lines[group[0].line_id]
        deps = self._leg_departures(line.id, group[0].leg_index)
        run = bisect_left(deps, now)
        while run < len(deps):
            if all(self.live_transit.get((line.id, run, leg.leg_index), 0)
                   < line.vehicle_capacity for leg in group):
                break
            run += 1
        if run >= len(deps):
            result.stranded = True
            self.diag.notes.append(
                f"agent {agent.id} stranded at leg {idx}: no seat on line {line.id}")
            return
        for leg in group:
            key = (line.id, run, leg.leg_index)
            self.live_transit[key] = self.live_transit.get(key, 0) + 1
            self.used.add(leg.edge_id)
        ride_time = sum(line.leg_times[leg.leg_index] for leg in group)
        arrive = deps[run] + ride_time
        self.schedule(arrive, agent.id, self._begin_leg, agent, idx + len(group))

    def _record_volume(self, edge_id: str, time: float, count: int):
        self.edge_series.setdefault(edge_id, []).append((time, count))


def _best_travel_time(graph: MultiModalGraph, agent: Agent,
                      config: SimulationConfig, cache: dict) -> Optional[float]:
    """Minimum travel time on the empty network (no agents, no background)."""
    key = (agent.origin, agent.destination, agent.depart)
    if key in cache:
        return cache[key]
    provider = UOProvider(graph)
    query = RouteQuery(agent.origin, agent.destination, agent.depart,
                       agent.profile)
    try:
        pareto = moa_star(graph, query, provider, epsilon=config.epsilon,
                          assume_fifo=config.assume_fifo)
        best = min(p.cost.travel_time for p in pareto)
    except NoPath:
        best = None
    cache[key] = best
    return best


def normalized_travel_time(actual: float, best: float,
                           diagnostics: Optional[RunDiagnostics] = None) -> float:
    """(actual - best) / best, floored at zero.

    A faster-than-best actual indicates a modeling slack; it is floored and
    counted in the diagnostics rather than reported negative."""
    if best is None or best <= 0:
        raise ZeroBest("best travel time must be positive")
    value = (actual - best) / best
    if value < 0:
        if diagnostics is not None:
            diagnostics.ntt_floor_warnings += 1
        return 0.0
    return value


def run_simulation(graph: MultiModalGraph, agents: Sequence[Agent],
                   alpha: float, config: SimulationConfig, seed: int,
                   background: Optional[BackgroundProfile] = None,
                   best_times: Optional[dict] = None) -> RunResult:
    """Execute one run at one social ratio.

    Agents are split into cohorts with the seed, routed at their departure
    times in event order, and executed under live BPR dynamics.  Fully
    deterministic given (graph, agents, alpha, config, seed)."""
    split = split_population(agents, alpha, seed)
    engine = _Engine(graph, config, background, alpha, seed)
    result = engine.run(split.agents)
    result.diagnostics.fallback_activations = \
        engine.provider_diag.fallback_activations
    result.diagnostics.committed_intervals = sum(
        len(t) for t in engine.ledger._trees.values())
    result.diagnostics.transit_commitments = sum(engine.ledger.occupancy.values())

    cache = best_times if best_times is not None else {}
    for res in result.agents.values():
        if res.unroutable:
            continue
        best = _best_travel_time(graph, res.agent, config, cache)
        res.best_s = best
        if res.finished and res.actual_s is not None and best is not None and best > 0:
            res.ntt = normalized_travel_time(res.actual_s, best,
                                             result.diagnostics)
    return result


def sweep(graph: MultiModalGraph, agents: Sequence[Agent], alpha_grid,
          config: SimulationConfig, seed: int,
          background: Optional[BackgroundProfile] = None,
          jobs: int = 1) -> SweepResult:
    """Independent run per alpha: fresh ledger, identical agents and seed."""
    alphas = tuple(alpha_grid)
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ValueError("alpha grid values must lie in [0, 1]")
    best_times: dict = {}
    for agent in agents:
        _best_travel_time(graph, agent, config, best_times)

    runs: dict = {}
    if jobs > 1 and len(alphas) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                a: pool.submit(run_simulation, graph, agents, a, config, seed,
                               background, best_times)
                for a in alphas}
            for a in alphas:
                runs[a] = futures[a].result()
    else:
        for a in alphas:
            runs[a] = run_simulation(graph, agents, a, config, seed,
                                     background, best_times)
    return SweepResult(alphas=alphas, runs=runs)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


MODE_ORDER = (Mode.WALK, Mode.BIKE, Mode.CAR, Mode.TRANSIT)


def mode_usage_counts(run: RunResult) -> dict:
    """Finished agents per mode; an agent counts once per mode it used."""
    counts = {mode: 0 for mode in MODE_ORDER}
    for res in run.finished_results():
        for mode in res.modes:
            counts[mode] += 1
    return counts


def summarize_run(run: RunResult) -> dict:
    finished = run.finished_results()
    ntts = [r.ntt for r in finished if r.ntt is not None]
    n = len(ntts)
    mean = sum(ntts) / n if n else 0.0
    var = sum((x - mean) ** 2 for x in ntts) / n if n else 0.0
    counts = mode_usage_counts(run)
    denom = len(finished) if finished else 1
    row = {
        "alpha": run.alpha,
        "mean_ntt": mean,
        "var_ntt": var,
        "finished": len(finished),
    }
    for mode in MODE_ORDER:
        row[f"share_{mode.value}"] = counts[mode] / denom
    row["unfinished"] = sum(1 for r in run.agents.values()
                            if not r.finished and not r.unroutable)
    row["unroutable"] = sum(1 for r in run.agents.values() if r.unroutable)
    row["fallbacks"] = run.diagnostics.fallback_activations
    row["replans"] = run.diagnostics.replans
    return row


def edge_peak_volumes(run: RunResult) -> dict:
    peaks = {eid: 0 for eid in run.used_edges}
    for edge_id, series in run.edge_series.items():
        if series:
            peaks[edge_id] = max(v for _, v in series)
    return peaks


def edge_heatmap_rows(run: RunResult, graph: MultiModalGraph,
                      bin_s: float) -> list:
    """Sparse (edge, bin) rows of peak concurrent volume and load ratio."""
    rows = []
    for edge_id in sorted(run.edge_series):
        series = run.edge_series[edge_id]
        edge = graph.edges[edge_id]
        cap = edge.capacity
        bins: dict = {}
        prev_t = None
        prev_v = 0
        for t, v in series:
            if prev_t is not None and prev_v > 0:
                b = int(prev_t // bin_s)
                b_end = int(t // bin_s)
                for bi in range(b, b_end + 1):
                    bins[bi] = max(bins.get(bi, 0), prev_v)
            prev_t, prev_v = t, v
        if prev_v > 0 and prev_t is not None:  # open-ended tail
            bins[int(prev_t // bin_s)] = max(
                bins.get(int(prev_t // bin_s), 0), prev_v)
        for bi in sorted(bins):
            vol = bins[bi]
            ratio = vol / cap if cap > 0 and not math.isinf(cap) else 0.0
            rows.append({"edge_id": edge_id, "bin_start_s": bi * bin_s,
                         "volume": vol, "ratio": ratio})
    return rows


def agent_delta_rows(run_a: RunResult, run_b: RunResult) -> list:
    """Per-agent raw travel-time deltas (run_a minus run_b) over agents
    finished in both runs."""
    rows = []
    for agent_id in sorted(run_a.agents):
        ra = run_a.agents[agent_id]
        rb = run_b.agents.get(agent_id)
        if rb is None or not (ra.finished and rb.finished):
            continue
        if ra.actual_s is None or rb.actual_s is None:
            continue
        rows.append({"agent_id": agent_id,
                     "actual_a_s": ra.actual_s,
                     "actual_b_s": rb.actual_s,
                     "delta_s": ra.actual_s - rb.actual_s})
    return rows


def compute_metrics(result, graph: MultiModalGraph,
                    time_bin_s: float = 900.0,
                    delta_pair: tuple = (0.0, 1.0)) -> dict:
    """Summary tables for a run or a sweep.

    Returns a dict with ``summary`` (one row per alpha), ``agents``
    (per-agent rows), ``heatmap`` (per edge and time bin), and ``deltas``
    (per-agent travel-time change between the two runs named by
    ``delta_pair``, when both are present)."""
    if isinstance(result, RunResult):
        sweep_result = SweepResult(alphas=(result.alpha,),
                                   runs={result.alpha: result})
    else:
        sweep_result = result

    summary = []
    agent_rows = []
    heatmap = []
    for alpha in sweep_result.alphas:
        run = sweep_result.runs[alpha]
        summary.append(summarize_run(run))
        for agent_id in sorted(run.agents):
            res = run.agents[agent_id]
            agent_rows.append({
                "agent_id": agent_id,
                "alpha": alpha,
                "actual_s": res.actual_s,
                "best_s": res.best_s,
                "ntt": res.ntt,
                "modes": "+".join(sorted(m.value for m in res.modes)),
                "finished": res.finished,
                "unroutable": res.unroutable,
            })
        for row in edge_heatmap_rows(run, graph, time_bin_s):
            heatmap.append({"alpha": alpha, **row})

    deltas = []
    a, b = delta_pair
    if a in sweep_result.runs and b in sweep_result.runs:
        deltas = agent_delta_rows(sweep_result.runs[a], sweep_result.runs[b])
    return {"summary": summary, "agents": agent_rows, "heatmap": heatmap,
            "deltas": deltas}
