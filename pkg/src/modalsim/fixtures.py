"""Bundled synthetic scenarios.

``build_grid10()`` produces the standard test scenario: a 10x10 car grid
with tight capacities near the center, a co-located walk grid, two
cross-town bus lines through the middle rows, morning commute demand from
the edge bands into the four center blocks, and light background traffic on
the central approaches.  The document is deterministic, so the checked-in
scenario file can be regenerated byte-for-byte.
"""

from __future__ import annotations

N = 10
SPACING = 600.0  # meters between intersections
CAR_FREE_FLOW = 45.0  # seconds per edge
CENTER = (4.5, 4.5)


def _car(i, j):
    return f"c_{i}_{j}"


def _walk(i, j):
    return f"w_{i}_{j}"


def _capacity(i, j, i2, j2):
    # Tight capacities near the center where all demand converges.
    d = min(max(abs(i - CENTER[0]), abs(j - CENTER[1])),
            max(abs(i2 - CENTER[0]), abs(j2 - CENTER[1])))
    return 2.0 if d <= 2.0 else 3.0


def build_grid10(population: int = 500, seed: int = 7) -> dict:
    nodes = []
    edges = []
    for i in range(N):
        for j in range(N):
            x, y = i * SPACING, j * SPACING
            nodes.append({"id": _car(i, j), "x": x, "y": y, "modes": ["car"]})
            nodes.append({"id": _walk(i, j), "x": x, "y": y, "modes": ["walk"]})

    def add_street(kind, a, b, cap=None):
        eid = f"{kind}:{a}>{b}"
        doc = {"id": eid, "from": a, "to": b, "length": SPACING}
        if kind == "car":
            doc["modes"] = ["car"]
            doc["free_flow_time"] = CAR_FREE_FLOW
            doc["capacity"] = cap
        else:
            doc["modes"] = ["walk"]
        edges.append(doc)

    for i in range(N):
        for j in range(N):
            for di, dj in ((1, 0), (0, 1)):
                i2, j2 = i + di, j + dj
                if i2 >= N or j2 >= N:
                    continue
                cap = _capacity(i, j, i2, j2)
                add_street("car", _car(i, j), _car(i2, j2), cap)
                add_street("car", _car(i2, j2), _car(i, j), cap)
                add_street("walk", _walk(i, j), _walk(i2, j2))
                add_street("walk", _walk(i2, j2), _walk(i, j))

    # Two cross-town lines: row 4 eastbound, row 5 westbound.  Stops are
    # co-located with the street grid so switch links are generated.
    for j, (line_id, cols) in (
            (4, ("busA", list(range(N)))),
            (5, ("busB", list(reversed(range(N)))))):
        for i in cols:
            nodes.append({"id": f"s_{line_id}_{i}", "x": i * SPACING,
                          "y": j * SPACING, "modes": ["transit"]})
    departures = [25800.0 + 240.0 * k for k in range(36)]  # 7:10, every 4 min
    transit_lines = [
        {"id": "busA", "stops": [f"s_busA_{i}" for i in range(N)],
         "departures": departures, "leg_times": [55.0] * (N - 1),
         "vehicle_capacity": 45, "leg_cost": 0.2},
        {"id": "busB", "stops": [f"s_busB_{i}" for i in reversed(range(N))],
         "departures": departures, "leg_times": [55.0] * (N - 1),
         "vehicle_capacity": 45, "leg_cost": 0.2},
    ]

    # Morning background traffic on the central approach edges.
    background = {}
    for i, j, i2, j2 in ((3, 4, 4, 4), (6, 5, 5, 5), (4, 3, 4, 4), (5, 6, 5, 5)):
        background[f"car:{_car(i, j)}>{_car(i2, j2)}"] = [[25200.0, 32400.0, 1.0]]

    center_nodes = [_walk(4, 4), _walk(4, 5), _walk(5, 4), _walk(5, 5)]
    zones = []
    bands = {
        "west": [(i, j) for i in (0, 1) for j in range(N)],
        "east": [(i, j) for i in (8, 9) for j in range(N)],
        "south": [(i, j) for i in range(2, 8) for j in (0, 1)],
        "north": [(i, j) for i in range(2, 8) for j in (8, 9)],
    }

    def origin_weight(i, j):
        # Densest housing along the transit corridor (rows 4-5).
        return 3.0 if j in (3, 4, 5, 6) else 1.0

    for name, cells in bands.items():
        zones.append({
            "id": name,
            "weight": float(len(cells)),
            "origins": [[_walk(i, j), origin_weight(i, j)] for i, j in cells],
            "job_mix": {"faculty": 0.3, "students": 0.5, "staff": 0.2},
            "destinations": center_nodes,
        })

    return {
        "name": "grid10",
        "link_radius_m": 50.0,
        "scm_defaults": {"parking_available": True, "switch_time": 30.0,
                         "switch_cost": 0.0},
        "profiles": [
            {"id": "driver", "owns_car": True, "budget": 50.0,
             "objective_weights": [0.85, 0.1, 0.05], "walk_speed": 1.4,
             "bike_speed": 4.0, "weight": 0.85},
            {"id": "carless", "owns_car": False, "budget": 50.0,
             "objective_weights": [0.8, 0.15, 0.05], "walk_speed": 1.4,
             "bike_speed": 4.0, "weight": 0.15},
        ],
        "nodes": nodes,
        "edges": edges,
        "transit_lines": transit_lines,
        "switch_overrides": [],
        "background_volumes": background,
        "zones": zones,
        "job_windows": {
            "staff": {"onward": [27000.0, 28200.0]},
            "faculty": {"onward": [27300.0, 28500.0]},
            "students": {"onward": [27600.0, 29400.0]},
        },
        "simulation": {
            "horizon_s": 86400.0,
            "alpha_grid": [round(0.1 * i, 1) for i in range(11)],
            "seed": seed,
            "population": population,
            "replan_limit": 2,
            "lookahead_s": None,
            "epsilon": 0.0,
            "assume_fifo": True,
            "time_bin_s": 900.0,
            "jobs": 1,
        },
    }
