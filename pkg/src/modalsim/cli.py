"""Command-line front end.

Subcommands: build-graph, validate, route, simulate, sweep, report.
Exit codes: 0 success, 1 validation or routing failure, 2 usage error.
Defaults may be set via MODALSIM_* environment variables (e.g.
MODALSIM_SEED, MODALSIM_JOBS); explicit flags win, then environment, then
scenario values.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import scenario_io
from .congestion import CongestionLedger
from .network import validate_graph
from .routing import (
    NoPath,
    RouteQuery,
    SOProvider,
    UOProvider,
    moa_star,
    select_route,
)
from .simulation import run_simulation, sweep as run_sweep


def _env(name: str, default=None):
    return os.environ.get(f"MODALSIM_{name.upper()}", default)


def _add_scenario_arg(parser):
    parser.add_argument("--scenario", required=True,
                        help="scenario document (JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modalsim",
        description="Multi-modal routing and social-ratio congestion sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="materialize the merged graph")
    _add_scenario_arg(p)
    p.add_argument("--out", required=True, help="output graph document")

    p = sub.add_parser("validate", help="validate a scenario document")
    _add_scenario_arg(p)

    p = sub.add_parser("route", help="single-query routing")
    _add_scenario_arg(p)
    p.add_argument("--from", dest="origin", required=True)
    p.add_argument("--to", dest="destination", required=True)
    p.add_argument("--depart", type=float, required=True,
                   help="departure time, seconds from midnight")
    p.add_argument("--policy", choices=("uo", "so"), default="uo")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="social ratio for --policy so")
    p.add_argument("--profile", default=None,
                   help="profile id from the scenario (default: first)")

    p = sub.add_parser("simulate", help="one run at one social ratio")
    _add_scenario_arg(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=_env("OUT"), required=_env("OUT") is None)

    p = sub.add_parser("sweep", help="one run per social ratio on the grid")
    _add_scenario_arg(p)
    p.add_argument("--out", default=_env("OUT"), required=_env("OUT") is None)
    p.add_argument("--grid", default=None,
                   help="comma-separated alpha values (default: scenario grid)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None,
                   help="concurrent runs (default: scenario, then 1)")

    p = sub.add_parser("report", help="summary table and figures from results")
    p.add_argument("--in", dest="in_dir", required=True,
                   help="results directory written by simulate/sweep")
    p.add_argument("--out", dest="out_dir", default=None,
                   help="figure directory (default: the results directory)")
    return parser


def _load(path: str):
    return scenario_io.load_scenario(path)


def _resolve_seed(args, scenario) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = _env("SEED")
    if env is not None:
        return int(env)
    return scenario.config.seed


def _make_agents(scenario):
    from .simulation import generate_population

    return generate_population(scenario.zones, scenario.config.population,
                               scenario.job_windows, scenario.config.seed,
                               profiles=scenario.profiles)


def cmd_build_graph(args) -> int:
    scenario = _load(args.scenario)
    scenario_io.save_graph(scenario.graph, args.out)
    print(f"graph written to {args.out}: {len(scenario.graph.nodes)} nodes, "
          f"{len(scenario.graph.edges)} edges")
    return 0


def cmd_validate(args) -> int:
    try:
        scenario = _load(args.scenario)
    except scenario_io.ValidationError as exc:
        for finding in exc.findings:
            print(str(finding))
        print(f"{len(exc.findings)} findings")
        return 1
    findings = validate_graph(scenario.graph)
    for finding in findings:
        print(str(finding))
    print(f"{len(findings)} findings")
    return 0 if not any(f.severity == "error" for f in findings) else 1


def _pick_profile(scenario, profile_id):
    if profile_id is None:
        if scenario.profiles:
            return scenario.profiles[0][0]
        from .network import UserProfile
        return UserProfile()
    for profile, _ in scenario.profiles:
        if profile.id == profile_id:
            return profile
    raise SystemExit(f"unknown profile {profile_id!r}")


def _format_plan(plan, graph) -> str:
    lines = [f"  cost: time={plan.cost.travel_time:.1f}s "
             f"money={plan.cost.money:.2f} transfers={plan.cost.transfers}"
             + ("  [fallback]" if plan.fallback_used else "")]
    for leg in plan.legs:
        mode = leg.mode.value if leg.mode is not None else "switch"
        extra = f" line={leg.line_id} run={leg.run_index}" if leg.line_id else ""
        lines.append(f"    {leg.enter:9.1f} -> {leg.exit:9.1f}  {mode:8s} "
                     f"{leg.edge_id}{extra}")
    return "\n".join(lines)


def cmd_route(args) -> int:
    scenario = _load(args.scenario)
    graph = scenario.graph
    profile = _pick_profile(scenario, args.profile)
    if args.policy == "so":
        provider = SOProvider(graph, CongestionLedger(graph), args.alpha,
                              background=scenario.background,
                              lookahead=scenario.config.lookahead_s)
    else:
        provider = UOProvider(graph, background=scenario.background)
    query = RouteQuery(args.origin, args.destination, args.depart, profile)
    try:
        pareto = moa_star(graph, query, provider,
                          epsilon=scenario.config.epsilon,
                          assume_fifo=scenario.config.assume_fifo)
    except NoPath as exc:
        print(f"no path: {exc}", file=sys.stderr)
        return 1
    print(f"pareto set ({len(pareto)} plans):")
    for i, plan in enumerate(pareto):
        print(f"plan {i}:")
        print(_format_plan(plan, graph))
    chosen = select_route(pareto, profile)
    print("selected:")
    print(_format_plan(chosen, graph))
    return 0


def cmd_simulate(args) -> int:
    scenario = _load(args.scenario)
    seed = _resolve_seed(args, scenario)
    agents = _make_agents(scenario)
    run = run_simulation(scenario.graph, agents, args.alpha, scenario.config,
                         seed, background=scenario.background)
    bundle = scenario_io.make_results_bundle(
        run, scenario.graph, time_bin_s=scenario.config.time_bin_s)
    manifest = scenario_io.write_results(bundle, args.out)
    geo = os.path.join(args.out, "heatmap.geojson")
    scenario_io.export_heatmap_geojson(run, scenario.graph, geo,
                                       time_bin_s=scenario.config.time_bin_s)
    manifest.append(geo)
    for path in manifest:
        print(path)
    return 0


def cmd_sweep(args) -> int:
    scenario = _load(args.scenario)
    seed = _resolve_seed(args, scenario)
    if args.grid is not None:
        grid = tuple(float(x) for x in args.grid.split(","))
    else:
        grid = scenario.config.alpha_grid
    jobs = args.jobs
    if jobs is None:
        env = _env("JOBS")
        jobs = int(env) if env is not None else scenario.config.jobs
    agents = _make_agents(scenario)
    result = run_sweep(scenario.graph, agents, grid, scenario.config, seed,
                       background=scenario.background, jobs=jobs)
    bundle = scenario_io.make_results_bundle(
        result, scenario.graph, time_bin_s=scenario.config.time_bin_s,
        delta_pair=(min(grid), max(grid)))
    manifest = scenario_io.write_results(bundle, args.out)
    for alpha in (min(grid), max(grid)):
        tag = f"{alpha:g}".replace(".", "_")
        geo = os.path.join(args.out, f"heatmap_alpha{tag}.geojson")
        scenario_io.export_heatmap_geojson(result.runs[alpha], scenario.graph,
                                           geo,
                                           time_bin_s=scenario.config.time_bin_s)
        manifest.append(geo)
    for path in manifest:
        print(path)
    return 0


def cmd_report(args) -> int:
    from .report import format_summary_table, render_report, _read_csv

    summary = _read_csv(os.path.join(args.in_dir, "summary.csv"))
    print(format_summary_table(summary))
    written = render_report(args.in_dir, args.out_dir)
    for path in written:
        print(path)
    return 0


_COMMANDS = {
    "build-graph": cmd_build_graph,
    "validate": cmd_validate,
    "route": cmd_route,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except scenario_io.ValidationError as exc:
        for finding in exc.findings:
            print(str(finding), file=sys.stderr)
        return 1
    except (scenario_io.ParseError, scenario_io.IoError) as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
