"""Multi-modal routing and social-ratio congestion simulation."""

from .network import (
    Edge,
    EdgeKind,
    KDTree,
    Mode,
    MultiModalGraph,
    Node,
    OverlappingIds,
    SwitchConditions,
    TransitLine,
    UnimodalLayer,
    UserProfile,
    evaluate_scm,
    merge_graphs,
    nearest_within,
    validate_graph,
)
from .congestion import (
    BackgroundProfile,
    CongestionLedger,
    IntervalTree,
    NonRoadEdge,
    StepProfile,
    TransitOverCapacity,
    TraversalInterval,
    UnknownAgent,
    background_volume,
    bpr_travel_time,
    predicted_congestion_level,
)
from .routing import (
    CostVector,
    EmptySet,
    NoPath,
    PossessionState,
    RoutePlan,
    RouteQuery,
    SOProvider,
    UOProvider,
    dominates,
    heuristic,
    moa_star,
    outgoing_edges_so,
    outgoing_edges_uo,
    select_route,
)
from .simulation import (
    Agent,
    DemandZone,
    JobWindow,
    PopulationSplit,
    RunResult,
    SimulationConfig,
    SweepResult,
    ZeroBest,
    compute_metrics,
    generate_population,
    normalized_travel_time,
    run_simulation,
    split_population,
    sweep,
)
from .scenario_io import (
    ParseError,
    ResultsBundle,
    Scenario,
    ValidationError,
    export_heatmap_geojson,
    load_scenario,
    make_results_bundle,
    save_scenario,
    serialize_scenario,
    write_results,
)

__version__ = "0.1.0"
