"""congestkit: bandwidth-limited distributed graph algorithms and a
round-by-round simulator to run them on."""

from .carving import CarveParamsC, CarveParamsE, carve_distance_k, carve_fast
from .clusters import ClusterCollection, validate_collection
from .coloring import color_red_blue
from .decompose import (
    NetworkDecomposition,
    decompose_few_colors,
    decompose_logn,
    validate_decomposition,
)
from .derand import (
    ClusterLayers,
    DerandParams,
    PartialFixing,
    audit_to_jsonl,
    cluster_layers,
    derandomize_component,
    deterministic_lll,
    failure_expectation,
    local_lambda_lll,
    solve_range_bounded_lll,
)
from .engine import Message, NodeContext, NodeProgram, SimConfig, Simulation, run
from .graphs import Graph, load_graph, save_graph
from .lll import (
    Assignment,
    CpsResult,
    CriterionReport,
    Event,
    LllInstance,
    VariableSpec,
    check_criteria,
    cps_reference,
    cps_solve,
    event_probability,
    instance_from_json,
    instance_to_json,
    sinkless_instance,
    validate_assignment,
)
from .preshatter import (
    ShatterReport,
    distance2_coloring,
    preshatter,
    shattering_diagnostics,
)
from .workbench import (
    ExperimentConfig,
    MetricsReport,
    generate_graph,
    make_instance,
    run_experiment,
)

__all__ = [
    "CarveParamsC",
    "CarveParamsE",
    "carve_distance_k",
    "carve_fast",
    "ClusterCollection",
    "validate_collection",
    "color_red_blue",
    "NetworkDecomposition",
    "decompose_few_colors",
    "decompose_logn",
    "validate_decomposition",
    "Graph",
    "load_graph",
    "save_graph",
    "Message",
    "NodeContext",
    "NodeProgram",
    "SimConfig",
    "Simulation",
    "run",
    "Assignment",
    "CpsResult",
    "CriterionReport",
    "Event",
    "LllInstance",
    "VariableSpec",
    "check_criteria",
    "cps_reference",
    "cps_solve",
    "event_probability",
    "instance_from_json",
    "instance_to_json",
    "sinkless_instance",
    "validate_assignment",
    "ClusterLayers",
    "DerandParams",
    "PartialFixing",
    "audit_to_jsonl",
    "cluster_layers",
    "derandomize_component",
    "deterministic_lll",
    "failure_expectation",
    "local_lambda_lll",
    "solve_range_bounded_lll",
    "ShatterReport",
    "distance2_coloring",
    "preshatter",
    "shattering_diagnostics",
    "ExperimentConfig",
    "MetricsReport",
    "generate_graph",
    "make_instance",
    "run_experiment",
]
