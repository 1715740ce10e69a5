"""Differentially private estimation of network assortativity."""

from .amplification import (
    TabulatedBound,
    amplified_epsilon,
    build_lookup_table,
    epsilon0_cap,
    local_budget_for,
)
from .errors import (
    DegenerateChannelError,
    DPAssortError,
    InfeasibleBudgetError,
    InfeasiblePopulationError,
    ParameterError,
    ParseError,
    RejectedEdgeError,
    UndefinedStatisticError,
)
from .estimators import BudgetSpec, Estimate, decentral_ru, estimate, local_ru, shuffle_ru
from .graph import Graph, GraphStats, exact_stats, generate_ba, load_edge_list, neighbor_degree_sum, save_edge_list
from .harness import ExperimentSpec, relative_error, run_experiment, sign_accuracy
from .mechanisms import RngStream

__all__ = [
    "BudgetSpec", "DPAssortError", "DegenerateChannelError", "Estimate", "ExperimentSpec", "Graph",
    "GraphStats", "InfeasibleBudgetError", "InfeasiblePopulationError", "ParameterError", "ParseError",
    "RejectedEdgeError", "RngStream", "TabulatedBound", "UndefinedStatisticError", "amplified_epsilon",
    "build_lookup_table", "decentral_ru", "epsilon0_cap", "estimate", "exact_stats", "generate_ba",
    "load_edge_list", "local_budget_for", "local_ru", "neighbor_degree_sum", "relative_error",
    "run_experiment", "save_edge_list", "shuffle_ru", "sign_accuracy",
]
