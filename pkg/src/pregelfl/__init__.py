"""Facility location on a superstep graph engine, with all-distances sketches."""

from .ads import AdsSketch, AdsSketches, build_ads_bsp, build_ads_sequential, hip_estimate
from .errors import (
    InfeasibleError,
    NonConvergenceError,
    ParseError,
    PregelFLError,
    ValidationError,
)
from .facloc import solve
from .graph import CostAssignment, Graph, load_edge_list, single_source_distances
from .kernels import BACKEND
from .mis import greedy_mis_explicit, greedy_mis_implicit, luby_mis, verify_mis
from .oracles import brute_force_opt, evaluate_cost, local_search_baseline, pram_facility_location
from .results import SolveResult

__version__ = "0.1.0"

__all__ = [
    "AdsSketch",
    "AdsSketches",
    "BACKEND",
    "CostAssignment",
    "Graph",
    "InfeasibleError",
    "NonConvergenceError",
    "ParseError",
    "PregelFLError",
    "SolveResult",
    "ValidationError",
    "brute_force_opt",
    "build_ads_bsp",
    "build_ads_sequential",
    "evaluate_cost",
    "greedy_mis_explicit",
    "greedy_mis_implicit",
    "hip_estimate",
    "load_edge_list",
    "local_search_baseline",
    "luby_mis",
    "pram_facility_location",
    "single_source_distances",
    "solve",
    "verify_mis",
]
