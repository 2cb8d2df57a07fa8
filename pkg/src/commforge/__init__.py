"""Simulated GPU communication stack: channels, plans, collectives, timing."""

__version__ = "0.1.0"

from .collectives import Selector, collective, select_algorithm
from .executor import Runtime, RunResult
from .lowering import LoweringParams, ProgramGraph, lower
from .plan import ExecutionPlan, parse_plan, serialize_plan, validate_plan
from .timing import CostParams, algobw, run_benchmark, simulate_timed, transfer_time
from .world import SimWorld, make_world

__all__ = [
    "CostParams", "ExecutionPlan", "LoweringParams", "ProgramGraph", "Runtime",
    "RunResult", "Selector", "SimWorld", "algobw", "collective", "lower",
    "make_world", "parse_plan", "run_benchmark", "select_algorithm",
    "serialize_plan", "simulate_timed", "transfer_time", "validate_plan",
]
