"""Throughput-optimal offline schedules for an energy-harvesting transmitter.

The scenario module defines the timeline model, policies, and the
feasibility checks.  The pouring module holds the single-budget level
primitive, dbgp composes it into the full solver, convexref solves the
same problem as a concave program for cross-checking, and kkt certifies
any policy structurally.  render and cli provide flat-file output and a
command-line front end.
"""

from .convexref import (
    BruteResult,
    ConvexInstance,
    ConvexSolution,
    brute_force_small,
    objective_and_gradient,
    solve_convex,
)
from .dbgp import DbgpSolution, PourPlan, PourStep, build_pour_plan, solve_dbgp
from .generate import env_seed, random_scenario
from .kkt import Condition, OptimalityReport, verify_optimality
from .pouring import (
    Allocation,
    LevelAllocator,
    glue_pour,
    level_energy_map,
    on_power,
    single_arrival_policy,
)
from .scenario import (
    Epoch,
    FeasibilityReport,
    Scenario,
    TransmissionPolicy,
    evaluate_throughput,
    load_policy,
    load_scenario,
    merge_event_streams,
    save_policy,
    save_scenario,
    validate_policy,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "BruteResult",
    "Condition",
    "ConvexInstance",
    "ConvexSolution",
    "DbgpSolution",
    "Epoch",
    "FeasibilityReport",
    "LevelAllocator",
    "OptimalityReport",
    "PourPlan",
    "PourStep",
    "Scenario",
    "TransmissionPolicy",
    "brute_force_small",
    "build_pour_plan",
    "env_seed",
    "evaluate_throughput",
    "glue_pour",
    "level_energy_map",
    "load_policy",
    "load_scenario",
    "merge_event_streams",
    "objective_and_gradient",
    "on_power",
    "random_scenario",
    "save_policy",
    "save_scenario",
    "single_arrival_policy",
    "solve_convex",
    "solve_dbgp",
    "validate_policy",
    "verify_optimality",
]
