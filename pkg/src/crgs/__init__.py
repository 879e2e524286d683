"""Crosstalk-robust single-qubit gate sets from direct-collocation trajectory optimization."""

from .gateset import (
    CrgsBounds,
    CrgsGraph,
    GateSetSpec,
    PulseLibrary,
    build_crgs_problem,
    build_graph,
    detuning_robust_problem,
    export_library,
    gaussian_library,
    pareto_sweep,
    solve_crgs,
)
from .layout import LayoutGraph, color_layout, preset
from .optimize import TrajectoryProblem, robustness_problem, smooth_pulse_problem, solve
from .solver import SolverConfig, SolveReport
from .susceptibility import pairwise_continuous, pairwise_susceptibility
from .trajectory import ControlSystem, ControlTrajectory, error_susceptibility, rollout, x_drive_system

__version__ = "0.1.0"

__all__ = [
    "ControlSystem",
    "ControlTrajectory",
    "CrgsBounds",
    "CrgsGraph",
    "GateSetSpec",
    "LayoutGraph",
    "PulseLibrary",
    "SolveReport",
    "SolverConfig",
    "TrajectoryProblem",
    "build_crgs_problem",
    "build_graph",
    "color_layout",
    "detuning_robust_problem",
    "error_susceptibility",
    "export_library",
    "gaussian_library",
    "pairwise_continuous",
    "pairwise_susceptibility",
    "pareto_sweep",
    "preset",
    "robustness_problem",
    "rollout",
    "smooth_pulse_problem",
    "solve",
    "solve_crgs",
    "x_drive_system",
]
