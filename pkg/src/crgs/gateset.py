"""Crosstalk-robust gate sets: graph assembly, joint solves, bound sweeps and pulse libraries."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .optimize import (
    AreaConstraint,
    FidelityConstraint,
    PairwiseTerm,
    RegularizationTerm,
    SusceptibilityTerm,
    TrajectoryProblem,
    Vertex,
    gaussian_pulse,
    idle_trajectory,
    initial_guess,
    solve,
)
from .quantum import I2, SZ, rx
from .solver import SolverConfig, SolveReport
from .susceptibility import pad_trajectory, pairwise_susceptibility
from .trajectory import ControlTrajectory, error_susceptibility, pulse_bounds, rollout, uniform_timesteps, x_drive_system

log = logging.getLogger(__name__)

DEFAULT_DETUNING = 2 * np.pi * 0.01  # rad/ns


@dataclass(frozen=True)
class GateSpec:
    name: str
    target: np.ndarray
    duration: float = 240.0
    angle: float = 0.0
    fixed: bool = False


@dataclass
class GateSetSpec:
    gates: list = field(default_factory=list)
    channels: int = 1

    def __post_init__(self):
        if not self.gates:
            self.gates = default_gates()
        idle = [g for g in self.gates if g.fixed]
        if len(idle) != 1:
            raise ValueError("a gate set needs exactly one fixed idle gate")
        names = [g.name for g in self.gates]
        if len(set(names)) != len(names):
            raise ValueError("gate names must be unique")

    def gate(self, name: str) -> GateSpec:
        for g in self.gates:
            if g.name == name:
                return g
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.gates]

    @property
    def max_duration(self) -> float:
        return max(g.duration for g in self.gates)


def default_gates(duration: float = 240.0) -> list:
    return [
        GateSpec("id", I2, duration, 0.0, True),
        GateSpec("sx", rx(np.pi / 2), duration, np.pi / 2),
        GateSpec("x", rx(np.pi), duration, np.pi),
    ]


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    pair: tuple = ("Z", "Z")


@dataclass
class CrgsGraph:
    colors: list
    vertices: list  # (color, gate name)
    edges: list

    def __post_init__(self):
        n = len(self.vertices)
        for e in self.edges:
            if not (0 <= e.i < n and 0 <= e.j < n):
                raise ValueError(f"edge ({e.i}, {e.j}) references a missing vertex")
            if self.vertices[e.i][0] == self.vertices[e.j][0]:
                raise ValueError("edges must join vertices of different colors")

    def index(self, color, gate) -> int:
        return self.vertices.index((color, gate))

    def label(self, k: int) -> str:
        c, g = self.vertices[k]
        return f"{c}:{g}"


def build_graph(spec: GateSetSpec, colors: Sequence, mode: str = "all", pair=("Z", "Z")) -> CrgsGraph:
    """Vertices are (color, gate); edges join gates of different colors.

    ``mode="all"`` pairs every cross-color gate combination except idle with
    idle, whose value is a constant. ``mode="same-gate"`` keeps only equal
    gates plus gate-idle pairs.
    """
    if mode not in ("all", "same-gate"):
        raise ValueError(f"unknown edge mode {mode!r}")
    colors = list(colors)
    vertices = [(c, g.name) for c in colors for g in spec.gates]
    fixed = {g.name for g in spec.gates if g.fixed}
    edges = []
    for a, b in itertools.combinations(range(len(vertices)), 2):
        (ca, ga), (cb, gb) = vertices[a], vertices[b]
        if ca == cb or (ga in fixed and gb in fixed):
            continue
        if mode == "same-gate" and ga != gb and ga not in fixed and gb not in fixed:
            continue
        edges.append(Edge(a, b, tuple(pair)))
    return CrgsGraph(colors, vertices, edges)


@dataclass(frozen=True)
class CrgsBounds:
    amplitude: float  # rad/ns
    curvature: float  # rad/ns^3

    def __post_init__(self):
        if not (self.amplitude > 0 and self.curvature > 0):
            raise ValueError("bounds must be positive")


@dataclass
class CrgsProblem:
    spec: GateSetSpec
    graph: CrgsGraph
    bounds: CrgsBounds
    problem: TrajectoryProblem
    knots: dict  # gate name -> knot count

    def initial(self, seed: int = 0, noise: float = 1e-3) -> list:
        """Noisy Gaussian start per decision vertex; fixed vertices get the idle trajectory."""
        out = []
        for k, (color, name) in enumerate(self.graph.vertices):
            g = self.spec.gate(name)
            T = self.knots[name]
            if g.fixed:
                out.append(idle_trajectory(g.duration, T))
                continue
            b = pulse_bounds(T, 1, self.bounds.amplitude, self.bounds.curvature)
            z = initial_guess(g.angle, g.duration, T, b, seed + 1000 * k, noise=noise)
            z.metadata.update({"color": color, "gate": name})
            out.append(z)
        return out

    def rebound(self, trajs: list) -> list:
        """Copy trajectories with this problem's bounds attached (for warm starts)."""
        out = []
        for k, z in enumerate(trajs):
            name = self.graph.vertices[k][1]
            z = z.copy()
            if not self.spec.gate(name).fixed:
                z.bounds = pulse_bounds(z.T, 1, self.bounds.amplitude, self.bounds.curvature)
            out.append(z)
        return out


def knot_counts(spec: GateSetSpec, knots: int) -> dict:
    step = spec.max_duration / (knots - 1)
    return {g.name: int(round(g.duration / step)) + 1 for g in spec.gates}


def build_crgs_problem(
    spec: GateSetSpec,
    graph: CrgsGraph,
    bounds: CrgsBounds,
    fidelity: float = 0.9999,
    regularization: float = 1e-3,
    knots: int = 50,
    detuning: float | None = None,
    area_constraint: bool = True,
    substeps: int = 0,
) -> CrgsProblem:
    """Joint problem: summed edge susceptibility plus per-vertex regularization.

    Each decision vertex carries its own dynamics, bounds, fidelity
    inequality and (optionally) a pinned rotation area; ``detuning`` adds an
    on-site ``detuning * sigma_Z`` susceptibility term per decision vertex.
    ``substeps > 0`` evaluates edge terms on frames resolved inside each
    interval instead of at the knots only.
    """
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("required fidelity must lie in [0, 1]")
    system = x_drive_system()
    n = len(graph.vertices)
    for e in graph.edges:
        if not (0 <= e.i < n and 0 <= e.j < n):
            raise ValueError(f"edge ({e.i}, {e.j}) references a missing vertex")
    vertices = []
    objective = []
    ineqs = []
    eqs = []
    for k, (color, name) in enumerate(graph.vertices):
        try:
            g = spec.gate(name)
        except KeyError:
            raise ValueError(f"vertex {color}:{name} is not in the gate set") from None
        vertices.append(Vertex(f"{color}:{name}", system, g.target, g.fixed, g.angle if area_constraint else None))
        if g.fixed:
            continue
        objective.append(RegularizationTerm(k, regularization))
        ineqs.append(FidelityConstraint(k, g.target, fidelity))
        if area_constraint:
            eqs.append(AreaConstraint(k, g.angle))
        if detuning:
            objective.append(SusceptibilityTerm(k, detuning * SZ))
    for e in graph.edges:
        objective.append(PairwiseTerm(e.i, e.j, e.pair, substeps=substeps, system=system))
    problem = TrajectoryProblem(vertices, objective, ineqs, eqs)
    return CrgsProblem(spec, graph, bounds, problem, knot_counts(spec, knots))


def detuning_robust_problem(spec: GateSetSpec, bounds: CrgsBounds, detuning: float = DEFAULT_DETUNING, **kw) -> CrgsProblem:
    """Single color, no edges, on-site detuning susceptibility only."""
    return build_crgs_problem(spec, build_graph(spec, ["c0"]), bounds, detuning=detuning, **kw)


def edge_values(graph: CrgsGraph, trajs: Sequence[ControlTrajectory]) -> list[dict]:
    out = []
    for e in graph.edges:
        zi, zj = trajs[e.i], trajs[e.j]
        T = max(zi.T, zj.T)
        v = pairwise_susceptibility(pad_trajectory(zi, T), pad_trajectory(zj, T), e.pair)
        out.append({"i": graph.label(e.i), "j": graph.label(e.j), "pair": "".join(e.pair), "value": v})
    return out


def summed_susceptibility(graph: CrgsGraph, trajs) -> float:
    return float(sum(row["value"] for row in edge_values(graph, trajs)))


@dataclass
class CrgsResult:
    problem: CrgsProblem
    trajectories: list
    report: SolveReport

    @property
    def summed_susceptibility(self) -> float:
        return summed_susceptibility(self.problem.graph, self.trajectories)

    def fidelities(self) -> dict:
        g = self.problem.graph
        return {g.label(k): f for k, f in enumerate(self.report.fidelities)}


def solve_crgs(cp: CrgsProblem, cfg: SolverConfig | None = None, z0=None) -> CrgsResult:
    cfg = cfg or SolverConfig()
    z0 = cp.initial(cfg.seed) if z0 is None else cp.rebound(z0)
    trajs, report = solve(cp.problem, z0, cfg)
    for k, (color, name) in enumerate(cp.graph.vertices):
        trajs[k].metadata.update({"color": color, "gate": name})
    return CrgsResult(cp, trajs, report)


def gaussian_library_trajectories(spec: GateSetSpec, graph: CrgsGraph, knots: int = 50) -> list:
    """Baseline: every color plays the same Gaussian rotation for each gate."""
    counts = knot_counts(spec, knots)
    out = []
    for color, name in graph.vertices:
        g = spec.gate(name)
        z = idle_trajectory(g.duration, counts[name]) if g.fixed else gaussian_pulse(g.angle, g.duration, counts[name])
        z.metadata.update({"color": color, "gate": name})
        out.append(z)
    return out


# sweep -----------------------------------------------------------------------


@dataclass
class SweepCell:
    amplitude: float
    curvature: float
    objective: float
    summed_susceptibility: float
    min_fidelity: float
    converged: bool
    violation: float
    message: str = ""
    result: CrgsResult | None = None

    def row(self) -> dict:
        return {
            "amplitude_rad_per_ns": self.amplitude,
            "curvature_rad_per_ns3": self.curvature,
            "objective": self.objective,
            "summed_susceptibility": self.summed_susceptibility,
            "min_fidelity": self.min_fidelity,
            "converged": self.converged,
            "violation": self.violation,
            "message": self.message,
        }


def _solve_cell(args):
    spec, graph, amp, curv, fidelity, r, knots, substeps, cfg, warm = args
    cp = build_crgs_problem(spec, graph, CrgsBounds(amp, curv), fidelity, r, knots, substeps=substeps)
    try:
        res = solve_crgs(cp, cfg, warm)
    except (ValueError, np.linalg.LinAlgError) as exc:
        log.warning("cell (%g, %g) failed: %s", amp, curv, exc)
        return SweepCell(amp, curv, np.nan, np.nan, np.nan, False, np.inf, str(exc))
    fids = [f for f in res.report.fidelities if np.isfinite(f)]
    return SweepCell(
        amp, curv, res.report.objective, res.summed_susceptibility, min(fids), res.report.converged, res.report.violation, res.report.message, res
    )


def pareto_sweep(
    spec: GateSetSpec,
    graph: CrgsGraph,
    amplitudes: Sequence[float],
    curvatures: Sequence[float],
    fidelity: float = 0.9999,
    cfg: SolverConfig | None = None,
    knots: int = 50,
    regularization: float | None = None,
    callback=None,
    substeps: int = 0,
    workers: int = 1,
) -> list[SweepCell]:
    """One CRGS solve per (amplitude, curvature) cell.

    Serially, each cell is warm-started from its converged smaller-bound
    neighbour. With ``workers > 1`` the cells are independent cold starts
    solved in a process pool.
    """
    if not len(amplitudes) or not len(curvatures):
        raise ValueError("sweep grids must be nonempty")
    cfg = cfg or SolverConfig()
    r = cfg.regularization if regularization is None else regularization
    amplitudes = sorted(amplitudes)
    curvatures = sorted(curvatures)
    grid = [(ia, ic, a, c) for ia, a in enumerate(amplitudes) for ic, c in enumerate(curvatures)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        jobs = [(spec, graph, a, c, fidelity, r, knots, substeps, cfg, None) for _, _, a, c in grid]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_solve_cell, jobs))
        if callback is not None:
            for cell in cells:
                callback(cell)
        return cells
    solved = {}
    cells = []
    for ia, ic, amp, curv in grid:
        warm = None
        for key in ((ia, ic - 1), (ia - 1, ic)):
            if key in solved and solved[key].report.converged:
                warm = solved[key].trajectories
                break
        cell = _solve_cell((spec, graph, amp, curv, fidelity, r, knots, substeps, cfg, warm))
        if cell.result is not None:
            solved[(ia, ic)] = cell.result
        cells.append(cell)
        if callback is not None:
            callback(cell)
    return cells


# pulse libraries ---------------------------------------------------------------


@dataclass
class PulseLibrary:
    entries: dict  # "color:gate" -> ControlTrajectory
    gates: dict = field(default_factory=dict)  # gate name -> {"duration_ns", "angle_rad", "fixed"}
    audit: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def colors(self) -> list:
        return sorted({k.split(":", 1)[0] for k in self.entries})

    def get(self, color, gate: str) -> ControlTrajectory:
        key = f"{color}:{gate}"
        if key not in self.entries:
            raise KeyError(f"library has no entry {key}")
        return self.entries[key]

    def to_dict(self) -> dict:
        return {
            "format": "crgs-pulse-library/1",
            "gates": self.gates,
            "metadata": self.metadata,
            "audit": self.audit,
            "entries": {k: z.to_dict() for k, z in self.entries.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PulseLibrary":
        return cls(
            {k: ControlTrajectory.from_dict(v) for k, v in d["entries"].items()},
            dict(d.get("gates", {})),
            list(d.get("audit", [])),
            dict(d.get("metadata", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "PulseLibrary":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def verify_audit(self) -> float:
        """Largest difference between stored edge values and a fresh recomputation."""
        worst = 0.0
        for row in self.audit:
            zi, zj = self.entries[row["i"]], self.entries[row["j"]]
            T = max(zi.T, zj.T)
            v = pairwise_susceptibility(pad_trajectory(zi, T), pad_trajectory(zj, T), tuple(row["pair"]))
            worst = max(worst, abs(v - row["value"]))
        return worst


def export_library(spec: GateSetSpec, graph: CrgsGraph, trajectories: Sequence[ControlTrajectory], metadata: dict | None = None) -> PulseLibrary:
    if len(trajectories) != len(graph.vertices) or any(z is None for z in trajectories):
        raise ValueError("every vertex needs a trajectory before export")
    entries = {graph.label(k): trajectories[k] for k in range(len(graph.vertices))}
    gates = {g.name: {"duration_ns": g.duration, "angle_rad": g.angle, "fixed": g.fixed} for g in spec.gates}
    meta = dict(metadata or {})
    meta.setdefault("colors", list(graph.colors))
    meta["detuning_susceptibility"] = {
        graph.label(k): error_susceptibility(trajectories[k], DEFAULT_DETUNING * SZ) for k in range(len(graph.vertices))
    }
    return PulseLibrary(entries, gates, edge_values(graph, trajectories), meta)


def square_pulse(angle: float, duration: float, knots: int = 2) -> ControlTrajectory:
    """Constant-envelope rotation (no ramps); an idealised reference, not a solver output."""
    sys = x_drive_system()
    return rollout(sys, np.zeros((knots, 1)), [angle / duration], [0.0], uniform_timesteps(duration, knots))


def gaussian_library(spec: GateSetSpec | None = None, colors=("red", "blue"), knots: int = 50) -> PulseLibrary:
    spec = spec or GateSetSpec()
    graph = build_graph(spec, list(colors))
    return export_library(spec, graph, gaussian_library_trajectories(spec, graph, knots), {"kind": "gaussian"})


def square_library(spec: GateSetSpec | None = None, colors=("red",)) -> PulseLibrary:
    spec = spec or GateSetSpec()
    entries = {}
    for c in colors:
        for g in spec.gates:
            entries[f"{c}:{g.name}"] = idle_trajectory(g.duration, 2) if g.fixed else square_pulse(g.angle, g.duration)
    gates = {g.name: {"duration_ns": g.duration, "angle_rad": g.angle, "fixed": g.fixed} for g in spec.gates}
    return PulseLibrary(entries, gates, [], {"kind": "square", "colors": list(colors)})
