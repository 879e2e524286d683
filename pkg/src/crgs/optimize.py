"""Trajectory-optimization problems over one or more independent single-gate trajectories.

A :class:`TrajectoryProblem` holds vertices (one trajectory each), objective
terms that may couple vertices, and per-vertex constraints. :func:`solve`
flattens the free vertices into one vector, runs the augmented Lagrangian
solver with the dynamics as equality constraints, then re-integrates each
solution from its accelerations so the returned trajectories are exactly
dynamically feasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .solver import NLP, SolverConfig, SolveReport, augmented_lagrangian, check_gradient as _check_gradient
from .susceptibility import pad_unitaries, pairwise_continuous, pairwise_value_and_grads
from .trajectory import (
    COMPONENTS,
    ControlSystem,
    ControlTrajectory,
    _dynamics_parts,
    dynamics_residual,
    dynamics_vjp,
    error_susceptibility,
    error_susceptibility_grad,
    fidelity,
    fidelity_grad,
    integrate_controls,
    pulse_bounds,
    regularization,
    regularization_grad,
    rollout,
    step_derivatives,
    uniform_timesteps,
    x_drive_system,
)

BOUND_MARGIN = 1e-4


@dataclass
class Vertex:
    name: str
    system: ControlSystem
    goal: np.ndarray | None = None
    fixed: bool = False
    angle: float | None = None  # integrated rotation on channel 0, when pinned


# terms ---------------------------------------------------------------------


@dataclass
class InfidelityTerm:
    vertex: int
    goal: np.ndarray
    weight: float = 1.0

    def evaluate(self, trajs):
        z = trajs[self.vertex]
        g = fidelity_grad(z, self.goal)
        return self.weight * abs(1.0 - fidelity(z, self.goal)), {self.vertex: {"U": -self.weight * g["U"]}}


@dataclass
class RegularizationTerm:
    vertex: int
    r: float
    weight: float = 0.5

    def evaluate(self, trajs):
        z = trajs[self.vertex]
        g = regularization_grad(z, self.r)
        return self.weight * regularization(z, self.r), {self.vertex: {k: self.weight * v for k, v in g.items()}}


@dataclass
class SusceptibilityTerm:
    vertex: int
    h_err: object
    weight: float = 1.0

    def evaluate(self, trajs):
        z = trajs[self.vertex]
        g = error_susceptibility_grad(z, self.h_err)
        return self.weight * error_susceptibility(z, self.h_err), {self.vertex: {"U": self.weight * g["U"]}}


@dataclass
class PairwiseTerm:
    i: int
    j: int
    pair: tuple = ("Z", "Z")
    weight: float = 1.0
    substeps: int = 0  # 0: knot sum; >0: frames resolved inside each interval
    system: ControlSystem | None = None

    def evaluate(self, trajs):
        zi, zj = trajs[self.i], trajs[self.j]
        if self.substeps:
            val, gi, gj = pairwise_continuous(zi, zj, self.system or x_drive_system(), self.pair, self.substeps)
            w = self.weight
            return w * val, {
                self.i: {k: w * v for k, v in gi.items()},
                self.j: {k: w * v for k, v in gj.items()},
            }
        T = max(zi.T, zj.T)
        ui = pad_unitaries(zi.unitaries, T)
        uj = pad_unitaries(zj.unitaries, T)
        val, gi, gj = pairwise_value_and_grads(ui, uj, self.pair)
        return self.weight * val, {
            self.i: {"U": self.weight * _fold(gi, zi.T)},
            self.j: {"U": self.weight * _fold(gj, zj.T)},
        }


def _fold(g, knots):
    if g.shape[0] == knots:
        return g
    out = g[:knots].copy()
    out[-1] += g[knots:].sum(axis=0)
    return out


@dataclass
class FidelityConstraint:
    """``|1 - F| <= 1 - F0`` written as ``F0 - F <= 0``."""

    vertex: int
    goal: np.ndarray
    required: float

    def evaluate(self, trajs):
        z = trajs[self.vertex]
        return self.required - fidelity(z, self.goal), {"U": -fidelity_grad(z, self.goal)["U"]}


@dataclass
class AreaConstraint:
    """Pins ``sum_t a_t dt_t`` on one channel to ``angle``."""

    vertex: int
    angle: float
    channel: int = 0

    def evaluate(self, trajs):
        z = trajs[self.vertex]
        h = z.timesteps[:-1]
        val = float(np.sum(z.a[:-1, self.channel] * h)) - self.angle
        ga = np.zeros_like(z.a)
        ga[:-1, self.channel] = h
        gdt = np.zeros(z.T)
        gdt[:-1] = z.a[:-1, self.channel]
        return val, {"a": ga, "dt": gdt}


@dataclass
class TrajectoryProblem:
    vertices: list
    objective: list = field(default_factory=list)
    inequalities: list = field(default_factory=list)
    equalities: list = field(default_factory=list)

    @property
    def decision_vertices(self) -> list:
        return [k for k, v in enumerate(self.vertices) if not v.fixed]

    def objective_value(self, trajs) -> float:
        return float(sum(t.evaluate(trajs)[0] for t in self.objective))


# templates -----------------------------------------------------------------


def smooth_pulse_problem(goal: np.ndarray, system: ControlSystem | None = None, r: float = 0.01) -> TrajectoryProblem:
    """Infidelity plus regularization, dynamics and bounds only."""
    system = system or x_drive_system()
    v = Vertex("gate", system, goal)
    return TrajectoryProblem([v], [InfidelityTerm(0, goal), RegularizationTerm(0, r)])


def robustness_problem(
    goal: np.ndarray,
    h_err,
    required_fidelity: float = 0.9999,
    system: ControlSystem | None = None,
    r: float = 0.01,
    angle: float | None = None,
) -> TrajectoryProblem:
    """Error susceptibility plus regularization with fidelity moved to a constraint."""
    system = system or x_drive_system()
    v = Vertex("gate", system, goal, angle=angle)
    eqs = [AreaConstraint(0, angle)] if angle is not None else []
    return TrajectoryProblem(
        [v],
        [SusceptibilityTerm(0, h_err), RegularizationTerm(0, r)],
        [FidelityConstraint(0, goal, required_fidelity)],
        eqs,
    )


# initial guesses -----------------------------------------------------------


def _linear_end_map(timesteps, channels_a0, channels_da0):
    """Affine map from the ``T-1`` accelerations of one channel to (a_T, da_T, area)."""
    T = timesteps.shape[0]
    h = timesteps[:-1]

    def outputs(dda, a0, da0):
        a, da = integrate_controls(np.append(dda, 0.0)[:, None], np.array([a0]), np.array([da0]), timesteps)
        return np.array([a[-1, 0], da[-1, 0], float(np.sum(a[:-1, 0] * h))])

    offset = outputs(np.zeros(T - 1), channels_a0, channels_da0)
    cols = [outputs(np.eye(T - 1)[k], 0.0, 0.0) for k in range(T - 1)]
    return np.array(cols).T, offset


def restore_linear_constraints(z: ControlTrajectory, angle: float | None, system: ControlSystem) -> ControlTrajectory:
    """Min-norm acceleration correction hitting pinned end values and the area exactly, then re-rollout."""
    dda = z.dda.copy()
    bounds = z.bounds
    for c in range(z.n_channels):
        m, off = _linear_end_map(z.timesteps, z.a[0, c], z.da[0, c])
        rows, target = [], []
        if "a" in bounds and bounds["a"][-1, c] == 0.0:
            rows.append(0)
            target.append(0.0)
        if "da" in bounds and bounds["da"][-1, c] == 0.0:
            rows.append(1)
            target.append(0.0)
        if angle is not None and c == 0:
            rows.append(2)
            target.append(angle)
        if not rows:
            continue
        mm = m[rows]
        cap = bounds["dda"][:-1, c] if "dda" in bounds else np.full(mm.shape[1], np.inf)
        free = np.ones(mm.shape[1], dtype=bool)
        x = dda[:-1, c]
        # active set: entries pushed past the curvature bound are clipped and frozen
        for _ in range(8):
            resid = np.array(target) - (mm @ x + off[rows])
            mf = mm[:, free]
            x = x.copy()
            x[free] += mf.T @ np.linalg.solve(mf @ mf.T, resid)
            over = free & (np.abs(x) > cap)
            if not over.any():
                break
            x[over] = np.clip(x[over], -cap[over], cap[over])
            free &= ~over
            if free.sum() < len(rows):
                break
        dda[:-1, c] = x
    dda[-1] = 0.0
    out = rollout(system, dda, z.a[0], z.da[0], z.timesteps, z.bounds, z.metadata)
    return out


def gaussian_pulse(
    angle: float,
    duration: float = 240.0,
    knots: int = 50,
    sigma_fraction: float = 1.0 / 6.0,
    system: ControlSystem | None = None,
    bounds: dict | None = None,
) -> ControlTrajectory:
    """Gaussian-shaped rotation whose accelerations are shaped so the pulse starts and ends at rest.

    Accelerations follow the second derivative of a Gaussian and are then
    corrected (minimum norm) so that the envelope and its slope vanish at
    both ends and the area equals ``angle``; the resulting unitary is exactly
    ``R_X(angle)`` on the in-phase drive.
    """
    system = system or x_drive_system()
    ts = uniform_timesteps(duration, knots)
    tc = np.concatenate([[0.0], np.cumsum(ts[:-1])])[:-1] + ts[:-1] / 2
    sigma = sigma_fraction * duration
    x = (tc - duration / 2) / sigma
    shape = (x**2 - 1) * np.exp(-0.5 * x**2) / sigma**2
    dda = np.zeros((knots, system.n_channels))
    dda[:-1, 0] = shape
    b = bounds if bounds is not None else pulse_bounds(knots, system.n_channels)
    z = rollout(system, dda, None, None, ts, b)
    area = float(np.sum(z.a[:-1, 0] * ts[:-1]))
    if abs(area) > 0:
        dda *= angle / area
        z = rollout(system, dda, None, None, ts, b)
    z = restore_linear_constraints(z, angle, system)
    z.metadata.update({"shape": "gaussian", "angle": angle, "duration_ns": duration})
    return z


def idle_trajectory(duration: float = 240.0, knots: int = 50, system: ControlSystem | None = None) -> ControlTrajectory:
    system = system or x_drive_system()
    ts = uniform_timesteps(duration, knots)
    z = rollout(system, np.zeros((knots, system.n_channels)), None, None, ts, pulse_bounds(knots, system.n_channels, 0.0, 0.0, 0.0))
    z.metadata.update({"shape": "idle", "angle": 0.0, "duration_ns": duration})
    return z


def initial_guess(
    angle: float,
    duration: float,
    knots: int,
    bounds: dict,
    seed: int,
    system: ControlSystem | None = None,
    noise: float = 1e-3,
) -> ControlTrajectory:
    """Gaussian rollout plus uniform noise on the accelerations, relative to the curvature bound."""
    system = system or x_drive_system()
    z = gaussian_pulse(angle, duration, knots, system=system, bounds=bounds)
    rng = np.random.default_rng(seed)
    scale = _component_scale(z, "dda")
    dda = z.dda + noise * scale * rng.uniform(-1, 1, size=z.dda.shape)
    dda[-1] = 0.0
    z = rollout(system, dda, z.a[0], z.da[0], z.timesteps, bounds, z.metadata)
    return restore_linear_constraints(z, angle, system)


# packing -------------------------------------------------------------------


def _component_scale(z: ControlTrajectory, name: str) -> float:
    b = z.bounds.get(name)
    if b is not None:
        finite = b[np.isfinite(b) & (b > 0)]
        if finite.size:
            return float(np.max(finite))
    vals = np.abs(getattr(z, name))
    m = float(np.max(vals)) if vals.size else 0.0
    return m if m > 0 else 1.0


SCALE_MODE = "integrator"


def control_scales(z: ControlTrajectory):
    """Variable scales for (a, da, dda).

    The value scale comes from the amplitude bound; velocity and acceleration
    scales follow from the mean step so that one scaled unit of each moves
    the next knot's value by a comparable amount.
    """
    s_a = _component_scale(z, "a")
    if SCALE_MODE == "bounds":
        s_dda = _component_scale(z, "dda")
        return s_a, np.sqrt(s_a * s_dda), s_dda
    h = float(np.mean(z.timesteps[:-1]))
    return s_a, s_a / h, 2 * s_a / h**2


class _Layout:
    """Index bookkeeping for the flattened decision vector."""

    def __init__(self, templates: Sequence[ControlTrajectory], free: Sequence[int]):
        self.templates = templates
        self.free = list(free)
        self.slices = {}
        offset = 0
        for k in self.free:
            z = templates[k]
            n_u = z.T * z.dim * z.dim
            n_c = z.T * z.n_channels
            sizes = [("Ur", n_u), ("Ui", n_u), ("a", n_c), ("da", n_c), ("dda", n_c), ("dt", z.T)]
            sl = {}
            for name, n in sizes:
                sl[name] = slice(offset, offset + n)
                offset += n
            self.slices[k] = sl
        self.n = offset

    def pack(self, trajs) -> np.ndarray:
        x = np.empty(self.n)
        for k in self.free:
            z, sl = trajs[k], self.slices[k]
            x[sl["Ur"]] = z.unitaries.real.ravel()
            x[sl["Ui"]] = z.unitaries.imag.ravel()
            for name in COMPONENTS:
                x[sl[name]] = getattr(z, name).ravel()
            x[sl["dt"]] = z.timesteps
        return x

    def unpack(self, x) -> list:
        out = list(self.templates)
        for k in self.free:
            t, sl = self.templates[k], self.slices[k]
            shape_u = t.unitaries.shape
            shape_c = t.a.shape
            z = ControlTrajectory.__new__(ControlTrajectory)
            z.unitaries = (x[sl["Ur"]] + 1j * x[sl["Ui"]]).reshape(shape_u)
            z.a = x[sl["a"]].reshape(shape_c)
            z.da = x[sl["da"]].reshape(shape_c)
            z.dda = x[sl["dda"]].reshape(shape_c)
            z.timesteps = x[sl["dt"]]
            z.bounds = t.bounds
            z.free_timesteps = t.free_timesteps
            z.metadata = t.metadata
            out[k] = z
        return out

    def grad_vector(self, grads: dict) -> np.ndarray:
        g = np.zeros(self.n)
        for k, parts in grads.items():
            if k not in self.slices:
                continue
            sl = self.slices[k]
            for name, val in parts.items():
                if name == "U":
                    g[sl["Ur"]] += val.real.ravel()
                    g[sl["Ui"]] += val.imag.ravel()
                else:
                    g[sl[name]] += np.ravel(val)
        return g

    def box(self, margin: float = BOUND_MARGIN):
        lo = np.full(self.n, -np.inf)
        hi = np.full(self.n, np.inf)
        scale = np.ones(self.n)
        for k in self.free:
            z, sl = self.templates[k], self.slices[k]
            d = z.dim
            eye = np.eye(d)
            for part, ref in (("Ur", eye), ("Ui", np.zeros((d, d)))):
                l = np.full((z.T, d, d), -1.0)
                h = np.full((z.T, d, d), 1.0)
                l[0] = h[0] = ref
                lo[sl[part]] = l.ravel()
                hi[sl[part]] = h.ravel()
            s_a, s_da, s_dda = control_scales(z)
            for name, s in (("a", s_a), ("da", s_da), ("dda", s_dda)):
                b = z.bounds.get(name)
                if b is None:
                    b = np.full(z.a.shape, np.inf)
                b = np.where(b > 0, b * (1 - margin), 0.0)
                b = b.copy()
                # initial conditions are data, not decisions
                b0 = getattr(z, name)[0] if name != "dda" else None
                lo_c = -b
                hi_c = b.copy()
                if b0 is not None:
                    lo_c[0] = hi_c[0] = b0
                lo[sl[name]] = lo_c.ravel()
                hi[sl[name]] = hi_c.ravel()
                scale[sl[name]] = s
            if z.free_timesteps:
                lo[sl["dt"]] = 0.25 * z.timesteps
                hi[sl["dt"]] = 4.0 * z.timesteps
            else:
                lo[sl["dt"]] = hi[sl["dt"]] = z.timesteps
            scale[sl["dt"]] = float(np.mean(z.timesteps))
        return lo, hi, scale


def _build_nlp(problem: TrajectoryProblem, z0: Sequence[ControlTrajectory]):
    free = problem.decision_vertices
    layout = _Layout(z0, free)
    lo, hi, scale = layout.box()

    dyn_scales = {}
    for k in free:
        z = z0[k]
        s_a, s_da, _ = control_scales(z)
        dyn_scales[k] = (s_a, s_da)

    def objective(x):
        trajs = layout.unpack(x)
        total = 0.0
        g = np.zeros(layout.n)
        for term in problem.objective:
            val, grads = term.evaluate(trajs)
            total += val
            g += layout.grad_vector(grads)
        return total, g

    def equality(x):
        trajs = layout.unpack(x)
        vals = []
        pieces = []
        caches = {}
        for k in free:
            z = trajs[k]
            s_a, s_da = dyn_scales[k]
            cache = step_derivatives(problem.vertices[k].system, z)
            caches[k] = cache
            r_u, r_a, r_v = _dynamics_parts(problem.vertices[k].system, z, cache[1])
            vals.append(np.concatenate([r_u.real.ravel(), r_u.imag.ravel(), (r_a / s_a).ravel(), (r_v / s_da).ravel()]))
            pieces.append(("dyn", k, r_u.shape, r_a.shape))
        for con in problem.equalities:
            val, _ = con.evaluate(trajs)
            vals.append(np.array([val]))
            pieces.append(("lin", con, None, None))
        c = np.concatenate(vals) if vals else np.zeros(0)

        def vjp(y):
            g = np.zeros(layout.n)
            off = 0
            for kind, obj, su, sa in pieces:
                if kind == "dyn":
                    k = obj
                    z = trajs[k]
                    s_a, s_da = dyn_scales[k]
                    n_u = int(np.prod(su))
                    n_a = int(np.prod(sa))
                    y_u = (y[off : off + n_u] + 1j * y[off + n_u : off + 2 * n_u]).reshape(su)
                    off += 2 * n_u
                    y_a = y[off : off + n_a].reshape(sa) / s_a
                    off += n_a
                    y_v = y[off : off + n_a].reshape(sa) / s_da
                    off += n_a
                    g += layout.grad_vector({k: dynamics_vjp(problem.vertices[k].system, z, y_u, y_a, y_v, caches[k])})
                else:
                    _, parts = obj.evaluate(trajs)
                    g += layout.grad_vector({obj.vertex: {n: y[off] * v for n, v in parts.items()}})
                    off += 1
            return g

        return c, vjp

    def inequality(x):
        trajs = layout.unpack(x)
        vals = []
        grads = []
        for con in problem.inequalities:
            val, parts = con.evaluate(trajs)
            vals.append(val)
            grads.append(layout.grad_vector({con.vertex: parts}))
        c = np.array(vals)

        def vjp(y):
            g = np.zeros(layout.n)
            for w, gv in zip(y, grads):
                g += w * gv
            return g

        return c, vjp

    nlp = NLP(layout.pack(z0), objective, lo, hi, equality, inequality if problem.inequalities else None, scale)
    return nlp, layout


def problem_functions(problem: TrajectoryProblem, z0):
    """Expose the flattened objective/constraint callables, e.g. for derivative checks."""
    z0 = list(z0) if isinstance(z0, (list, tuple)) else [z0]
    nlp, layout = _build_nlp(problem, z0)
    return nlp, layout


def constraint_violation(problem: TrajectoryProblem, trajs) -> float:
    """Max-norm violation over dynamics, bounds, pinned areas and fidelity constraints (raw units)."""
    worst = 0.0
    for k in problem.decision_vertices:
        z = trajs[k]
        worst = max(worst, float(np.max(np.abs(dynamics_residual(problem.vertices[k].system, z)))))
        worst = max(worst, z.max_bound_violation())
        worst = max(worst, float(np.max(np.abs(z.unitaries[0] - np.eye(z.dim)))))
    for con in problem.equalities:
        worst = max(worst, abs(con.evaluate(trajs)[0]))
    for con in problem.inequalities:
        worst = max(worst, con.evaluate(trajs)[0])
    return worst


def solve(problem: TrajectoryProblem, z0, cfg: SolverConfig | None = None):
    """Solve a trajectory problem from ``z0`` (one trajectory or one per vertex).

    Returns ``(solution, report)`` where ``solution`` mirrors the shape of ``z0``.
    """
    cfg = cfg or SolverConfig()
    single = isinstance(z0, ControlTrajectory)
    z0 = [z0] if single else list(z0)
    if len(z0) != len(problem.vertices):
        raise ValueError("need one initial trajectory per vertex")
    for z in z0:
        for name, b in z.bounds.items():
            if np.any(b < 0):
                raise ValueError(f"negative bound on {name}")
    if not 0.0 <= cfg.fidelity <= 1.0:
        raise ValueError("required fidelity must be at most 1")

    free = problem.decision_vertices
    if not free:
        trajs = z0
        report = SolveReport(problem.objective_value(trajs), constraint_violation(problem, trajs), _fidelities(problem, trajs), 0, True, "nothing to optimize")
        return (trajs[0] if single else trajs), report

    nlp, layout = _build_nlp(problem, z0)

    def restore_all(x):
        trajs = layout.unpack(x)
        out = list(z0)
        for k in free:
            v, raw = problem.vertices[k], trajs[k]
            z = ControlTrajectory(
                raw.unitaries.copy(), raw.a.copy(), raw.da.copy(), raw.dda.copy(), raw.timesteps.copy(), z0[k].bounds, z0[k].free_timesteps, dict(z0[k].metadata)
            )
            out[k] = restore_linear_constraints(z, v.angle, v.system)
        return out

    def restore_flat(x):
        trajs = restore_all(x)
        return layout.pack(trajs), constraint_violation(problem, trajs)

    result = augmented_lagrangian(nlp, cfg, restore=restore_flat)
    restored = restore_all(result.x)
    viol = constraint_violation(problem, restored)
    converged = bool(result.converged and viol <= cfg.tolerance)
    report = SolveReport(
        objective=problem.objective_value(restored),
        violation=viol,
        fidelities=_fidelities(problem, restored),
        iterations=result.iterations,
        converged=converged,
        message="converged" if converged else f"violation {viol:.3e} after {result.iterations} outer iterations",
        history=result.history,
    )
    return (restored[0] if single else restored), report


def _fidelities(problem, trajs):
    out = []
    for k, v in enumerate(problem.vertices):
        out.append(fidelity(trajs[k], v.goal) if v.goal is not None else float("nan"))
    return out


def check_gradient(problem: TrajectoryProblem, z, k: int = 5, step: float = 1e-6, seed: int = 0) -> float:
    """Worst relative finite-difference error over every objective term and constraint block."""
    z = [z] if isinstance(z, ControlTrajectory) else list(z)
    nlp, layout = _build_nlp(problem, z)
    x = layout.pack(z)
    free_mask = (nlp.lower != nlp.upper).astype(float)
    worst = 0.0
    for term in problem.objective:
        def f(xx, term=term):
            val, grads = term.evaluate(layout.unpack(xx))
            return val, layout.grad_vector(grads)

        worst = max(worst, _check_gradient(f, x, k, step, seed, free_mask))
    if nlp.equality is not None:
        worst = max(worst, _check_gradient(nlp.equality, x, k, step, seed, free_mask))
    if nlp.inequality is not None:
        worst = max(worst, _check_gradient(nlp.inequality, x, k, step, seed, free_mask))
    return worst
