"""Control trajectories: data model, exact rollout and differentiable terms.

A trajectory stores, at each of ``T`` knots, the unitary ``U_t``, the control
value ``a_t`` (rad/ns), its velocity ``da_t`` (rad/ns^2) and the
piecewise-constant acceleration ``dda_t`` (rad/ns^3) applied over the step of
length ``dt_t`` (ns) that leaves knot ``t``. The last knot's acceleration and
timestep are carried for shape regularity only.

Gradients of real-valued terms with respect to a complex unitary are returned
as ``G = df/dRe(U) + i df/dIm(U)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .quantum import (
    HERMITIAN_TOL,
    PauliString,
    SX,
    expm_frechet_skew,
    is_hermitian,
    matexp_skew,
    pauli_sum,
)

COMPONENTS = ("a", "da", "dda")


@dataclass(frozen=True)
class ControlSystem:
    """``H(a) = drift + sum_c a_c * drives[c]`` in rad/ns."""

    drives: tuple
    drift: np.ndarray | None = None

    def __post_init__(self):
        drives = tuple(np.asarray(h, dtype=complex) for h in self.drives)
        if not drives:
            raise ValueError("at least one drive channel is required")
        d = drives[0].shape[0]
        for h in drives:
            if h.shape != (d, d) or not is_hermitian(h):
                raise ValueError("drive generators must be Hermitian and equally sized")
        drift = self.drift
        if drift is not None:
            if isinstance(drift, PauliString):
                drift = drift.to_matrix()
            elif isinstance(drift, (list, tuple)):
                drift = pauli_sum(drift)
            drift = np.asarray(drift, dtype=complex)
            if drift.shape != (d, d) or not is_hermitian(drift):
                raise ValueError("drift must be Hermitian with the drive dimension")
        object.__setattr__(self, "drives", drives)
        object.__setattr__(self, "drift", drift)

    @property
    def dim(self) -> int:
        return self.drives[0].shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.drives)

    def hamiltonian(self, a: np.ndarray) -> np.ndarray:
        """Batched Hamiltonians for control values ``a`` of shape ``(..., C)``."""
        a = np.asarray(a, dtype=float)
        h = np.tensordot(a, np.stack(self.drives), axes=([-1], [0]))
        if self.drift is not None:
            h = h + self.drift
        return h


def x_drive_system() -> ControlSystem:
    """Single qubit, in-phase drive ``a * sigma_X / 2``, no drift."""
    return ControlSystem(drives=(SX / 2,))


@dataclass
class ControlTrajectory:
    unitaries: np.ndarray  # (T, d, d) complex
    a: np.ndarray  # (T, C)
    da: np.ndarray  # (T, C)
    dda: np.ndarray  # (T, C)
    timesteps: np.ndarray  # (T,)
    bounds: dict = field(default_factory=dict)  # component -> (T, C) absolute bounds
    free_timesteps: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.unitaries = np.asarray(self.unitaries, dtype=complex)
        T = self.unitaries.shape[0]
        if T < 2:
            raise ValueError("a trajectory needs at least two knots")
        if np.max(np.abs(self.unitaries[0] - np.eye(self.unitaries.shape[-1]))) > HERMITIAN_TOL:
            raise ValueError("trajectories start from the identity (U_1 = I)")
        for name in COMPONENTS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.shape[0] != T:
                raise ValueError(f"{name} has {arr.shape[0]} knots, expected {T}")
            setattr(self, name, arr)
        self.timesteps = np.broadcast_to(np.asarray(self.timesteps, dtype=float), (T,)).copy()
        if np.any(self.timesteps <= 0):
            raise ValueError("timesteps must be positive")
        bounds = {}
        for name, b in (self.bounds or {}).items():
            if name not in COMPONENTS:
                raise ValueError(f"unknown bounded component {name!r}")
            b = np.broadcast_to(np.asarray(b, dtype=float), self.a.shape).copy()
            if np.any(b < 0):
                raise ValueError(f"negative bound on {name}")
            bounds[name] = b
        self.bounds = bounds

    @property
    def T(self) -> int:
        return self.unitaries.shape[0]

    @property
    def dim(self) -> int:
        return self.unitaries.shape[1]

    @property
    def n_channels(self) -> int:
        return self.a.shape[1]

    @property
    def duration(self) -> float:
        return float(np.sum(self.timesteps[:-1]))

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.timesteps[:-1])])

    @property
    def final_unitary(self) -> np.ndarray:
        return self.unitaries[-1]

    def copy(self) -> "ControlTrajectory":
        return ControlTrajectory(
            self.unitaries.copy(),
            self.a.copy(),
            self.da.copy(),
            self.dda.copy(),
            self.timesteps.copy(),
            {k: v.copy() for k, v in self.bounds.items()},
            self.free_timesteps,
            dict(self.metadata),
        )

    def samples(self, channel: int = 0) -> np.ndarray:
        """Piecewise-constant envelope values played on each of the ``T-1`` steps."""
        return self.a[:-1, channel].copy()

    def max_bound_violation(self) -> float:
        worst = 0.0
        for name, b in self.bounds.items():
            worst = max(worst, float(np.max(np.abs(getattr(self, name)) - b)))
        return worst

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "knots": self.T,
            "dim": self.dim,
            "channels": self.n_channels,
            "timesteps_ns": self.timesteps.tolist(),
            "free_timesteps": self.free_timesteps,
            "initial_conditions": {
                "a_rad_per_ns": self.a[0].tolist(),
                "da_rad_per_ns2": self.da[0].tolist(),
            },
            "accelerations_rad_per_ns3": self.dda.tolist(),
            "a_rad_per_ns": self.a.tolist(),
            "da_rad_per_ns2": self.da.tolist(),
            "unitaries": {
                "real": self.unitaries.real.tolist(),
                "imag": self.unitaries.imag.tolist(),
            },
            "bounds": {k: v.tolist() for k, v in self.bounds.items()},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControlTrajectory":
        u = np.asarray(d["unitaries"]["real"]) + 1j * np.asarray(d["unitaries"]["imag"])
        return cls(
            unitaries=u,
            a=np.asarray(d["a_rad_per_ns"], dtype=float),
            da=np.asarray(d["da_rad_per_ns2"], dtype=float),
            dda=np.asarray(d["accelerations_rad_per_ns3"], dtype=float),
            timesteps=np.asarray(d["timesteps_ns"], dtype=float),
            bounds={k: np.asarray(v, dtype=float) for k, v in d.get("bounds", {}).items()},
            free_timesteps=bool(d.get("free_timesteps", False)),
            metadata=dict(d.get("metadata", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "ControlTrajectory":
        return cls.from_dict(json.loads(Path(path).read_text()))


def uniform_timesteps(duration: float, knots: int) -> np.ndarray:
    if knots < 2:
        raise ValueError("need at least two knots")
    return np.full(knots, duration / (knots - 1))


def pulse_bounds(knots: int, channels: int = 1, amplitude=np.inf, curvature=np.inf, velocity=np.inf) -> dict:
    """Box bounds with the pulse pinned to zero value and velocity at both ends."""
    shape = (knots, channels)
    a = np.full(shape, float(amplitude))
    da = np.full(shape, float(velocity))
    dda = np.full(shape, float(curvature))
    a[0] = a[-1] = 0.0
    da[0] = da[-1] = 0.0
    dda[-1] = 0.0
    return {"a": a, "da": da, "dda": dda}


def integrate_controls(dda, a0, da0, timesteps):
    """Exact double-integrator rollout of piecewise-constant accelerations."""
    dda = np.asarray(dda, dtype=float)
    T = dda.shape[0]
    a = np.empty_like(dda)
    da = np.empty_like(dda)
    a[0] = a0
    da[0] = da0
    for t in range(T - 1):
        h = timesteps[t]
        a[t + 1] = a[t] + da[t] * h + 0.5 * dda[t] * h * h
        da[t + 1] = da[t] + dda[t] * h
    return a, da


def propagators(sys: ControlSystem, a: np.ndarray, timesteps: np.ndarray) -> np.ndarray:
    """Step propagators ``exp(-i dt_t H(a_t))`` for steps ``t = 0..T-2``."""
    return matexp_skew(sys.hamiltonian(a[:-1]), timesteps[:-1])


def rollout(
    sys: ControlSystem,
    accelerations,
    a0=None,
    da0=None,
    timesteps=None,
    bounds: dict | None = None,
    metadata: dict | None = None,
) -> ControlTrajectory:
    """Integrate controls and unitaries forward from ``U_1 = I``.

    ``accelerations`` has shape ``(T, C)`` or ``(T-1, C)``; ``timesteps`` is a
    length-``T`` array or a scalar step.
    """
    dda = np.asarray(accelerations, dtype=float)
    if dda.ndim == 1:
        dda = dda[:, None]
    if dda.shape[1] != sys.n_channels:
        raise ValueError("acceleration channels do not match the control system")
    if timesteps is None:
        raise ValueError("timesteps are required")
    ts = np.asarray(timesteps, dtype=float)
    if ts.ndim == 0:
        T = dda.shape[0] if dda.shape[0] > 1 else 2
        ts = np.full(T, float(ts))
    T = ts.shape[0]
    if dda.shape[0] == T - 1:
        dda = np.vstack([dda, np.zeros((1, dda.shape[1]))])
    if dda.shape[0] != T:
        raise ValueError("accelerations and timesteps disagree on knot count")
    C = sys.n_channels
    a0 = np.zeros(C) if a0 is None else np.broadcast_to(np.asarray(a0, dtype=float), (C,))
    da0 = np.zeros(C) if da0 is None else np.broadcast_to(np.asarray(da0, dtype=float), (C,))
    a, da = integrate_controls(dda, a0, da0, ts)
    steps = propagators(sys, a, ts)
    u = np.empty((T, sys.dim, sys.dim), dtype=complex)
    u[0] = np.eye(sys.dim)
    for t in range(T - 1):
        u[t + 1] = steps[t] @ u[t]
    return ControlTrajectory(u, a, da, dda, ts, bounds or {}, False, dict(metadata or {}))


def dynamics_residual(sys: ControlSystem, z: ControlTrajectory) -> np.ndarray:
    """Stacked per-step residuals ``[vec(U_{t+1} - E_t U_t); a-recursion; da-recursion]``."""
    r_u, r_a, r_v = _dynamics_parts(sys, z)
    T = z.T
    parts = [
        r_u.real.reshape(T - 1, -1),
        r_u.imag.reshape(T - 1, -1),
        r_a,
        r_v,
    ]
    return np.concatenate(parts, axis=1).ravel()


def _dynamics_parts(sys, z, steps=None):
    h = z.timesteps[:-1, None]
    if steps is None:
        steps = propagators(sys, z.a, z.timesteps)
    r_u = z.unitaries[1:] - steps @ z.unitaries[:-1]
    r_a = z.a[1:] - z.a[:-1] - z.da[:-1] * h - 0.5 * z.dda[:-1] * h * h
    r_v = z.da[1:] - z.da[:-1] - z.dda[:-1] * h
    return r_u, r_a, r_v


def step_derivatives(sys: ControlSystem, z: ControlTrajectory):
    """Step propagators and their derivatives along each drive, from one eigendecomposition."""
    ham = sys.hamiltonian(z.a[:-1])
    steps, des = expm_frechet_skew(ham, z.timesteps[:-1], np.stack(sys.drives)[:, None])
    return ham, steps, des


def dynamics_vjp(sys: ControlSystem, z: ControlTrajectory, y_u, y_a, y_v, cache=None) -> dict:
    """Gradient of ``<y, residual>`` with respect to every trajectory component.

    ``y_u`` is complex ``(T-1, d, d)`` pairing real/imag residual parts;
    ``y_a`` and ``y_v`` are ``(T-1, C)``. ``cache`` is the output of
    :func:`step_derivatives` for ``z``.
    """
    T = z.T
    h = z.timesteps[:-1]
    ham, steps, des = cache if cache is not None else step_derivatives(sys, z)
    g_u = np.zeros_like(z.unitaries)
    g_a = np.zeros_like(z.a)
    g_da = np.zeros_like(z.da)
    g_dda = np.zeros_like(z.dda)
    g_dt = np.zeros(T)

    g_u[1:] += y_u
    yh = np.swapaxes(y_u.conj(), -1, -2)
    for c in range(sys.n_channels):
        g_a[:-1, c] -= np.real(np.einsum("tij,tjk,tki->t", yh, des[c], z.unitaries[:-1]))
    g_u[:-1] -= np.swapaxes(steps.conj(), -1, -2) @ y_u
    # d/d dt of exp(-i dt H) = -i H E
    dedt = -1j * ham @ steps
    g_dt[:-1] -= np.real(np.einsum("tij,tjk,tki->t", yh, dedt, z.unitaries[:-1]))

    hh = h[:, None]
    g_a[1:] += y_a
    g_a[:-1] -= y_a
    g_da[:-1] -= y_a * hh
    g_dda[:-1] -= 0.5 * y_a * hh * hh
    g_dt[:-1] -= np.sum(y_a * (z.da[:-1] + z.dda[:-1] * hh), axis=1)

    g_da[1:] += y_v
    g_da[:-1] -= y_v
    g_dda[:-1] -= y_v * hh
    g_dt[:-1] -= np.sum(y_v * z.dda[:-1], axis=1)
    return {"U": g_u, "a": g_a, "da": g_da, "dda": g_dda, "dt": g_dt}


# objective terms -----------------------------------------------------------


def regularization(z: ControlTrajectory, r: float) -> float:
    """``r * sum_t dt_t (|a_t|^2 + |da_t|^2 + |dda_t|^2)``."""
    if r < 0:
        raise ValueError("regularization weight must be nonnegative")
    return float(r * np.sum(z.timesteps * (np.sum(z.a**2 + z.da**2 + z.dda**2, axis=1))))


def regularization_grad(z: ControlTrajectory, r: float) -> dict:
    w = r * z.timesteps[:, None]
    return {
        "a": 2 * w * z.a,
        "da": 2 * w * z.da,
        "dda": 2 * w * z.dda,
        "dt": r * np.sum(z.a**2 + z.da**2 + z.dda**2, axis=1),
    }


def fidelity(z: ControlTrajectory, goal: np.ndarray) -> float:
    u = z.final_unitary
    if goal.shape != u.shape:
        raise ValueError("goal dimension mismatch")
    return float(abs(np.trace(u.conj().T @ goal)) / u.shape[0])


def fidelity_grad(z: ControlTrajectory, goal: np.ndarray) -> dict:
    u = z.final_unitary
    s = np.trace(goal.conj().T @ u)
    g = np.zeros_like(z.unitaries)
    if abs(s) > 0:
        g[-1] = (s / abs(s)) * goal / u.shape[0]
    return {"U": g}


def _as_error_operator(h_err, dim: int) -> np.ndarray:
    if isinstance(h_err, PauliString):
        h = h_err.to_matrix()
    elif isinstance(h_err, (list, tuple)) and h_err and isinstance(h_err[0], PauliString):
        h = pauli_sum(h_err)
    else:
        h = np.asarray(h_err, dtype=complex)
        if h.ndim == 0:
            h = h * np.eye(dim)
    if h.shape != (dim, dim):
        raise ValueError(f"error Hamiltonian has shape {h.shape}, trajectory dimension is {dim}")
    return h


def error_susceptibility(z: ControlTrajectory, h_err) -> float:
    """First-order infidelity sensitivity ``(1/d) Re Tr[(mean_t U_t^dag H U_t)^2]``."""
    return susceptibility_of_unitaries(z.unitaries, _as_error_operator(h_err, z.dim))


def susceptibility_of_unitaries(u: np.ndarray, h: np.ndarray) -> float:
    d = u.shape[-1]
    m = np.mean(np.swapaxes(u.conj(), -1, -2) @ h @ u, axis=0)
    return float(np.real(np.trace(m @ m)) / d)


def error_susceptibility_grad(z: ControlTrajectory, h_err) -> dict:
    h = _as_error_operator(h_err, z.dim)
    u = z.unitaries
    T, d = z.T, z.dim
    m = np.mean(np.swapaxes(u.conj(), -1, -2) @ h @ u, axis=0)
    return {"U": (4.0 / (d * T)) * (h @ u @ m)}


def toggled_operator(u: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Control-frame operators ``U_t^dag sigma U_t`` for every knot."""
    return np.swapaxes(u.conj(), -1, -2) @ sigma @ u
