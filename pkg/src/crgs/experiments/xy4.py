"""XY4 crosstalk scans and the first-order aggregate ZZ rate they should exhibit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..quantum import SX, SY, SZ, matexp_skew, rz
from ..pulsesim.engine import Simulator
from .protocols import build_xy4
from .stats import DdFit, fit_dd, sample_shots

PAULI_VEC = (SX, SY, SZ)
SUBSTEPS = 8


def _cycle_pulses(lib, color):
    """(virtual Z before, samples, duration, virtual Z after) for X, Y, X, Y."""
    z = lib.get(color, "x")
    s, d = z.samples(0), z.duration
    x = (0.0, s, d, 0.0)
    y = (np.pi / 2, s, d, -np.pi / 2)
    return [x, y, x, y]


def toggled_z(lib, color) -> tuple[np.ndarray, float]:
    """Bloch components of the toggling-frame sigma_Z over one XY4 cycle, on a uniform time grid."""
    u = np.eye(2, dtype=complex)
    rows = []
    total = 0.0
    for pre, samples, dur, post in _cycle_pulses(lib, color):
        u = rz(pre) @ u
        h = dur / samples.size
        for a in samples:
            step = matexp_skew(0.5 * a * SX, h / SUBSTEPS)
            half = matexp_skew(0.5 * a * SX, h / (2 * SUBSTEPS))
            for _ in range(SUBSTEPS):
                mid = half @ u
                zt = mid.conj().T @ SZ @ mid
                rows.append([0.5 * np.real(np.trace(p @ zt)) for p in PAULI_VEC])
                u = step @ u
        u = rz(post) @ u
        total += dur
    return np.array(rows), total


def aggregate_zz_rate(lib, colors, zeta_ghz: float) -> float:
    """Oscillation rate (rad/us) of P(00) under the cycle-averaged ZZ coupling, from |++>.

    The toggling-frame average of ``2 pi zeta Z Z`` over one XY4 cycle gives an
    effective two-qubit Hamiltonian; the rate is the dominant frequency of
    ``|<++| exp(-i H_eff t) |++>|^2``. Instantaneous pulses recover ``4 pi zeta``.
    """
    r0, tau = toggled_z(lib, colors[0])
    r1, _ = toggled_z(lib, colors[1])
    if r0.shape != r1.shape:
        raise ValueError("XY4 pulses of the two colors must share a sample grid")
    m = r0.T @ r1 / r0.shape[0]
    w = 2 * np.pi * zeta_ghz
    h = sum(w * m[a, b] * np.kron(PAULI_VEC[a], PAULI_VEC[b]) for a in range(3) for b in range(3))
    evals, evecs = np.linalg.eigh(h)
    plus = np.full(4, 0.5, dtype=complex)
    c = np.abs(evecs.conj().T @ plus) ** 2
    best, rate = 0.0, 0.0
    for k in range(4):
        for l in range(k + 1, 4):
            wt = c[k] * c[l]
            if wt > best + 1e-15 and abs(evals[k] - evals[l]) > 1e-15:
                best, rate = wt, abs(evals[k] - evals[l])
    return rate * 1e3


@dataclass
class Xy4Scan:
    repetitions: np.ndarray
    times_us: np.ndarray
    population: np.ndarray  # measured P(0...0)
    std: np.ndarray
    exact: np.ndarray  # simulator probability before sampling

    def fit(self, fix_J_zero: bool = False) -> DdFit:
        return fit_dd(self.times_us, self.population, fix_J_zero)

    def rows(self, label: str = "xy4") -> list:
        return [
            {"protocol": label, "parameter": int(n), "time_us": float(t), "value": float(p), "std": float(s)}
            for n, t, p, s in zip(self.repetitions, self.times_us, self.population, self.std)
        ]


def xy4_scan(sim: Simulator, repetitions, shots: int | None = 2048, seed: int = 0) -> Xy4Scan:
    """Simulate XY4 at each repetition count and record the all-ground population."""
    reps = np.asarray(list(repetitions), dtype=int)
    n = sim.model.n_qubits
    cycle = 4 * sim.library.get(sim.color_of(0), "x").duration
    pops, stds, exact = [], [], []
    for k, r in enumerate(reps):
        res = sim.run(build_xy4(n, int(r)), "density")
        probs = np.clip(np.real(np.diag(res.state)), 0.0, None)
        probs /= probs.sum()
        exact.append(probs[0])
        if shots is None:
            pops.append(probs[0])
            stds.append(0.0)
        else:
            d = sample_shots(probs, shots, seed + k)
            p = d.probability("0" * n)
            pops.append(p)
            stds.append(d.std("0" * n))
    return Xy4Scan(reps, reps * cycle / 1e3, np.array(pops), np.array(stds), np.array(exact))
