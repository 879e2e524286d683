"""Circuit builders: XY4 dynamical decoupling, single-qubit Clifford sequences, Trotterized TFIM."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from ..quantum import SX, SZ, embed_operator, global_phase_distance, rx, rz
from ..pulsesim.circuit import Circuit

HALF_PI = np.pi / 2


def prep_plus(circ: Circuit, qubits=None) -> Circuit:
    """Hadamard up to phase on each qubit; self-inverse, so it also serves as the un-prep."""
    for q in range(circ.n_qubits) if qubits is None else qubits:
        circ.h(q)
    return circ


def build_xy4(n_qubits: int, repetitions: int) -> Circuit:
    """Prep, ``repetitions`` synchronous X Y X Y blocks on every qubit, un-prep."""
    if repetitions < 0:
        raise ValueError("repetitions must be nonnegative")
    c = prep_plus(Circuit(n_qubits))
    for _ in range(repetitions):
        for step in range(4):
            for q in range(n_qubits):
                if step % 2 == 0:
                    c.x(q)
                else:
                    c.y(q)
    return prep_plus(c)


# Clifford group ------------------------------------------------------------------


def _sequence_unitary(seq) -> np.ndarray:
    u = np.eye(2, dtype=complex)
    for kind, val in seq:
        u = (rz(val) if kind == "rz" else rx(HALF_PI)) @ u
    return u


def _candidates():
    angles = [0.0, HALF_PI, np.pi, 3 * HALF_PI]
    for a in angles:
        yield (("rz", a),)
    for a, b in itertools.product(angles, repeat=2):
        yield (("rz", a), ("sx", 0.0), ("rz", b))
    for a, b, c in itertools.product(angles, repeat=3):
        yield (("rz", a), ("sx", 0.0), ("rz", b), ("sx", 0.0), ("rz", c))


@lru_cache(maxsize=1)
def clifford_table() -> tuple:
    """The 24 single-qubit Cliffords, each as its shortest Rz / sqrt(X) normal form.

    Entries are ``(unitary, sequence)`` where ``sequence`` lists ``("rz", angle)``
    and ``("sx", 0)`` in time order. Candidates are enumerated by physical
    pulse count so each class keeps its cheapest representative.
    """
    table = []
    for seq in _candidates():
        u = _sequence_unitary(seq)
        if any(global_phase_distance(u, v) < 1e-9 for v, _ in table):
            continue
        seq = tuple(s for s in seq if not (s[0] == "rz" and s[1] == 0.0))
        table.append((u, seq))
    if len(table) != 24:
        raise RuntimeError(f"Clifford enumeration found {len(table)} classes")
    return tuple(table)


def clifford_index(u: np.ndarray) -> int:
    for k, (v, _) in enumerate(clifford_table()):
        if global_phase_distance(u, v) < 1e-8:
            return k
    raise ValueError("not a single-qubit Clifford")


def _append_clifford(c: Circuit, q: int, k: int) -> None:
    for kind, val in clifford_table()[k][1]:
        if kind == "rz":
            c.rz(q, val)
        else:
            c.sx(q)


def build_random_clifford(length: int, seed: int, n_qubits: int = 1, qubits=None) -> Circuit:
    """``length`` uniform Cliffords followed by the inverse of their product.

    With several qubits, each listed qubit draws its own sequence from one
    seeded stream (the simultaneous-RC setting).
    """
    if length < 1:
        raise ValueError("need at least one Clifford")
    rng = np.random.default_rng(seed)
    c = Circuit(n_qubits)
    table = clifford_table()
    for q in range(n_qubits) if qubits is None else qubits:
        draws = rng.integers(0, 24, size=length)
        total = np.eye(2, dtype=complex)
        for k in draws:
            _append_clifford(c, q, int(k))
            total = table[int(k)][0] @ total
        _append_clifford(c, q, clifford_index(total.conj().T))
    return c


def clifford_sequence(indices, q: int = 0, n_qubits: int = 1) -> Circuit:
    c = Circuit(n_qubits)
    for k in indices:
        _append_clifford(c, q, int(k))
    return c


# TFIM ------------------------------------------------------------------------------


@dataclass(frozen=True)
class TfimConfig:
    n_qubits: int = 4
    g: float = 2 * np.pi
    h: float = 2 * np.pi
    dt: float = 0.05
    repetitions: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("time step must be positive")
        if self.repetitions < 0:
            raise ValueError("repetitions must be nonnegative")
        if self.n_qubits < 1:
            raise ValueError("need at least one qubit")

    @property
    def edges(self) -> list:
        return [(i, i + 1) for i in range(self.n_qubits - 1)]

    @property
    def total_time(self) -> float:
        return self.repetitions * self.dt


def _uxx(c: Circuit, i: int, j: int, g: float, t: float) -> None:
    # exp(-i g t X_i X_j) = CNOT(i->j) Rx_i(2 g t) CNOT(i->j)
    c.cnot(i, j).rx(i, 2 * g * t).cnot(i, j)


def build_tfim(cfg: TfimConfig, prepare_plus: bool = False) -> Circuit:
    """Second-order product formula for ``g sum X_i X_{i+1} + h sum Z_i`` on a chain."""
    c = Circuit(cfg.n_qubits)
    if prepare_plus:
        prep_plus(c)
    for _ in range(cfg.repetitions):
        for i, j in cfg.edges:
            _uxx(c, i, j, cfg.g, cfg.dt / 2)
        for k in range(cfg.n_qubits):
            c.rz(k, 2 * cfg.h * cfg.dt)
        for i, j in cfg.edges:
            _uxx(c, i, j, cfg.g, cfg.dt / 2)
    return c


def tfim_hamiltonian(cfg: TfimConfig) -> np.ndarray:
    n = cfg.n_qubits
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i, j in cfg.edges:
        h += cfg.g * embed_operator(np.kron(SX, SX), [i, j], n)
    for k in range(n):
        h += cfg.h * embed_operator(SZ, [k], n)
    return h


def tfim_exact(cfg: TfimConfig) -> np.ndarray:
    return expm(-1j * tfim_hamiltonian(cfg) * cfg.total_time)


def tfim_ideal_distribution(cfg: TfimConfig) -> np.ndarray:
    """Z-basis output distribution of the noise-free product formula from |+...+>."""
    u = build_tfim(cfg, prepare_plus=True).unitary()
    return np.abs(u[:, 0]) ** 2
