"""Gate-level circuits, their ideal unitaries and moment transpilation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from ..quantum import I2, SX, SZ, embed_operator, rx, rz

PHYSICAL_1Q = ("x", "sx", "id")
KINDS = {"x": "1q", "sx": "1q", "id": "1q", "rz": "virtual", "ecr": "2q"}
TWO_PI = 2 * np.pi

ECR_MATRIX = np.kron(SX, I2) @ expm(-1j * np.pi / 4 * np.kron(SZ, SX))  # echo on the control, then ZX(pi/2)


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple
    angle: float = 0.0

    def __post_init__(self):
        if self.name not in KINDS:
            raise ValueError(f"unknown gate {self.name!r}")
        n = 2 if self.name == "ecr" else 1
        if len(self.qubits) != n:
            raise ValueError(f"{self.name} acts on {n} qubit(s)")
        if n == 2 and self.qubits[0] == self.qubits[1]:
            raise ValueError("ecr needs two distinct qubits")

    @property
    def kind(self) -> str:
        return KINDS[self.name]

    def matrix(self) -> np.ndarray:
        if self.name == "x":
            return rx(np.pi)
        if self.name == "sx":
            return rx(np.pi / 2)
        if self.name == "id":
            return I2.copy()
        if self.name == "rz":
            return rz(self.angle)
        return ECR_MATRIX.copy()

    def text(self) -> str:
        q = " ".join(str(x) for x in self.qubits)
        return f"rz {q} {self.angle!r}" if self.name == "rz" else f"{self.name} {q}"


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate):
        if any(not 0 <= q < self.n_qubits for q in g.qubits):
            raise ValueError(f"gate {g.text()} addresses a qubit outside 0..{self.n_qubits - 1}")

    def append(self, name: str, *qubits, angle: float = 0.0) -> "Circuit":
        g = Gate(name, tuple(int(q) for q in qubits), float(angle))
        self._check(g)
        self.gates.append(g)
        return self

    def extend(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise ValueError("register size mismatch")
        self.gates.extend(other.gates)
        return self

    # convenience builders ------------------------------------------------------

    def x(self, q):
        return self.append("x", q)

    def sx(self, q):
        return self.append("sx", q)

    def rz(self, q, angle):
        return self.append("rz", q, angle=angle)

    def ecr(self, c, t):
        return self.append("ecr", c, t)

    def y(self, q):
        """Y up to phase, played as a Z-conjugated X."""
        return self.rz(q, np.pi / 2).x(q).rz(q, -np.pi / 2)

    def h(self, q):
        """Hadamard up to phase: Rz(pi/2) sqrt(X) Rz(pi/2)."""
        return self.rz(q, np.pi / 2).sx(q).rz(q, np.pi / 2)

    def rx(self, q, theta):
        return self.rz(q, np.pi / 2).sx(q).rz(q, theta + np.pi).sx(q).rz(q, np.pi / 2)

    def cnot(self, c, t):
        return self.x(c).ecr(c, t).rz(c, np.pi / 2).sx(t)

    def physical_count(self, q: int | None = None) -> int:
        return sum(1 for g in self.gates if g.kind != "virtual" and (q is None or q in g.qubits))

    def validate_edges(self, has_edge) -> None:
        for g in self.gates:
            if g.name == "ecr" and not has_edge(*g.qubits):
                raise ValueError(f"ecr on uncoupled pair {g.qubits}")

    # semantics -----------------------------------------------------------------

    def unitary(self) -> np.ndarray:
        u = np.eye(2**self.n_qubits, dtype=complex)
        for g in self.gates:
            u = embed_operator(g.matrix(), g.qubits, self.n_qubits) @ u
        return u

    def to_text(self) -> str:
        return "\n".join([f"qubits {self.n_qubits}"] + [g.text() for g in self.gates]) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


class CircuitParseError(ValueError):
    pass


def parse_circuit(text: str, n_qubits: int | None = None) -> Circuit:
    """Line format: ``x 0``, ``sx 2``, ``rz 1 1.5708``, ``ecr 0 1``; ``#`` comments, optional ``qubits N`` header."""
    gates = []
    declared = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op = parts[0].lower()
        try:
            if op == "qubits":
                declared = int(parts[1])
            elif op == "rz":
                if len(parts) != 3:
                    raise ValueError("rz takes a qubit and an angle")
                gates.append(Gate("rz", (int(parts[1]),), float(parts[2])))
            elif op in ("x", "sx", "id"):
                if len(parts) != 2:
                    raise ValueError(f"{op} takes one qubit")
                gates.append(Gate(op, (int(parts[1]),)))
            elif op == "ecr":
                if len(parts) != 3:
                    raise ValueError("ecr takes two qubits")
                gates.append(Gate("ecr", (int(parts[1]), int(parts[2]))))
            else:
                raise ValueError(f"unknown gate {op!r}")
        except (ValueError, IndexError) as exc:
            raise CircuitParseError(f"line {lineno}: {exc}") from None
    n = n_qubits or declared
    if n is None:
        n = 1 + max((q for g in gates for q in g.qubits), default=-1)
    try:
        return Circuit(max(n, 1), gates)
    except ValueError as exc:
        raise CircuitParseError(str(exc)) from None


# moments ---------------------------------------------------------------------


@dataclass
class Moment:
    kind: str  # "1q" | "2q" | "virtual"
    gates: list = field(default_factory=list)

    @property
    def qubits(self) -> set:
        return {q for g in self.gates for q in g.qubits}

    def unitary(self, n_qubits: int) -> np.ndarray:
        u = np.eye(2**n_qubits, dtype=complex)
        for g in self.gates:
            u = embed_operator(g.matrix(), g.qubits, n_qubits) @ u
        return u


@dataclass
class MomentSchedule:
    n_qubits: int
    moments: list = field(default_factory=list)

    def unitary(self) -> np.ndarray:
        u = np.eye(2**self.n_qubits, dtype=complex)
        for m in self.moments:
            u = m.unitary(self.n_qubits) @ u
        return u

    def counts(self) -> dict:
        out = {"1q": 0, "2q": 0, "virtual": 0}
        for m in self.moments:
            out[m.kind] += 1
        return out


def _wrap(angle: float) -> float:
    return float(np.mod(angle, TWO_PI))


def transpile_to_moments(circuit: Circuit, model=None) -> MomentSchedule:
    """Greedy as-soon-as-possible layering into one-qubit, two-qubit and virtual moments.

    Virtual Z rotations accumulate per qubit and are flushed, merged, into a
    virtual moment directly in front of the moment that receives the qubit's
    next physical gate. Each physical gate goes to the earliest moment of its
    kind that follows all of its qubits' previous gates and has room for it.
    """
    if model is not None:
        circuit.validate_edges(model.has_edge)
    n = circuit.n_qubits
    phys = []  # list of (Moment, {q: pending angle})
    ready = [0] * n
    pending = [0.0] * n
    has_pending = [False] * n
    for g in circuit.gates:
        if g.kind == "virtual":
            q = g.qubits[0]
            pending[q] += g.angle
            has_pending[q] = True
            continue
        start = max(ready[q] for q in g.qubits)
        slot = None
        for m_idx in range(start, len(phys)):
            m, _ = phys[m_idx]
            if m.kind == g.kind and not (m.qubits & set(g.qubits)):
                slot = m_idx
                break
        if slot is None:
            phys.append((Moment(g.kind), {}))
            slot = len(phys) - 1
        m, pre = phys[slot]
        m.gates.append(g)
        for q in g.qubits:
            if has_pending[q]:
                pre[q] = pre.get(q, 0.0) + pending[q]
                pending[q] = 0.0
                has_pending[q] = False
            ready[q] = slot + 1
    moments = []
    for m, pre in phys:
        rot = [Gate("rz", (q,), _wrap(a)) for q, a in sorted(pre.items()) if _wrap(a) != 0.0]
        if rot:
            moments.append(Moment("virtual", rot))
        moments.append(m)
    tail = [Gate("rz", (q,), _wrap(pending[q])) for q in range(n) if has_pending[q] and _wrap(pending[q]) != 0.0]
    if tail:
        moments.append(Moment("virtual", tail))
    return MomentSchedule(n, moments)
