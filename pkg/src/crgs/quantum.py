"""Dense linear algebra for small qubit registers.

Operators are plain complex ``numpy`` arrays. Pauli strings carry a real
coefficient in rad/ns and are materialized on demand with :func:`embed`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, lowers |1> -> |0>

PAULIS = {"I": I2, "X": SX, "Y": SY, "Z": SZ}

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class PauliString:
    """``coefficient * prod_j sigma_{A_j}^{(j)}`` on ``n_qubits`` qubits.

    Qubit 0 is the most significant tensor factor.
    """

    n_qubits: int
    factors: Mapping[int, str] = field(default_factory=dict)
    coefficient: float = 1.0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        for q, label in self.factors.items():
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"qubit index {q} out of range for {self.n_qubits} qubits")
            if label not in ("X", "Y", "Z"):
                raise ValueError(f"unknown Pauli label {label!r}")
        object.__setattr__(self, "factors", dict(self.factors))

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def to_matrix(self) -> np.ndarray:
        return embed(self)


def embed(p: PauliString) -> np.ndarray:
    """Materialize a Pauli string as a ``2**n x 2**n`` matrix."""
    for q in p.factors:
        if not 0 <= q < p.n_qubits:
            raise ValueError(f"qubit index {q} out of range")
    out = np.array([[1.0 + 0j]])
    for q in range(p.n_qubits):
        out = np.kron(out, PAULIS[p.factors.get(q, "I")])
    return p.coefficient * out


def embed_operator(op: np.ndarray, qubits, n_qubits: int) -> np.ndarray:
    """Lift an operator acting on ``qubits`` (in that order) into the full register."""
    qubits = list(qubits)
    k = len(qubits)
    op = np.asarray(op, dtype=complex)
    if op.shape != (2**k, 2**k):
        raise ValueError("operator shape does not match qubit count")
    if len(set(qubits)) != k or any(not 0 <= q < n_qubits for q in qubits):
        raise ValueError("invalid qubit list")
    rest = [q for q in range(n_qubits) if q not in qubits]
    full = np.kron(op, np.eye(2 ** len(rest)))
    # axes of `full` are ordered (qubits..., rest...); permute to 0..n-1
    order = qubits + rest
    perm = [order.index(q) for q in range(n_qubits)]
    t = full.reshape([2] * (2 * n_qubits))
    t = t.transpose(perm + [n_qubits + p for p in perm])
    return t.reshape(2**n_qubits, 2**n_qubits)


def pauli_sum(terms, n_qubits: int | None = None) -> np.ndarray:
    """Sum of Pauli strings as a dense matrix."""
    terms = list(terms)
    if not terms:
        if n_qubits is None:
            raise ValueError("empty sum needs n_qubits")
        return np.zeros((2**n_qubits, 2**n_qubits), dtype=complex)
    n = terms[0].n_qubits if n_qubits is None else n_qubits
    out = np.zeros((2**n, 2**n), dtype=complex)
    for p in terms:
        if p.n_qubits != n:
            raise ValueError("mixed register sizes in Pauli sum")
        out += embed(p)
    return out


def is_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    h = np.asarray(h)
    return h.ndim >= 2 and h.shape[-1] == h.shape[-2] and bool(
        np.max(np.abs(h - np.swapaxes(h.conj(), -1, -2)), initial=0.0) <= tol
    )


def is_unitary(u: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    u = np.asarray(u)
    eye = np.eye(u.shape[-1])
    return bool(np.max(np.abs(np.swapaxes(u.conj(), -1, -2) @ u - eye)) <= tol)


def matexp_skew(h: np.ndarray, s) -> np.ndarray:
    """``exp(-i s h)`` for Hermitian ``h`` via eigendecomposition.

    Broadcasts over leading axes of ``h`` and ``s``.
    """
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h):
        raise ValueError("matexp_skew requires a Hermitian generator")
    h = 0.5 * (h + np.swapaxes(h.conj(), -1, -2))
    w, v = np.linalg.eigh(h)
    s = np.asarray(s, dtype=float)[..., None]
    phases = np.exp(-1j * s * w)
    return (v * phases[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def expm_frechet_skew(h: np.ndarray, s, direction: np.ndarray):
    """Return ``(E, dE)`` for ``E = exp(-i s h)`` and its derivative along ``direction``.

    ``dE`` is d/de exp(-i s (h + e*direction)) at e = 0, computed with the
    Daleckii-Krein divided-difference formula. Broadcasts like :func:`matexp_skew`.
    """
    h = np.asarray(h, dtype=complex)
    h = 0.5 * (h + np.swapaxes(h.conj(), -1, -2))
    w, v = np.linalg.eigh(h)
    s = np.asarray(s, dtype=float)[..., None]
    mu = -1j * s * w
    e = np.exp(mu)
    vh = np.swapaxes(v.conj(), -1, -2)
    big_e = (v * e[..., None, :]) @ vh
    phi = divided_differences(mu)
    b = vh @ (-1j * s[..., None] * direction) @ v
    d_e = v @ (phi * b) @ vh
    return big_e, d_e


def divided_differences(mu: np.ndarray) -> np.ndarray:
    """First divided differences of ``exp`` on the eigenvalues ``mu`` (last axis)."""
    mj = mu[..., :, None]
    mk = mu[..., None, :]
    delta = mk - mj
    small = np.abs(delta) < 1e-12
    safe = np.where(small, 1.0, delta)
    ratio = np.where(small, 1.0 + 0.5 * delta, np.expm1(delta) / safe)
    return np.exp(mj) * ratio


def gate_fidelity(u: np.ndarray, g: np.ndarray) -> float:
    """Phase-insensitive gate overlap ``|Tr(U^dag G)| / d`` in [0, 1]."""
    u = np.asarray(u)
    g = np.asarray(g)
    if u.shape != g.shape or u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {g.shape}")
    return float(abs(np.trace(u.conj().T @ g)) / u.shape[0])


def vectorize(u: np.ndarray) -> np.ndarray:
    """Real isometric encoding: real parts row-major, then imaginary parts."""
    u = np.asarray(u, dtype=complex)
    return np.concatenate([u.real.ravel(), u.imag.ravel()])


def devectorize(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size % 2:
        raise ValueError("vector length must be even")
    n2 = v.size // 2
    d = int(round(np.sqrt(n2))) if dim is None else dim
    if d * d != n2:
        raise ValueError(f"vector length {v.size} does not encode a square operator")
    return (v[:n2] + 1j * v[n2:]).reshape(d, d)


def global_phase_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Max-abs distance between ``u`` and ``v`` after removing the best global phase."""
    tr = np.trace(v.conj().T @ u)
    phase = tr / abs(tr) if abs(tr) > 1e-300 else 1.0
    return float(np.max(np.abs(u - phase * v)))


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rx(theta: float) -> np.ndarray:
    return np.cos(theta / 2) * I2 - 1j * np.sin(theta / 2) * SX


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (z + z.conj().T)
