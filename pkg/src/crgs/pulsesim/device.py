"""Static device description: qubit frequencies, coherence, couplings and ZZ strengths."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

POLE_TOL = 1e-12
BASELINE_ZZ_GHZ = 2e-4


class StraddlingResonanceError(ValueError):
    """Eq.-style perturbative ZZ formula hits a pole."""


def zz_coupling(J: float, alpha_i: float, alpha_j: float, delta_ij: float) -> float:
    """Perturbative static ZZ strength (GHz) between two coupled transmons."""
    d1 = alpha_i + delta_ij
    d2 = alpha_j - delta_ij
    if abs(d1) < POLE_TOL or abs(d2) < POLE_TOL:
        raise StraddlingResonanceError(f"ZZ formula has a pole at delta={delta_ij}, alphas=({alpha_i}, {alpha_j})")
    return -(J**2) * 2 * (alpha_i + alpha_j) / (d1 * d2)


@dataclass(frozen=True)
class QubitParams:
    detuning_ghz: float = 0.0
    anharmonicity_ghz: float = -0.31
    t1_us: float = 216.0
    t2_us: float = 154.0

    def __post_init__(self):
        if self.t1_us <= 0 or self.t2_us <= 0:
            raise ValueError("coherence times must be positive")
        if self.t2_us > 2 * self.t1_us * (1 + 1e-12):
            raise ValueError("T2 may not exceed 2*T1")

    @property
    def gamma1(self) -> float:
        """Relaxation rate, 1/ns."""
        return 1.0 / (self.t1_us * 1e3)

    @property
    def gamma_phi(self) -> float:
        """Pure-dephasing rate, 1/ns (1/Tphi = 1/T2 - 1/(2 T1))."""
        return max(0.0, 1.0 / (self.t2_us * 1e3) - 0.5 / (self.t1_us * 1e3))


@dataclass(frozen=True)
class EdgeParams:
    i: int
    j: int
    coupling_ghz: float = 0.00172
    qubit_detuning_ghz: float = 0.11  # omega_i - omega_j
    zz_ghz: float | None = BASELINE_ZZ_GHZ  # None: derive from the perturbative formula


@dataclass
class DeviceModel:
    qubits: list
    edges: list = field(default_factory=list)
    coupling_scale: float = 1.0
    ecr_duration_ns: float = 560.0  # at coupling_scale = 1
    echo_fraction: float = 0.1

    def __post_init__(self):
        n = len(self.qubits)
        seen = set()
        for e in self.edges:
            if not (0 <= e.i < n and 0 <= e.j < n) or e.i == e.j:
                raise ValueError(f"invalid edge ({e.i}, {e.j})")
            key = (min(e.i, e.j), max(e.i, e.j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
        if self.coupling_scale <= 0:
            raise ValueError("coupling scale must be positive")

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)

    def edge(self, i: int, j: int) -> EdgeParams:
        for e in self.edges:
            if {e.i, e.j} == {i, j}:
                return e
        raise KeyError(f"no coupling between {i} and {j}")

    def has_edge(self, i: int, j: int) -> bool:
        return any({e.i, e.j} == {i, j} for e in self.edges)

    def coupling(self, e: EdgeParams) -> float:
        return self.coupling_scale * e.coupling_ghz

    def zz(self, e: EdgeParams) -> float:
        """ZZ strength in GHz including the coupling scale (quadratic in J)."""
        if e.zz_ghz is not None:
            return self.coupling_scale**2 * e.zz_ghz
        a_i = self.qubits[e.i].anharmonicity_ghz
        a_j = self.qubits[e.j].anharmonicity_ghz
        return zz_coupling(self.coupling(e), a_i, a_j, e.qubit_detuning_ghz)

    def zz_rad(self, e: EdgeParams) -> float:
        """Coefficient of sigma_Z sigma_Z in rad/ns."""
        return 2 * np.pi * self.zz(e)

    def detuning_rad(self, q: int) -> float:
        """Coefficient of sigma_Z in rad/ns (half the angular detuning)."""
        return np.pi * self.qubits[q].detuning_ghz

    @property
    def ecr_duration(self) -> float:
        return self.ecr_duration_ns / self.coupling_scale

    def scaled(self, factor: float) -> "DeviceModel":
        return replace(self, coupling_scale=self.coupling_scale * factor)

    def without_crosstalk(self) -> "DeviceModel":
        edges = [replace(e, zz_ghz=0.0) for e in self.edges]
        return replace(self, edges=edges)

    def without_detuning(self) -> "DeviceModel":
        return replace(self, qubits=[replace(q, detuning_ghz=0.0) for q in self.qubits])

    def noiseless(self) -> "DeviceModel":
        """Coherence times pushed to infinity-like values (T2 = 2 T1)."""
        return replace(self, qubits=[replace(q, t1_us=1e30, t2_us=2e30) for q in self.qubits])

    # persistence -------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "coupling_scale": self.coupling_scale,
            "ecr_duration_ns": self.ecr_duration_ns,
            "echo_fraction": self.echo_fraction,
            "qubits": [
                {"detuning_ghz": q.detuning_ghz, "anharmonicity_ghz": q.anharmonicity_ghz, "t1_us": q.t1_us, "t2_us": q.t2_us}
                for q in self.qubits
            ],
            "edges": [
                {"i": e.i, "j": e.j, "coupling_ghz": e.coupling_ghz, "qubit_detuning_ghz": e.qubit_detuning_ghz, "zz_ghz": e.zz_ghz}
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceModel":
        qubits = [QubitParams(**q) for q in d["qubits"]]
        edges = [EdgeParams(**e) for e in d.get("edges", [])]
        return cls(
            qubits,
            edges,
            float(d.get("coupling_scale", 1.0)),
            float(d.get("ecr_duration_ns", 560.0)),
            float(d.get("echo_fraction", 0.1)),
        )

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "DeviceModel":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


def default_device(n_qubits: int, edges, zz_ghz: float | None = BASELINE_ZZ_GHZ, detuning_ghz: float = 0.0) -> DeviceModel:
    """Brisbane-like parameters with ZZ pinned to the baseline value on every edge."""
    qubits = [QubitParams(detuning_ghz=detuning_ghz) for _ in range(n_qubits)]
    return DeviceModel(qubits, [EdgeParams(i, j, zz_ghz=zz_ghz) for i, j in edges])


def coherence_limit(t_d: float, t1_us: float, t2_us: float) -> tuple[float, float]:
    """Coherence-limited error per gate and decay parameter for a gate of ``t_d`` ns."""
    if t_d < 0 or t1_us <= 0 or t2_us <= 0:
        raise ValueError("need t_d >= 0 and positive coherence times")
    t1 = t1_us * 1e3
    t2 = t2_us * 1e3
    eps = (3 - 2 * np.exp(-t_d / t2) - np.exp(-t_d / t1)) / 6
    return float(eps), float(1 - 2 * eps)
