"""Simulated random-Clifford and TFIM benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..pulsesim.engine import Simulator
from .protocols import TfimConfig, build_random_clifford, build_tfim, tfim_ideal_distribution
from .stats import RbFit, bootstrap_kl, fit_rb, kl_divergence, sample_shots


def _probabilities(sim: Simulator, circ) -> np.ndarray:
    rho = sim.run(circ, "density").state
    p = np.clip(np.real(np.diag(rho)), 0.0, None)
    return p / p.sum()


@dataclass
class RcResult:
    lengths: np.ndarray
    survival: np.ndarray  # mean over circuits, per qubit: shape (len(lengths), n_active)
    fits: list  # RbFit per qubit

    def rows(self, label: str = "rc") -> list:
        out = []
        for q, fit in enumerate(self.fits):
            for m, s in zip(self.lengths, self.survival[:, q]):
                out.append({"protocol": label, "parameter": f"q{q}:m={int(m)}", "value": float(s), "std": ""})
            out.append({"protocol": label, "parameter": f"q{q}:p", "value": fit.p, "std": fit.p_err})
            out.append({"protocol": label, "parameter": f"q{q}:epc", "value": fit.epc, "std": fit.epc_err})
        return out


def random_clifford_benchmark(sim: Simulator, lengths, circuits: int = 5, shots: int | None = 2048, seed: int = 0, qubits=None) -> RcResult:
    """Simultaneous inverse-closed Clifford sequences; survival = P(0) per active qubit."""
    n = sim.model.n_qubits
    qubits = list(range(n)) if qubits is None else list(qubits)
    lengths = np.asarray(list(lengths), dtype=int)
    surv = np.zeros((lengths.size, len(qubits)))
    for i, m in enumerate(lengths):
        for c in range(circuits):
            s = seed + 1000 * i + c
            p = _probabilities(sim, build_random_clifford(int(m), s, n, qubits))
            if shots is not None:
                p = sample_shots(p, shots, s).probabilities()
            for j, q in enumerate(qubits):
                # marginal probability of qubit q in |0>; qubit 0 is the most significant bit
                idx = np.arange(p.size)
                surv[i, j] += p[((idx >> (n - 1 - q)) & 1) == 0].sum() / circuits
    fits = [fit_rb(lengths, surv[:, j], shots=None if shots is None else shots * circuits) for j in range(len(qubits))]
    return RcResult(lengths, surv, fits)


@dataclass
class TfimKl:
    repetitions: list
    kl: list
    std: list
    reference_kl: list  # KL of the equal-superposition distribution

    def rows(self, label: str = "tfim") -> list:
        return [
            {"protocol": label, "parameter": int(n), "value": k, "std": s, "reference": r}
            for n, k, s, r in zip(self.repetitions, self.kl, self.std, self.reference_kl)
        ]


def tfim_kl_benchmark(sim: Simulator, cfg: TfimConfig, repetitions, shots: int = 2048, seed: int = 0, bootstrap: int = 1000) -> TfimKl:
    reps, kls, stds, refs = [], [], [], []
    n = cfg.n_qubits
    for k, r in enumerate(repetitions):
        c = TfimConfig(cfg.n_qubits, cfg.g, cfg.h, cfg.dt, int(r))
        ideal = tfim_ideal_distribution(c)
        dist = sample_shots(_probabilities(sim, build_tfim(c, prepare_plus=True)), shots, seed + k)
        reps.append(int(r))
        kls.append(kl_divergence(dist, ideal))
        stds.append(bootstrap_kl(dist, ideal, bootstrap, seed + 7919 * (k + 1)))
        uniform = sample_shots(np.full(2**n, 2.0**-n), shots, seed + 104729 + k)
        refs.append(kl_divergence(uniform, ideal))
    return TfimKl(reps, kls, stds, refs)


def synthetic_rb(lengths, p: float, shots: int, seed: int, a: float = 0.5, b: float = 0.5) -> RbFit:
    """Fit binomially sampled ``a p^m + b`` survival data."""
    m = np.asarray(lengths, dtype=float)
    rng = np.random.default_rng(seed)
    y = rng.binomial(shots, a * p**m + b) / shots
    return fit_rb(m, y, shots=shots)
