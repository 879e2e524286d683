"""TFIM fidelity versus coupling strength for several gate sets (ZZ grows as k^2, ECR shrinks as 1/k)."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..pulsesim.device import DeviceModel
from ..pulsesim.engine import Simulator
from .protocols import TfimConfig, build_tfim

log = logging.getLogger(__name__)


@dataclass
class CodesignRow:
    factor: float
    gate_set: str
    ecr: str  # "plain" | "robust"
    fidelity: float
    decoherence_limit: float

    def row(self) -> dict:
        return {
            "factor": self.factor,
            "gate_set": self.gate_set,
            "ecr": self.ecr,
            "fidelity": self.fidelity,
            "decoherence_limit": self.decoherence_limit,
        }


def tfim_state_fidelity(model: DeviceModel, library, cfg: TfimConfig, robust: bool, envelope, cache=None) -> float:
    """Overlap of the simulated output state with the ideal product-formula state, from |+...+>."""
    circ = build_tfim(cfg, prepare_plus=True)
    psi = circ.unitary()[:, 0]
    sim = Simulator(model, library, robust_ecr=robust, ecr_envelope=envelope, detuning=False, cache=cache)
    rho = sim.run(circ, "density").state
    return float(np.real(psi.conj() @ rho @ psi))


def _factor_block(args):
    model, libraries, factor, cfg, envelope = args
    scaled = model.scaled(factor).without_detuning()
    cache = {}
    first = next(iter(libraries.values()))
    limit = tfim_state_fidelity(scaled.without_crosstalk(), first, cfg, False, envelope)
    rows = []
    for name, lib in libraries.items():
        for robust in (False, True):
            f = tfim_state_fidelity(scaled, lib, cfg, robust, envelope, cache)
            log.info("factor %.2f %s %s-ECR: %.4f", factor, name, "robust" if robust else "plain", f)
            rows.append(CodesignRow(factor, name, "robust" if robust else "plain", f, limit))
    return rows


def codesign_sweep(model: DeviceModel, libraries: dict, factors, cfg: TfimConfig | None = None, robust_envelope=None, workers: int = 1) -> list:
    """One TFIM repetition per (factor, gate set, ECR variant) in density mode without detuning.

    ``robust_envelope`` is the sampled detuning-robust sqrt(X) used by the
    robust ECR. Every row also carries the decoherence-limited fidelity of
    its factor (same circuit with zeta = 0).
    """
    factors = [float(f) for f in factors]
    if any(f <= 0 for f in factors):
        raise ValueError("coupling factors must be positive")
    if robust_envelope is None:
        raise ValueError("robust ECR rows need a sampled robust envelope")
    cfg = cfg or TfimConfig(n_qubits=model.n_qubits, repetitions=1)
    jobs = [(model, libraries, f, cfg, np.asarray(robust_envelope, float)) for f in factors]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_factor_block, jobs))
    else:
        blocks = [_factor_block(j) for j in jobs]
    return [r for b in blocks for r in b]
