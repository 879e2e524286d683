"""Rabi (rough) and error-amplification (fine) amplitude calibration against the simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..pulsesim.device import DeviceModel, default_device
from ..pulsesim.engine import DriveSegment, FragmentModel, PulseSchedule
from .stats import sample_shots, sinusoid_fit

FINE_REPS = {"pi": 14, "half_pi": 25}


class CalibrationError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class VirtualHardware:
    """One simulated qubit that plays sampled envelopes and reports |1> populations.

    Superoperators are cached per (envelope, amplitude) so repeated pulses in
    an amplification sequence cost one matrix product each.
    """

    def __init__(self, model: DeviceModel | None = None, qubit: int = 0, noise: bool = True):
        self.model = model or default_device(1, [])
        self.qubit = qubit
        self.frag = FragmentModel(self.model, [qubit], noise)
        self._cache = {}

    def pulse_map(self, envelope: np.ndarray, duration: float, amplitude: float) -> np.ndarray:
        key = (envelope.tobytes(), float(duration), float(amplitude))
        if key not in self._cache:
            sched = PulseSchedule(1)
            sched.add_drive(0, DriveSegment(amplitude * envelope, 0.0, duration))
            self._cache[key] = self.frag.propagate(sched, "density")[0]
        return self._cache[key]

    def excited_population(self, pulses) -> float:
        """``pulses``: sequence of (envelope, duration, amplitude) played back to back from |0>."""
        rho = np.zeros(4, dtype=complex)
        rho[0] = 1.0
        for env, dur, amp in pulses:
            rho = self.pulse_map(np.asarray(env, float), dur, amp) @ rho
        return float(np.clip(rho[3].real, 0.0, 1.0))

    def measure(self, pulses, shots: int | None, seed: int) -> float:
        p1 = self.excited_population(pulses)
        if shots is None:
            return p1
        return sample_shots([1 - p1, p1], shots, seed).probability("1")


@dataclass
class CalibrationRecord:
    theta: float
    a_rough: float
    rabi_frequency: float
    history: list = field(default_factory=list)  # [{"delta_theta", "amplitude", "accepted"}]
    a_fine: float | None = None
    converged: bool = False
    repetitions: list = field(default_factory=list)

    @property
    def odd_repetitions_only(self) -> bool:
        return all(k % 2 == 1 for k in self.repetitions)

    def to_dict(self) -> dict:
        return {
            "theta_rad": self.theta,
            "a_rough": self.a_rough,
            "rabi_frequency": self.rabi_frequency,
            "a_fine": self.a_fine,
            "converged": self.converged,
            "repetitions": list(self.repetitions),
            "odd_repetitions_only": self.odd_repetitions_only,
            "history": self.history,
        }


def _rabi(x, f):
    return 0.5 * np.cos(2 * np.pi * x * f + np.pi) + 0.5


def rough_calibrate(hw: VirtualHardware, envelope, duration: float, amplitudes, theta: float, shots: int | None = 2048, seed: int = 0) -> CalibrationRecord:
    """Fit the Rabi oscillation over an amplitude sweep; ``a_rough = theta / (2 pi f)``."""
    x = np.asarray(amplitudes, dtype=float)
    if x.size < 8:
        raise ValueError("rough calibration needs at least eight amplitudes")
    env = np.asarray(envelope, dtype=float)
    y = np.array([hw.measure([(env, duration, a)], shots, seed + k) for k, a in enumerate(x)])
    span = np.ptp(x)
    if span <= 0 or np.ptp(y) < 0.1:
        raise CalibrationError("no Rabi oscillation visible in the sweep", {"amplitudes": x.tolist(), "populations": y.tolist()})
    # frequency initializations: one to eight half-periods across the sweep
    starts = [k / (2 * span) for k in range(1, 9)]
    f, resid = sinusoid_fit(x, y, _rabi, starts)
    f = abs(f)
    if f <= 0 or resid > 0.25 * np.sqrt(x.size):
        raise CalibrationError("Rabi fit failed", {"frequency": f, "residual": resid})
    return CalibrationRecord(theta, theta / (2 * np.pi * f), f)


def _amplified(theta: float):
    if np.isclose(theta, np.pi):
        reps = list(range(FINE_REPS["pi"] + 1))
        model = lambda k, d: 0.5 * np.cos((d + np.pi) * k - np.pi / 2) + 0.5  # noqa: E731
        return reps, model, True
    if np.isclose(theta, np.pi / 2):
        reps = list(range(1, FINE_REPS["half_pi"] + 1, 2))
        model = lambda k, d: 0.5 * np.cos((d + np.pi / 2) * k - np.pi) + 0.5  # noqa: E731
        return reps, model, False
    raise ValueError("fine calibration supports theta = pi or pi/2")


def fine_calibrate(
    hw: VirtualHardware,
    envelope,
    duration: float,
    record: CalibrationRecord,
    max_iterations: int = 5,
    tolerance: float = 1e-3,
    shots: int | None = None,
    seed: int = 0,
) -> CalibrationRecord:
    """Error amplification: fit the over-rotation and rescale until ``|d theta| < tolerance``.

    pi pulses are preceded by a pi/2 pulse (half the amplitude of the
    envelope being calibrated); pi/2 pulses use odd repetition counts.
    """
    theta = record.theta
    if record.a_rough <= 0:
        raise ValueError("rough amplitude must be positive")
    reps, model, prefix = _amplified(theta)
    record.repetitions = reps
    env = np.asarray(envelope, dtype=float)
    a = record.a_rough if record.a_fine is None else record.a_fine
    k = np.array(reps, dtype=float)
    starts = np.linspace(-0.2, 0.2, 9)
    for it in range(max_iterations + 1):
        y = []
        for j, n in enumerate(reps):
            seq = ([(env, duration, a / 2)] if prefix else []) + [(env, duration, a)] * n
            y.append(hw.measure(seq, shots, seed + 1000 * it + j))
        d, _ = sinusoid_fit(k, np.array(y), model, starts)
        done = abs(d) < tolerance
        if done or it == max_iterations:
            record.history.append({"delta_theta": float(d), "amplitude": float(a), "accepted": False})
            record.converged = bool(done)
            break
        a_new = a * theta / (theta + d)
        record.history.append({"delta_theta": float(d), "amplitude": float(a), "accepted": True})
        a = a_new
    record.a_fine = float(a)
    return record


def fine_iterations(record: CalibrationRecord) -> int:
    """Number of amplify-fit rounds performed (including the final check)."""
    return len(record.history)


def unit_envelope(samples) -> np.ndarray:
    s = np.asarray(samples, dtype=float)
    peak = np.max(np.abs(s))
    if peak == 0:
        raise ValueError("cannot normalise an all-zero envelope")
    return s / peak
