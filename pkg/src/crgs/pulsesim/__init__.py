"""Lindblad pulse simulator: device model, circuits, moment-wise fragment propagation."""

from .circuit import Circuit, parse_circuit, transpile_to_moments
from .device import DeviceModel, EdgeParams, QubitParams, coherence_limit, default_device, zz_coupling
from .engine import FragmentError, LibraryError, Simulator, evolve_density, evolve_unitary, simulate_circuit

__all__ = [
    "Circuit",
    "DeviceModel",
    "EdgeParams",
    "FragmentError",
    "LibraryError",
    "QubitParams",
    "Simulator",
    "coherence_limit",
    "default_device",
    "evolve_density",
    "evolve_unitary",
    "parse_circuit",
    "simulate_circuit",
    "transpile_to_moments",
    "zz_coupling",
]
