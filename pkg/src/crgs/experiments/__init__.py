"""Benchmark protocols, fits and calibration run against the simulator."""

from .benchmarks import random_clifford_benchmark, tfim_kl_benchmark
from .calibration import VirtualHardware, fine_calibrate, rough_calibrate
from .codesign import codesign_sweep
from .protocols import TfimConfig, build_random_clifford, build_tfim, build_xy4
from .stats import fit_dd, fit_rb, kl_divergence, sample_shots
from .xy4 import aggregate_zz_rate, xy4_scan

__all__ = [
    "TfimConfig",
    "VirtualHardware",
    "aggregate_zz_rate",
    "build_random_clifford",
    "build_tfim",
    "build_xy4",
    "codesign_sweep",
    "fine_calibrate",
    "fit_dd",
    "fit_rb",
    "kl_divergence",
    "random_clifford_benchmark",
    "rough_calibrate",
    "sample_shots",
    "tfim_kl_benchmark",
    "xy4_scan",
]
