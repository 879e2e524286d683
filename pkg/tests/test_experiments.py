import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from crgs.gateset import gaussian_library, square_library
from crgs.quantum import PAULIS, SX, global_phase_distance
from crgs.pulsesim import Circuit, Simulator, default_device
from crgs.pulsesim.engine import gaussian_samples
from crgs.experiments import (
    TfimConfig,
    VirtualHardware,
    build_random_clifford,
    build_tfim,
    build_xy4,
    codesign_sweep,
    fine_calibrate,
    fit_dd,
    fit_rb,
    kl_divergence,
    rough_calibrate,
    sample_shots,
    xy4_scan,
)
from crgs.experiments.calibration import CalibrationError, CalibrationRecord
from crgs.experiments.protocols import _uxx, clifford_table, tfim_exact
from crgs.experiments.stats import ShotDistribution, bootstrap_kl, dd_model, rb_model
from crgs.experiments.benchmarks import synthetic_rb


# shots


def test_point_mass_shots():
    d = sample_shots([1, 0, 0, 0], 100, seed=3)
    assert d.counts == {"00": 100}


def test_uniform_shots_within_five_sigma():
    d = sample_shots(np.full(4, 0.25), 10**6, seed=11)
    sigma = np.sqrt(10**6 * 0.25 * 0.75)
    assert np.all(np.abs(d.vector() - 250000) < 5 * sigma)


def test_shots_deterministic():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    assert sample_shots(p, 500, 7).counts == sample_shots(p, 500, 7).counts


@pytest.mark.parametrize("p", [[0.5, 0.6], [-0.1, 1.1], [1.0, 0, 0]])
def test_invalid_distribution(p):
    with pytest.raises(ValueError):
        sample_shots(p, 10, 0)


def test_shot_distribution_counts_must_sum():
    with pytest.raises(ValueError):
        ShotDistribution(1, {"0": 3}, 4)


# XY4


@given(st.integers(1, 3), st.integers(0, 6))
def test_xy4_pulse_count(n, reps):
    c = build_xy4(n, reps)
    for q in range(n):
        assert c.physical_count(q) == 4 * reps + 2


@pytest.mark.parametrize("reps", [0, 1])
def test_xy4_ideal_returns_to_ground(reps):
    m = default_device(2, [(0, 1)], zz_ghz=0.0).noiseless()
    sim = Simulator(m, square_library(), detuning=False)
    scan = xy4_scan(sim, [reps], shots=None)
    assert scan.population[0] == pytest.approx(1.0, abs=1e-6)


def test_xy4_gate_level_identity():
    u = build_xy4(2, 3).unitary()
    assert global_phase_distance(u, np.eye(4)) < 1e-10


# DD fit


def test_dd_fit_noiseless_recovery():
    t = np.linspace(0, 60, 61)
    fit = fit_dd(t, dd_model(t, 0.04, 0.15))
    assert fit.gamma == pytest.approx(0.04, abs=1e-6)
    assert fit.J == pytest.approx(0.15, abs=1e-6)


def test_dd_fit_constant():
    t = np.linspace(0, 10, 12)
    fit = fit_dd(t, np.ones_like(t))
    assert fit.gamma == pytest.approx(0.0, abs=1e-9)
    assert fit.J == pytest.approx(0.0, abs=1e-9)


def test_dd_fit_noisy_within_three_sigma():
    t = np.linspace(0, 60, 61)
    for seed in range(10):
        y = dd_model(t, 0.04, 0.15) + np.random.default_rng(seed).normal(0, 0.01, t.size)
        fit = fit_dd(t, y)
        assert fit.ok
        assert abs(fit.gamma - 0.04) < 3 * fit.gamma_err
        assert abs(fit.J - 0.15) < 3 * fit.J_err


def test_dd_fit_fixed_J():
    t = np.linspace(0, 40, 30)
    fit = fit_dd(t, dd_model(t, 0.05, 0.0), fix_J_zero=True)
    assert fit.fixed_J and fit.J == 0.0
    assert fit.gamma == pytest.approx(0.05, abs=1e-8)


def test_dd_fit_needs_points():
    with pytest.raises(ValueError):
        fit_dd([0, 1, 2], [1, 1, 1])


# Clifford sequences


def _is_clifford(u):
    for p in ("X", "Y", "Z"):
        img = u @ PAULIS[p] @ u.conj().T
        if not any(np.allclose(img, s * PAULIS[q]) for q in ("X", "Y", "Z") for s in (1, -1)):
            return False
    return True


def test_clifford_table_exhaustive():
    table = clifford_table()
    assert len(table) == 24
    for i, (u, seq) in enumerate(table):
        assert _is_clifford(u)
        assert sum(1 for k, _ in seq if k == "sx") <= 2
        for v, _ in table[:i]:
            assert global_phase_distance(u, v) > 1e-6


@given(st.integers(1, 30), st.integers(0, 2**31))
def test_random_clifford_closes(m, seed):
    c = build_random_clifford(m, seed)
    assert global_phase_distance(c.unitary(), np.eye(2)) < 1e-10


def test_random_clifford_multi_qubit():
    c = build_random_clifford(5, 2, n_qubits=3, qubits=[0, 2])
    assert c.physical_count(1) == 0
    assert global_phase_distance(c.unitary(), np.eye(8)) < 1e-10


# RB fit


def test_rb_exact_recovery():
    m = np.array([1, 5, 10, 20, 50, 100, 200, 400])
    fit = fit_rb(m, rb_model(m, 0.5, 0.999, 0.5))
    assert fit.p == pytest.approx(0.999, abs=1e-8)
    assert fit.a == pytest.approx(0.5, abs=1e-8)
    assert fit.epc == pytest.approx(5e-4, abs=1e-8)


def test_rb_constant_survival():
    fit = fit_rb([1, 10, 100], [1.0, 1.0, 1.0])
    assert fit.p == 1.0 and fit.epc == 0.0


def test_rb_shot_noise_within_three_sigma():
    m = [1, 5, 10, 20, 50, 100, 200]
    for seed in range(20):
        fit = synthetic_rb(m, 0.99, 2048, seed)
        assert abs(fit.p - 0.99) < 3 * fit.p_err


def test_rb_needs_three_lengths():
    with pytest.raises(ValueError):
        fit_rb([1, 1, 2], [0.9, 0.9, 0.8])


# TFIM


def test_tfim_zero_repetitions():
    assert build_tfim(TfimConfig(repetitions=0)).gates == []


def test_tfim_half_step_angle():
    c = Circuit(2)
    _uxx(c, 0, 1, 2 * np.pi, 0.05 / 2)
    target = expm(-1j * 0.05 * np.pi * np.kron(SX, SX))
    assert global_phase_distance(c.unitary(), target) < 1e-10


def test_tfim_second_order():
    def err(dt):
        cfg = TfimConfig(4, dt=dt, repetitions=int(round(0.4 / dt)))
        u = build_tfim(cfg).unitary()
        return np.linalg.norm(u - tfim_exact(cfg), 2)

    ratio = err(0.05) / err(0.025)
    assert 3.6 < ratio < 4.4


# KL


def test_kl_exact_match_is_zero():
    q = np.array([0.1, 0.2, 0.3, 0.4])
    assert kl_divergence(q * 1000, q, pseudo_count=0.0) == pytest.approx(0.0, abs=1e-15)


def test_kl_uniform_smoothing_bias():
    d = ShotDistribution(4, {format(k, "04b"): 128 for k in range(16)}, 2048)
    assert kl_divergence(d, np.full(16, 1 / 16)) <= 1e-3


def test_kl_bootstrap_point_mass():
    d = sample_shots([1, 0, 0, 0], 2048, 0)
    assert bootstrap_kl(d, np.full(4, 0.25), 50, 1) == pytest.approx(0.0, abs=1e-12)


@given(st.lists(st.integers(0, 50), min_size=4, max_size=4), st.lists(st.floats(0.01, 1), min_size=4, max_size=4))
def test_kl_nonnegative(counts, q):
    q = np.array(q) / np.sum(q)
    assert kl_divergence(np.array(counts, float), q) >= 0.0


# calibration


def test_rough_calibration_square_pulse():
    hw = VirtualHardware(default_device(1, []), noise=False)
    dur = 40.0
    env = np.ones(8)
    rec = rough_calibrate(hw, env, dur, np.linspace(0, 0.3, 31), np.pi, shots=None)
    # rotation angle a*d, so the analytic pi amplitude is pi/d
    assert rec.a_rough == pytest.approx(np.pi / dur, rel=1e-2)


def test_rough_calibration_zero_grid_fails():
    hw = VirtualHardware(default_device(1, []), noise=False)
    with pytest.raises(CalibrationError):
        rough_calibrate(hw, np.ones(4), 40.0, np.zeros(10), np.pi, shots=None)


def test_rough_calibration_seeded():
    hw = VirtualHardware(default_device(1, []))
    grid = np.linspace(0, 0.3, 16)
    a = rough_calibrate(hw, np.ones(4), 40.0, grid, np.pi, shots=256, seed=5)
    b = rough_calibrate(hw, np.ones(4), 40.0, grid, np.pi, shots=256, seed=5)
    assert a.to_dict() == b.to_dict()


@pytest.mark.parametrize("theta", [np.pi, np.pi / 2])
def test_fine_calibration_from_five_percent(theta):
    hw = VirtualHardware(default_device(1, []), noise=False)
    env = gaussian_samples(1.0, 40.0) / np.max(gaussian_samples(1.0, 40.0))
    dur = 40.0
    exact = theta / (env.sum() * dur / env.size)
    rec = fine_calibrate(hw, env, dur, CalibrationRecord(theta, 1.05 * exact, 0.0), max_iterations=5, tolerance=1e-3)
    assert rec.converged
    assert abs(rec.history[-1]["delta_theta"]) < 1e-3
    assert len(rec.history) <= 6
    if theta == np.pi / 2:
        assert rec.odd_repetitions_only
    # a_fine follows the multiplicative update rule
    a = 1.05 * exact
    for h in rec.history:
        if h["accepted"]:
            a *= theta / (theta + h["delta_theta"])
    assert rec.a_fine == pytest.approx(a, rel=1e-12)


def test_fine_calibration_already_calibrated():
    hw = VirtualHardware(default_device(1, []), noise=False)
    env = np.ones(8)
    rec = fine_calibrate(hw, env, 40.0, CalibrationRecord(np.pi, np.pi / 40.0, 0.0))
    assert len(rec.history) == 1 and not rec.history[0]["accepted"]
    assert rec.a_fine == np.pi / 40.0


def test_fine_calibration_rejects_angle():
    hw = VirtualHardware(default_device(1, []), noise=False)
    with pytest.raises(ValueError):
        fine_calibrate(hw, np.ones(4), 40.0, CalibrationRecord(1.0, 0.1, 0.0))


# co-design


def test_codesign_small():
    m = default_device(2, [(0, 1)])
    libs = {"gaussian": gaussian_library(), "square": square_library()}
    env = gaussian_samples(np.pi / 2, 40.0)
    cfg = TfimConfig(n_qubits=2, repetitions=1)
    rows = codesign_sweep(m, libs, [0.5, 1.0, 2.0], cfg, env)
    assert len(rows) == 3 * len(libs) * 2
    limits = [rows[k * 4].decoherence_limit for k in range(3)]
    assert limits == sorted(limits)
    ideal = codesign_sweep(m.without_crosstalk().noiseless(), libs, [1.0], cfg, env)
    assert all(r.fidelity >= 0.99 for r in ideal)


def test_codesign_rejects_bad_factor():
    with pytest.raises(ValueError):
        codesign_sweep(default_device(2, [(0, 1)]), {"g": gaussian_library()}, [0.0], None, np.ones(4))
