import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crgs.optimize import (
    InfidelityTerm,
    RegularizationTerm,
    SusceptibilityTerm,
    TrajectoryProblem,
    Vertex,
    check_gradient,
    gaussian_pulse,
    idle_trajectory,
    initial_guess,
    robustness_problem,
    smooth_pulse_problem,
    solve,
)
from crgs.quantum import SX, SZ, PauliString, gate_fidelity, rx
from crgs.solver import SolverConfig
from crgs.trajectory import (
    ControlTrajectory,
    dynamics_residual,
    error_susceptibility,
    fidelity,
    pulse_bounds,
    regularization,
    rollout,
    uniform_timesteps,
    x_drive_system,
)

SYS = x_drive_system()
X_GATE = -1j * SX
DETUNING = 0.01 * 2 * np.pi


def square(angle, duration, knots):
    return rollout(SYS, np.zeros((knots, 1)), [angle / duration], [0.0], uniform_timesteps(duration, knots))


def test_rollout_zero_controls_identity():
    z = rollout(SYS, np.zeros((20, 1)), timesteps=uniform_timesteps(100.0, 20))
    assert np.allclose(z.unitaries, np.eye(2))


def test_rollout_square_pulse_is_x():
    z = square(np.pi, 240.0, 50)
    assert np.allclose(z.final_unitary, X_GATE, atol=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_rollout_residual_vanishes(seed):
    rng = np.random.default_rng(seed)
    z = rollout(SYS, rng.normal(scale=1e-4, size=(30, 1)), [0.01], [0.0], uniform_timesteps(120.0, 30))
    assert np.max(np.abs(dynamics_residual(SYS, z))) <= 1e-12


def test_rollout_requires_timesteps():
    with pytest.raises(ValueError):
        rollout(SYS, np.zeros((5, 1)))


def test_residual_is_local():
    z = square(np.pi, 240.0, 20)
    eps = 1e-7
    z.unitaries[7, 0, 1] += eps
    r = dynamics_residual(SYS, z).reshape(19, -1)
    assert np.max(np.abs(r)) == pytest.approx(eps, rel=1e-6)
    bad = np.nonzero(np.max(np.abs(r), axis=1) > 1e-12)[0]
    assert set(bad) == {6, 7}  # U_7 enters steps 6 -> 7 and 7 -> 8


def test_identity_unitaries_with_drive_not_feasible():
    z = square(np.pi, 240.0, 20)
    z.unitaries[:] = np.eye(2)
    assert np.max(np.abs(dynamics_residual(SYS, z))) > 1e-3


def test_trajectory_invariants():
    z = square(np.pi, 240.0, 10)
    bad = z.copy()
    bad.unitaries[0] = SX
    with pytest.raises(ValueError):
        ControlTrajectory(bad.unitaries, bad.a, bad.da, bad.dda, bad.timesteps)
    with pytest.raises(ValueError):
        ControlTrajectory(z.unitaries, z.a, z.da, z.dda, -z.timesteps)


def test_regularization_examples():
    z = idle_trajectory(100.0, 10)
    assert regularization(z, 0.3) == 0.0
    assert regularization(square(np.pi, 240.0, 10), 0.0) == 0.0
    T = 12
    ts = np.ones(T)
    z = rollout(SYS, np.zeros((T, 1)), [1.0], [0.0], ts)
    z.unitaries[:] = z.unitaries  # controls only matter
    assert regularization(z, 0.5) == pytest.approx(0.5 * T)


def test_susceptibility_idle_is_one():
    assert error_susceptibility(idle_trajectory(240.0, 30), SZ) == pytest.approx(1.0)


def test_susceptibility_zero_error():
    assert error_susceptibility(gaussian_pulse(np.pi), np.zeros((2, 2))) == 0.0


def test_susceptibility_square_pi_converges():
    # the knot average carries both endpoints, so the error falls off as 1/T
    target = 4 / np.pi**2
    errs = [abs(error_susceptibility(square(np.pi, 240.0, T), SZ) - target) for T in (50, 200, 800, 3200)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 3e-4
    assert errs[-2] / errs[-1] == pytest.approx(4.0, rel=0.05)


def test_susceptibility_brute_force_double_sum():
    z = square(np.pi, 240.0, 40)
    s = np.einsum("tji,jk,tkl->til", z.unitaries.conj(), SZ, z.unitaries)
    double = sum(np.real(np.trace(a @ b)) for a in s for b in s) / (2 * z.T**2)
    assert error_susceptibility(z, SZ) == pytest.approx(double, rel=1e-12)


def test_susceptibility_accepts_pauli_strings():
    z = gaussian_pulse(np.pi)
    assert error_susceptibility(z, PauliString(1, {0: "Z"}, 2.0)) == pytest.approx(error_susceptibility(z, 2.0 * SZ))


def test_gaussian_pulse_is_exact_rotation():
    for angle in (np.pi, np.pi / 2):
        z = gaussian_pulse(angle, 240.0, 50)
        assert gate_fidelity(z.final_unitary, rx(angle)) > 1 - 1e-12
        assert abs(z.a[0, 0]) < 1e-12 and abs(z.a[-1, 0]) < 1e-12


@pytest.fixture(scope="module")
def smooth_x():
    b = pulse_bounds(50, 1, 0.2, 4e-4)
    z0 = initial_guess(np.pi, 240.0, 50, b, seed=3, noise=0.2)
    return solve(smooth_pulse_problem(X_GATE), z0, SolverConfig())


def test_smooth_pulse_solve(smooth_x):
    z, report = smooth_x
    assert report.converged
    # independent check: re-roll the returned accelerations
    again = rollout(SYS, z.dda, z.a[0], z.da[0], z.timesteps)
    assert gate_fidelity(again.final_unitary, X_GATE) >= 0.9999
    assert np.max(np.abs(dynamics_residual(SYS, z))) <= 1e-8
    assert z.max_bound_violation() <= 1e-12


def test_robust_solve_beats_smooth(smooth_x):
    z_smooth, _ = smooth_x
    b = pulse_bounds(50, 1, 0.2, 4e-4)
    z0 = initial_guess(np.pi, 240.0, 50, b, seed=4)
    z, report = solve(robustness_problem(X_GATE, DETUNING * SZ, 0.9999, angle=np.pi), z0, SolverConfig())
    assert report.converged
    assert fidelity(z, X_GATE) >= 0.9999 - 1e-9
    assert error_susceptibility(z, DETUNING * SZ) < error_susceptibility(z_smooth, DETUNING * SZ)


def test_degenerate_problem_accepts_feasible_start():
    z0 = gaussian_pulse(np.pi / 3, 100.0, 20)
    problem = TrajectoryProblem([Vertex("g", SYS, X_GATE)])
    z, report = solve(problem, z0, SolverConfig(fidelity=0.0))
    assert report.converged
    assert np.max(np.abs(dynamics_residual(SYS, z))) <= 1e-10


def test_solve_rejects_negative_bounds():
    z0 = gaussian_pulse(np.pi, 100.0, 20)
    z0.bounds["a"] = -np.ones_like(z0.a)
    with pytest.raises(ValueError):
        solve(smooth_pulse_problem(X_GATE), z0)


@pytest.mark.parametrize(
    "term, tol",
    [
        (RegularizationTerm(0, 0.01), 1e-6),
        (InfidelityTerm(0, X_GATE), 1e-5),
        (SusceptibilityTerm(0, DETUNING * SZ), 1e-5),
    ],
)
def test_gradients_match_finite_differences(term, tol):
    rng = np.random.default_rng(7)
    b = pulse_bounds(25, 1, 0.2, 4e-4)
    for seed in range(3):
        z = initial_guess(np.pi * rng.uniform(0.3, 1.0), 120.0, 25, b, seed, noise=0.3)
        problem = TrajectoryProblem([Vertex("g", SYS, X_GATE)], [term])
        assert check_gradient(problem, z, k=4, seed=seed) <= tol
