import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from autores.integrator import (KAPPA, AmplitudeUnderflow, SolverConfig, Trajectory, Verdict,
                                capture_map, classify_capture, dev_rhs, dopri_fixed, ic_grid,
                                integrate, integrate_backward, integrate_deviation,
                                integrate_oscillator, locked_start, oscillator_ic,
                                reduced_params, rhs_ms, rk4_fixed, vartheta_for)
from autores.integrator import OscillatorTrajectory, SolverStats
from autores.phase_model import ModelParams, Regularized
from autores.series import build_solution, eval_solution, eval_solution_derivative

TIGHT = SolverConfig(rtol=1e-11, atol=1e-13)


def _field(params):
    return lambda t, y: np.array(rhs_ms(t, y[0], y[1], params))


def test_adaptive_matches_fixed_step_rk4(case1):
    params, _ = case1
    traj = integrate(params, (1.0, 0.8, 0.3), 6.0, TIGHT)
    ref = rk4_fixed(_field(params), 1.0, [0.8, 0.3], 6.0, 1e-3)
    np.testing.assert_allclose([traj.rho[-1], traj.psi[-1]], ref, rtol=1e-8, atol=1e-9)


def test_fixed_step_dormand_prince_is_fifth_order(case1):
    params, _ = case1
    ic = (1.0, 0.8, 0.3)
    ref = rk4_fixed(_field(params), 1.0, [0.8, 0.3], 3.0, 1e-4)
    e1 = np.abs(dopri_fixed(params, ic, 3.0, 0.04) - ref).max()
    e2 = np.abs(dopri_fixed(params, ic, 3.0, 0.02) - ref).max()
    assert 2 ** 4.3 < e1 / e2 < 2 ** 5.7


def test_backward_run_retraces(case1):
    params, _ = case1
    fwd = integrate(params, (2.0, 1.2, 0.4), 10.0, TIGHT)
    back = integrate_backward(params, (10.0, fwd.rho[-1], fwd.psi[-1]), 2.0, TIGHT)
    assert back.tau[-1] == pytest.approx(2.0)
    np.testing.assert_allclose([back.rho[-1], back.psi[-1]], [1.2, 0.4], atol=1e-7)


@given(st.floats(50.0, 1e4), st.floats(-0.05, 0.05), st.floats(-0.05, 0.05))
def test_deviation_field_is_the_difference_of_fields(case1_params_sol, tau, r, p):
    params, sol = case1_params_sol
    rho_s, psi_s = (float(v) for v in eval_solution(sol, tau))
    d_rho_s, d_psi_s = (float(v) for v in eval_solution_derivative(sol, tau))
    f = rhs_ms(tau, rho_s + r, psi_s + p, params)
    expect = (f[0] - d_rho_s, f[1] - d_psi_s)
    got = dev_rhs(params, sol, tau, r, p)
    # the deviation form avoids the cancellation in rho**2 - lam tau; compare at that scale
    assert got[0] == pytest.approx(expect[0], abs=1e-10)
    assert got[1] == pytest.approx(expect[1], abs=1e-12 * params.lam * tau + 1e-10)


@pytest.fixture(scope="module")
def case1_params_sol(case1):
    params, root = case1
    return params, build_solution(params, root)


def test_deviation_run_agrees_with_direct_run(case1_params_sol):
    params, sol = case1_params_sol
    dev = integrate_deviation(params, sol, (20.0, 0.01, -0.02), 60.0, TIGHT)
    rho0, psi0 = (float(v) for v in eval_solution(sol, 20.0))
    direct = integrate(params, (20.0, rho0 + 0.01, psi0 - 0.02), 60.0, TIGHT)
    assert dev.rho_star[-1] + dev.r[-1] == pytest.approx(direct.rho[-1], rel=1e-8)
    assert dev.psi_star[-1] + dev.p[-1] == pytest.approx(direct.psi[-1], abs=1e-7)
    back = dev.as_trajectory()
    assert back.rho[-1] == dev.rho_star[-1] + dev.r[-1]


def test_escape_stops_the_run(case1_params_sol):
    params, sol = case1_params_sol
    dev = integrate_deviation(params, sol, (100.0, 0.01, 0.0), 1e3, SolverConfig(),
                              escape=(0.005, 1.0, 0.0, 0.0, 0.0))
    assert dev.escaped and dev.solver_stats.status == "escaped"
    assert dev.tau[-1] < 1e3
    assert math.hypot(dev.r[-1], 0.0) > 0.005


def test_amplitude_guard():
    params = ModelParams.from_delta(0.0, 0.0)
    with pytest.raises(AmplitudeUnderflow):
        integrate(params, (1.0, 0.6, -math.pi / 2), 5.0, SolverConfig(guard_rho_min=0.5))
    with pytest.raises(AmplitudeUnderflow):
        rhs_ms(1.0, 1e-9, 0.0, params)


def test_start_checks():
    params = ModelParams.from_delta(0.2, 0.0)
    with pytest.raises(ValueError):
        integrate(params, (0.0, 1.0, 0.0), 2.0)
    with pytest.raises(ValueError):
        integrate(params, (3.0, 1.0, 0.0), 2.0)
    reg = ModelParams(1.0, 0.0, Regularized(0.2, 1.0))
    assert integrate(reg, (0.0, 1.0, 0.0), 1.0).tau[0] == 0.0


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rtol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(rtol=0.1)
    with pytest.raises(ValueError):
        SolverConfig(stride=0)


def test_sample_buffer_is_bounded(case1):
    params, _ = case1
    traj = integrate(params, (1.0, 0.8, 0.3), 300.0, SolverConfig(max_samples=64))
    assert len(traj) <= 64
    assert traj.tau[-1] == pytest.approx(300.0)
    assert np.all(np.diff(traj.tau) > 0)


def _synthetic(tau, rho, psi):
    stats = SolverStats(0, 0, 0.0)
    return Trajectory(np.asarray(tau, float), np.asarray(rho, float), np.asarray(psi, float),
                      stats)


def test_classify_capture_on_synthetic_runs():
    params = ModelParams.from_delta(0.2, 0.0)
    tau = np.linspace(1, 100, 200)
    locked = _synthetic(tau, np.sqrt(tau), np.full_like(tau, 3.0))
    slipping = _synthetic(tau, np.full_like(tau, 0.5), tau ** 2)
    assert classify_capture(locked, params).verdict is Verdict.CAPTURED
    assert classify_capture(slipping, params).verdict is Verdict.NOT_CAPTURED
    odd = _synthetic(tau, np.sqrt(tau), tau ** 2)
    assert classify_capture(odd, params).verdict is Verdict.UNDECIDED


def test_capture_map_covers_grid():
    params = ModelParams(1.0, 0.0, Regularized(-0.5, 1.0))
    grid = ic_grid((0.5, 3.0), 3, 4)
    assert len(grid) == 12
    assert all(0.0 <= s < 2 * math.pi for _, s in grid)
    rows = capture_map(params, grid, 80.0)
    assert [(r.rho0, r.psi0) for r in rows] == grid
    assert {r.verdict for r in rows} <= {v.value for v in Verdict}


def test_oscillator_without_coupling_is_harmonic():
    ic = (0.3, -0.2)
    traj = integrate_oscillator(0.0, 0.0, ic, 20.0, TIGHT)
    t = traj.t
    np.testing.assert_allclose(traj.x, ic[0] * np.cos(t) + ic[1] * np.sin(t), atol=1e-8)
    np.testing.assert_allclose(traj.E, traj.E[0], rtol=1e-9)


@given(st.floats(1e-4, 0.05), st.floats(0.01, 3.0))
def test_energy_envelope_inverts_turning_point(eps, amp):
    # energy of a turning point at x = A, v = 0
    A = KAPPA * amp
    E = A * A / 2 - eps * A ** 4 / 4
    traj = OscillatorTrajectory(np.zeros(1), np.zeros(1), np.zeros(1), np.array([E]),
                                np.zeros(1), SolverStats(0, 0, 0.0), eps, 0.0)
    assert traj.envelope()[0] == pytest.approx(amp, rel=1e-9)


def test_reduced_model_scalings():
    eps = 0.01
    th = vartheta_for(2.0, eps)
    assert reduced_params(eps, th).lam == pytest.approx(2.0)
    assert oscillator_ic(2.0, 0.0) == (2.0 * KAPPA, 0.0)


def test_locked_start_sits_on_captured_branch():
    params = reduced_params(0.01, vartheta_for(1.0, 0.01))
    rho0, psi0 = locked_start(params)
    traj = integrate(params, (0.0, rho0, psi0), 60.0, TIGHT)
    assert classify_capture(traj, params).verdict is Verdict.CAPTURED
