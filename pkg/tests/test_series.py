import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from autores.phase_model import (ModelParams, Regularized, StabilityClass, bifurcation_delta,
                                 find_roots)
from autores.series import (ConstantTermPresent, NoRealBranch, OrderUnderflow, PuiseuxSeries,
                            build_solution, eval_solution, eval_solution_derivative,
                            numeric_residual, predicted_residual_exponent, residual,
                            residual_slope, series_cos_around, series_mul, series_sin_around,
                            to_float, truncation_estimate)

from conftest import pick

coeff_lists = st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=8)


def _series(q, offset, coeffs):
    return PuiseuxSeries(q, offset, np.array(coeffs, float))


@given(st.sampled_from([1, 2, 4, 6]), st.integers(0, 3), coeff_lists, st.integers(0, 3),
       coeff_lists, st.floats(1e4, 1e8))
def test_product_evaluates_to_product(q, oa, ca, ob, cb, tau):
    a, b = _series(q, oa, ca), _series(q, ob, cb)
    prod = series_mul(a, b)
    # both series are exact polynomials; the product is exact to its known precision
    z = tau ** (-1.0 / q)
    tail = (sum(abs(c) for c in ca) + 1) * (sum(abs(c) for c in cb) + 1) * z ** prod.precision
    assert prod(tau) == pytest.approx(a(tau) * b(tau), abs=2 * tail + 1e-14)


@given(st.floats(-3.0, 3.0), coeff_lists, st.floats(1e6, 1e9))
def test_sin_and_cos_around_match_direct_evaluation(c, coeffs, tau):
    h = PuiseuxSeries.exact(2, 1, np.array(coeffs, float), 10)
    hv = h(tau)
    assert series_sin_around(c, h)(tau) == pytest.approx(math.sin(c + hv), abs=1e-9)
    assert series_cos_around(c, h)(tau) == pytest.approx(math.cos(c + hv), abs=1e-9)


def test_trig_rejects_constant_term():
    with pytest.raises(ConstantTermPresent):
        series_sin_around(0.0, _series(2, 0, [1.0, 0.5]))


def test_derivative_of_power():
    # z**3 with z = tau**(-1/2) is tau**(-3/2)
    s = _series(2, 3, [1.0])
    assert s.derivative()(4.0) == pytest.approx(-1.5 * 4.0 ** -2.5)


def test_order_underflow():
    with pytest.raises(OrderUnderflow):
        PuiseuxSeries(2, 0, np.array([]))
    with pytest.raises(OrderUnderflow):
        _series(2, 0, [1.0, 2.0]).coeff(5)


def test_lift_preserves_values():
    s = _series(2, 1, [1.0, -0.5, 0.25])
    assert s.lift(3)(123.0) == pytest.approx(s(123.0))


# --- particular solutions --------------------------------------------------


def test_case_one_constants(case1):
    p, root = case1
    sol = build_solution(p, root)
    theta = math.sqrt(p.lam) / (2 * root.p_derivs[0])
    assert sol.constants.theta == pytest.approx(theta)
    assert sol.psi1 == pytest.approx(-theta, abs=1e-12)
    assert sol.rho_coeffs()[0] == pytest.approx(math.sqrt(p.lam))
    assert sol.sigma == pytest.approx(root.sigma)


@pytest.mark.parametrize("branch", [1, -1])
def test_case_two_constants(case2, branch):
    p, root = case2
    sol = build_solution(p, root, branch=branch)
    phi = math.sqrt(-math.sqrt(p.lam) / root.p_derivs[1])
    assert sol.constants.phi == pytest.approx(phi)
    assert sol.psi1 == pytest.approx(branch * phi, abs=1e-10)
    assert sol.q == 4 and sol.branch == branch


def test_case_three_constants(case3):
    p, root = case3
    sol = build_solution(p, root)
    chi = (3 * math.sqrt(p.lam) / root.p_derivs[2]) ** (1 / 3)
    assert sol.psi1 == pytest.approx(-chi, abs=1e-10)
    assert sol.q == 6


def test_unstable_double_has_no_real_branch():
    nu = math.pi / 6
    p = ModelParams.from_delta(bifurcation_delta(nu), nu)
    with pytest.raises(NoRealBranch):
        build_solution(p, pick(p, StabilityClass.UNSTABLE_DOUBLE))


def test_regularized_profile_must_be_expanded():
    p = ModelParams(1.0, 0.0, Regularized(0.2, 1.0))
    root = find_roots(p)[1]
    with pytest.raises(ValueError):
        build_solution(p, root)
    q = ModelParams(1.0, 0.0, p.mu.as_asymptotic())
    assert build_solution(q, root).psi1 < 0


def test_bad_arguments(case1):
    p, root = case1
    with pytest.raises(ValueError):
        build_solution(p, root, n_orders=1)
    with pytest.raises(ValueError):
        build_solution(p, root, branch=2)


@pytest.mark.parametrize("which", ["case1", "case2", "case3"])
def test_float_and_extended_precision_agree(which, request):
    p, root = request.getfixturevalue(which)
    a = build_solution(p, root, branch=-1)
    b = to_float(build_solution(p, root, branch=-1, dps=40))
    np.testing.assert_allclose(a.rho_coeffs(), b.rho_coeffs(), atol=1e-8)
    np.testing.assert_allclose(a.psi_coeffs(), b.psi_coeffs(), atol=1e-8)


@pytest.mark.parametrize("which", ["case1", "case2", "case3"])
def test_symbolic_residual_vanishes_below_first_unsolved_order(which, request):
    p, root = request.getfixturevalue(which)
    sol = build_solution(p, root, branch=-1, dps=40)
    e1, e2 = residual(sol)
    expo = predicted_residual_exponent(sol)
    for e in (e1, e2):
        mags = np.abs(e.coeffs.astype(float))
        exps = e.tau_exponents()
        # the double root itself is only float-exact, hence 1e-12 rather than 1e-40
        assert np.all(mags[exps > expo + 1e-9] < 1e-12)


@pytest.mark.parametrize("which", ["case1", "case2", "case3"])
def test_numeric_residual_decays_at_predicted_rate(which, request):
    # mpmath evaluation of the equations is independent of the series algebra
    p, root = request.getfixturevalue(which)
    sol = build_solution(p, root, branch=-1, dps=50)
    assert residual_slope(sol, p) == pytest.approx(predicted_residual_exponent(sol), abs=0.1)


def test_series_tracks_numeric_derivative(case1):
    p, root = case1
    sol = build_solution(p, root)
    tau, h = 1e3, 1e-2
    r_plus, _ = eval_solution(sol, tau + h)
    r_minus, _ = eval_solution(sol, tau - h)
    assert eval_solution_derivative(sol, tau)[0] == pytest.approx((r_plus - r_minus) / (2 * h),
                                                                  rel=1e-6)


def test_truncation_estimate_shrinks(case1):
    p, root = case1
    sol = build_solution(p, root)
    a = truncation_estimate(sol, 1e2)
    b = truncation_estimate(sol, 1e4)
    assert b[0] < a[0] and b[1] < a[1]


def test_numeric_residual_is_small_at_large_tau(case1):
    p, root = case1
    sol = build_solution(p, root)
    e1, e2 = numeric_residual(sol, p, 1e6)
    assert abs(e1) < 1e-8 and abs(e2) < 1e-6
