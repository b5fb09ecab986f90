import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from varopt.numerics import (
    DegenerateFit,
    ErrorTable,
    GridMismatch,
    NewtonSettings,
    NonConvergence,
    SingularJacobian,
    estimate_order,
    fd_gradient,
    fd_jacobian,
    infinity_error,
    newton_solve,
)


class Series:
    # tiny stand-in for a trajectory: just .q/.lam and .h
    def __init__(self, q, h, lam=None):
        self.q = np.asarray(q, dtype=float)
        self.h = h
        self.lam = lam


def test_newton_linear_root():
    x = newton_solve(lambda z: 3.0 * z - 6.0, lambda z: np.array([[3.0]]), 0.0)
    assert x[0] == pytest.approx(2.0, abs=1e-14)


def test_newton_quadratic_root():
    x = newton_solve(lambda z: z * z - 4.0, lambda z: np.array([[2.0 * z[0]]]), 3.0)
    assert x[0] == pytest.approx(2.0, abs=1e-12)


def test_newton_pendulum_del_step():
    # one forced discrete pendulum step, solved independently by bisection
    # beforehand; the frozen root is the reference
    m = l = 1.0
    g = 9.81
    h = 0.1
    phi_prev, phi_curr, u = 0.0, 0.05, 1.0

    def residual(phi_next):
        mid1 = 0.5 * (phi_curr + phi_next)
        mid0 = 0.5 * (phi_prev + phi_curr)
        return ((phi_next - 2.0 * phi_curr + phi_prev) / h
                - 0.5 * h * (g / l) * (np.sin(mid1) + np.sin(mid0))
                - h * (u + u) / 2.0)

    root = newton_solve(residual, None, 2.0 * phi_curr - phi_prev)
    assert root[0] == pytest.approx(0.11527487682866035, abs=1e-11)


def test_newton_affine_single_iteration():
    calls = {"residual": 0, "jacobian": 0}

    def residual(x):
        calls["residual"] += 1
        return np.array([2.0 * x[0] + x[1] - 1.0, x[0] - x[1] + 4.0])

    def jacobian(x):
        calls["jacobian"] += 1
        return np.array([[2.0, 1.0], [1.0, -1.0]])

    x = newton_solve(residual, jacobian, np.array([10.0, -3.0]))
    assert np.max(np.abs(residual(x))) < 1e-12
    # residual checked before updating: one solve, then the convergence check
    assert calls["jacobian"] == 1
    assert calls["residual"] == 3  # initial check, final check, assert above


def test_newton_fd_fallback_matches_analytic():
    def residual(x):
        return np.array([x[0] ** 2 + x[1] - 3.0, x[0] - np.sin(x[1])])

    x0 = np.array([1.2, 0.8])
    with_fd = newton_solve(residual, None, x0)
    def jac(x):
        return np.array([[2.0 * x[0], 1.0], [1.0, -np.cos(x[1])]])
    with_analytic = newton_solve(residual, jac, x0)
    assert np.allclose(with_fd, with_analytic, atol=1e-9)


def test_newton_singular_jacobian():
    def residual(x):
        return np.array([x[0] + x[1] - 1.0, x[0] + x[1] - 2.0])

    with pytest.raises(SingularJacobian):
        newton_solve(residual, None, np.zeros(2))


def test_newton_nonconvergence():
    cfg = NewtonSettings(max_iterations=3)
    with pytest.raises(NonConvergence):
        newton_solve(lambda z: z * z - 4.0,
                     lambda z: np.array([[2.0 * z[0]]]),
                     1e6, cfg)


def test_newton_settings_validation():
    with pytest.raises(ValueError):
        NewtonSettings(residual_tolerance=0.0)
    with pytest.raises(ValueError):
        NewtonSettings(max_iterations=0)
    with pytest.raises(ValueError):
        NewtonSettings(step_damping=1.5)
    with pytest.raises(ValueError):
        NewtonSettings(step_damping=0.0)


def test_fd_jacobian_quality():
    def residual(x):
        return np.array([np.exp(x[0]) + x[1] ** 3, x[0] * x[1]])

    x = np.array([0.3, -0.7])
    exact = np.array([[np.exp(0.3), 3 * 0.49], [-0.7, 0.3]])
    assert np.allclose(fd_jacobian(residual, x), exact, atol=1e-5)


def test_fd_gradient_constant_zero():
    assert np.all(fd_gradient(lambda x: 4.2, np.array([1.0, 2.0, 3.0])) == 0.0)


def test_fd_gradient_quadratic():
    g = fd_gradient(lambda x: float(x @ x), np.array([1.0, 2.0]), eps=1e-6)
    assert np.allclose(g, [2.0, 4.0], atol=1e-8)


def test_fd_gradient_vs_analytic():
    def f(x):
        return np.sin(x[0]) * x[1] + np.exp(0.3 * x[1])

    x = np.array([0.7, -1.3])
    exact = np.array([np.cos(0.7) * (-1.3), np.sin(0.7) + 0.3 * np.exp(0.3 * -1.3)])
    g = fd_gradient(f, x, eps=1e-6)
    assert np.max(np.abs(g - exact)) / np.max(np.abs(exact)) < 1e-6


def test_infinity_error_identical():
    t = Series(np.zeros((11, 2)), 0.1)
    assert infinity_error(t, t) == 0.0


def test_infinity_error_aligned_grids():
    coarse = Series(np.ones((6, 1)), 0.2)
    fine = Series(np.zeros((11, 1)), 0.1)
    assert infinity_error(coarse, fine) == 1.0


def test_infinity_error_grid_mismatch():
    with pytest.raises(GridMismatch):
        infinity_error(Series(np.zeros((6, 1)), 0.15), Series(np.zeros((11, 1)), 0.1))
    with pytest.raises(GridMismatch):
        # integer ratio but different horizons
        infinity_error(Series(np.zeros((6, 1)), 0.2), Series(np.zeros((12, 1)), 0.1))


def test_infinity_error_lambda_series():
    coarse = Series(None, 0.2, lam=np.full((5, 1), 2.0))
    fine = Series(None, 0.1, lam=np.zeros((10, 1)))
    assert infinity_error(coarse, fine, field="lam") == 2.0


@hyp_settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=9), st.integers(min_value=0, max_value=1000))
def test_infinity_error_metric_properties(n_nodes, seed):
    rng = np.random.default_rng(seed)
    a = Series(rng.normal(size=(n_nodes, 3)), 0.1)
    b = Series(rng.normal(size=(n_nodes, 3)), 0.1)
    c = Series(rng.normal(size=(n_nodes, 3)), 0.1)
    dab = infinity_error(a, b)
    assert dab == infinity_error(b, a)
    assert dab <= infinity_error(a, c) + infinity_error(c, b) + 1e-12


def test_error_table_validation():
    with pytest.raises(ValueError):
        ErrorTable(step_sizes=(0.1, 0.2), errors=(1.0, 2.0))
    with pytest.raises(ValueError):
        ErrorTable(step_sizes=(0.2, 0.1), errors=(1.0, -2.0))
    with pytest.raises(ValueError):
        ErrorTable(step_sizes=(0.2, 0.1), errors=(1.0,))


def test_estimate_order_exact_second_order():
    table = ErrorTable(step_sizes=(1e-1, 5e-2, 2.5e-2),
                       errors=(1e-2, 2.5e-3, 6.25e-4), label="exact")
    assert estimate_order(table) == pytest.approx(2.0, rel=1e-12)


def test_estimate_order_flat_errors():
    table = ErrorTable(step_sizes=(1e-1, 5e-2, 2.5e-2), errors=(3.0, 3.0, 3.0))
    assert estimate_order(table) == 0.0


def test_estimate_order_degenerate():
    with pytest.raises(DegenerateFit):
        estimate_order(ErrorTable(step_sizes=(0.1,), errors=(1.0,)))
    with pytest.raises(DegenerateFit):
        estimate_order(ErrorTable(step_sizes=(0.1, 0.05), errors=(1.0, 0.0)))
