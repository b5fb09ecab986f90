import numpy as np
import pytest

from varopt.adjoint import (
    OcpObjective,
    adjoint_boundary,
    backward_sweep,
    control_gradient,
    objective,
    reduced_gradient,
)
from varopt.discrete import Trajectory, integrate, legendre_plus
from varopt.models import PendulumParams, initial_state, pendulum_minimal, pendulum_objective
from varopt.numerics import ErrorTable, estimate_order, fd_gradient, infinity_error


def run_pendulum(h, n, u=None, phi0=0.0):
    params = PendulumParams(h=h)
    sys = pendulum_minimal(params)
    if u is None:
        u = np.ones(n)
    return sys, integrate(sys, [phi0], [0.0], u)


def test_objective_zero_at_target():
    sys, traj = run_pendulum(0.05, 8)
    obj = OcpObjective(s_q=[[1e3]], s_p=[[1e-2]], r=[[0.0]],
                       q_target=traj.q[-1], p_target=traj.p_N)
    assert objective(traj, obj) == 0.0


def test_objective_simple_values():
    traj = Trajectory(q=np.array([[0.0], [1.0]]), u=np.array([[3.0]]), h=0.1,
                      p_N=np.array([2.0]))
    obj = OcpObjective(s_q=[[2.0]], s_p=[[4.0]], r=[[10.0]],
                       q_target=[0.0], p_target=[0.0])
    # 0.5*2*1 + 0.5*4*4 + 0.5*10*9
    assert objective(traj, obj) == pytest.approx(1.0 + 8.0 + 45.0, rel=1e-14)


def test_boundary_zero_when_targets_met():
    sys, traj = run_pendulum(0.05, 8)
    obj = OcpObjective(s_q=[[1e3]], s_p=[[1e-2]], r=[[1.0]],
                       q_target=traj.q[-1], p_target=traj.p_N)
    lam_last, lam_prev = adjoint_boundary(sys, traj, obj)
    assert np.max(np.abs(lam_last)) == 0.0
    assert np.max(np.abs(lam_prev)) == 0.0


def test_terminal_multiplier_closed_form():
    # with S_p = 0 and unit terminal mismatch the terminal multiplier is
    # S_q / (m l^2 / h - (h/4) m g l cos(mid))
    h = 0.05
    sys, traj = run_pendulum(h, 6)
    s_q = 37.0
    obj = OcpObjective(s_q=[[s_q]], s_p=[[0.0]], r=[[1.0]],
                       q_target=[traj.q[-1, 0] - 1.0], p_target=[0.0])
    lam_last, _ = adjoint_boundary(sys, traj, obj)
    mid = 0.5 * (traj.q[-2, 0] + traj.q[-1, 0])
    want = s_q / (1.0 / h - 0.25 * h * 9.81 * np.cos(mid))
    assert lam_last[0] == pytest.approx(want, rel=1e-12)


def rand_setup(seed, n=9, h=0.05):
    rng = np.random.default_rng(seed)
    u = rng.uniform(-2.0, 2.0, size=n)
    sys, traj = run_pendulum(h, n, u=u, phi0=rng.uniform(-0.5, 0.5))
    obj = OcpObjective(s_q=[[1e3]], s_p=[[1e-2]], r=[[1e-5 * h]],
                       q_target=[np.pi], p_target=[0.0])
    return sys, traj, obj


def test_terminal_pair_hand_expansion():
    # the two boundary equations, written out by hand for the scalar
    # pendulum (corrected transcription of the specialized adjoint system)
    h = 0.05
    g = 9.81
    sys, traj, obj = rand_setup(11, n=7, h=h)
    lam = backward_sweep(sys, traj, obj)
    q = traj.q[:, 0]
    u = traj.u[:, 0]
    s_q, s_p = 1e3, 1e-2
    p_end = legendre_plus(sys, traj.q[-2], traj.q[-1], traj.u[-1])[0]
    dp = p_end - 0.0

    mid_last = 0.5 * (q[-2] + q[-1])
    eq_a = (lam[-1, 0] * (-1.0 / h + 0.25 * h * g * np.cos(mid_last))
            + s_q * (q[-1] - np.pi)
            + s_p * dp * (1.0 / h + 0.25 * h * g * np.cos(mid_last)))
    assert abs(eq_a) < 1e-9 * max(1.0, s_q * abs(q[-1] - np.pi))

    mid_prev = 0.5 * (q[-3] + q[-2])
    eq_b = (lam[-2, 0] * (-1.0 / h + 0.25 * h * g * np.cos(mid_prev))
            + lam[-1, 0] * (2.0 / h + 0.25 * h * g * (np.cos(mid_prev) + np.cos(mid_last)))
            + s_p * dp * (-1.0 / h + 0.25 * h * g * np.cos(mid_last)))
    assert abs(eq_b) < 1e-9 * max(1.0, abs(lam[-1, 0]) / h)


def test_interior_recursion_hand_expansion():
    h = 0.05
    g = 9.81
    sys, traj, obj = rand_setup(5, n=9, h=h)
    lam = backward_sweep(sys, traj, obj)
    q = traj.q[:, 0]
    scale = np.max(np.abs(lam)) / h
    for n in range(1, len(traj.u) - 1):
        mid_prev = 0.5 * (q[n - 1] + q[n])
        mid_next = 0.5 * (q[n] + q[n + 1])
        resid = ((lam[n - 1, 0] - 2.0 * lam[n, 0] + lam[n + 1, 0]) / h
                 - 0.25 * h * g * (np.cos(mid_prev) * (lam[n - 1, 0] + lam[n, 0])
                                   + np.cos(mid_next) * (lam[n, 0] + lam[n + 1, 0])))
        assert abs(resid) < 1e-9 * max(1.0, scale)


def test_gradient_hand_expansion():
    h = 0.05
    sys, traj, obj = rand_setup(23, n=8, h=h)
    lam = backward_sweep(sys, traj, obj)
    grad = control_gradient(sys, traj, lam, obj)
    u = traj.u[:, 0]
    r = 1e-5 * h
    p_end = traj.p_N[0]
    for n in range(len(u) - 1):
        want = r * u[n] + 0.5 * h * (lam[n, 0] + lam[n + 1, 0])
        assert grad[n, 0] == pytest.approx(want, rel=1e-12, abs=1e-15)
    want_last = r * u[-1] + 0.5 * h * lam[-1, 0] + 0.5 * h * 1e-2 * (p_end - 0.0)
    assert grad[-1, 0] == pytest.approx(want_last, rel=1e-12, abs=1e-15)


def test_gradient_matches_finite_differences():
    params = PendulumParams(h=0.05)
    sys = pendulum_minimal(params)
    q0, p0 = initial_state(params)
    obj = pendulum_objective(params)
    rng = np.random.default_rng(42)
    u = rng.uniform(-1.5, 1.5, size=10)
    _, grad, _ = reduced_gradient(sys, q0, p0, u, obj)

    def reduced(uu):
        traj = integrate(sys, q0, p0, uu)
        return objective(traj, obj)

    eps = 1e-6 * (1.0 + np.max(np.abs(u)))
    fd = fd_gradient(reduced, u, eps=eps)
    err = np.abs(grad[:, 0] - fd)
    assert np.max(err / (np.abs(fd) + 1e-10)) < 1e-6


def test_adjoint_second_order_convergence():
    # shared-horizon sweep against a fine reference, constant control
    params_ref = PendulumParams(h=2.5e-4)
    sys_ref = pendulum_minimal(params_ref)
    obj = pendulum_objective(params_ref)
    q0, p0 = initial_state(params_ref)
    _, _, traj_ref = reduced_gradient(sys_ref, q0, p0, np.ones(params_ref.n_steps), obj)

    errs_q, errs_l = [], []
    steps = (2e-2, 1e-2, 5e-3)
    for h in steps:
        params = PendulumParams(h=h)
        sys = pendulum_minimal(params)
        _, _, traj = reduced_gradient(sys, q0, p0, np.ones(params.n_steps), obj)
        errs_q.append(infinity_error(traj, traj_ref, field="q"))
        errs_l.append(infinity_error(traj, traj_ref, field="lam"))

    for errs in (errs_q, errs_l):
        order = estimate_order(ErrorTable(step_sizes=steps, errors=tuple(errs)))
        assert 1.7 < order < 2.3


def test_sweep_linear_in_terminal_mismatch():
    sys, traj = run_pendulum(0.05, 9)
    base = traj.q[-1, 0]
    lam1 = backward_sweep(sys, traj, OcpObjective(
        s_q=[[1e3]], s_p=[[0.0]], r=[[1.0]], q_target=[base - 1.0], p_target=[0.0]))
    lam2 = backward_sweep(sys, traj, OcpObjective(
        s_q=[[1e3]], s_p=[[0.0]], r=[[1.0]], q_target=[base - 2.0], p_target=[0.0]))
    assert np.allclose(lam2, 2.0 * lam1, rtol=1e-12, atol=1e-14)
