"""Discrete adjoint sweep and control gradient for unconstrained systems.

The optimal-control objective is

    J = 1/2 (q_N - q_ref)' S_q (q_N - q_ref)
      + 1/2 (p_N - p_ref)' S_p (p_N - p_ref)
      + sum_n 1/2 u_n' R u_n

with p_N the discrete momentum attached to the forward trajectory.  The
adjoint variables lam_0..lam_{N-1} enforce the N stepping equations (the
initialization equation for n = 0, the interior residuals for n >= 1); the
sweep solves the transposed linearized equations backwards in time.

Writing M_k = d12_ld(q_{k-1}, q_k) + d2_f_minus(q_{k-1}, q_k, u_{k-1}) for
the Jacobian of residual k-1 in its unknown q_k, the recursion is

    M_N' lam_{N-1}   = -S_q dq - (d22 + d2f+)' S_p dp          (terminal)
    M_{N-1}' lam_{N-2} = -B_{N-1}' lam_{N-1}
                         - (d21 + d1f+)' S_p dp                 (one before)
    M_n' lam_{n-1}   = -B_n' lam_n - C_n' lam_{n+1}             (interior)

where B_n collects the derivatives of residual n in q_n and C_n those of
residual n+1 in q_n.
"""

import dataclasses

import numpy as np

from varopt.numerics import SingularJacobian
from varopt.discrete import integrate


@dataclasses.dataclass
class OcpObjective:
    """Weights and targets of the terminal-cost optimal control problem."""

    s_q: np.ndarray
    s_p: np.ndarray
    r: np.ndarray
    q_target: np.ndarray
    p_target: np.ndarray

    def __post_init__(self):
        self.s_q = np.atleast_2d(np.asarray(self.s_q, dtype=float))
        self.s_p = np.atleast_2d(np.asarray(self.s_p, dtype=float))
        self.r = np.atleast_2d(np.asarray(self.r, dtype=float))
        self.q_target = np.atleast_1d(np.asarray(self.q_target, dtype=float))
        self.p_target = np.atleast_1d(np.asarray(self.p_target, dtype=float))


def objective(traj, obj):
    """Evaluate the objective on a trajectory carrying p_N."""
    if traj.p_N is None:
        raise ValueError("trajectory has no terminal momentum p_N")
    dq = traj.q[-1] - obj.q_target
    dp = traj.p_N - obj.p_target
    value = 0.5 * dq @ obj.s_q @ dq + 0.5 * dp @ obj.s_p @ dp
    for u in traj.u:
        value += 0.5 * u @ obj.r @ u
    return float(value)


def _solve_t(mat, rhs):
    try:
        return np.linalg.solve(mat.T, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(str(exc)) from exc


def _m_matrix(sys, q, u, k):
    # Jacobian of residual k-1 with respect to its unknown q_k
    return (sys.d12_ld(q[k - 1], q[k]) + sys.d2_f_minus(q[k - 1], q[k], u[k - 1]))


def adjoint_boundary(sys, traj, obj):
    """Terminal pair (lam_{N-1}, lam_{N-2}) of the backward sweep."""
    q, u = traj.q, traj.u
    n_steps = len(u)
    dq = q[-1] - obj.q_target
    dp = traj.p_N - obj.p_target
    sp_dp = obj.s_p @ dp

    m_last = _m_matrix(sys, q, u, n_steps)
    rhs = -(obj.s_q @ dq)
    rhs -= (sys.d22_ld(q[-2], q[-1]) + sys.d2_f_plus(q[-2], q[-1], u[-1])).T @ sp_dp
    lam_last = _solve_t(m_last, rhs)

    b_mat = (sys.d22_ld(q[-3], q[-2]) + sys.d2_f_plus(q[-3], q[-2], u[-2])
             + sys.d11_ld(q[-2], q[-1]) + sys.d1_f_minus(q[-2], q[-1], u[-1]))
    rhs2 = -(b_mat.T @ lam_last)
    rhs2 -= (sys.d21_ld(q[-2], q[-1]) + sys.d1_f_plus(q[-2], q[-1], u[-1])).T @ sp_dp
    m_prev = _m_matrix(sys, q, u, n_steps - 1)
    lam_prev = _solve_t(m_prev, rhs2)
    return lam_last, lam_prev


def adjoint_step(sys, traj, lam_next, lam_curr, n):
    """One interior backward step: from (lam_{n+1}, lam_n) to lam_{n-1}.

    Valid for n = N-2 down to 1.
    """
    q, u = traj.q, traj.u
    b_mat = (sys.d22_ld(q[n - 1], q[n]) + sys.d2_f_plus(q[n - 1], q[n], u[n - 1])
             + sys.d11_ld(q[n], q[n + 1]) + sys.d1_f_minus(q[n], q[n + 1], u[n]))
    c_mat = (sys.d21_ld(q[n], q[n + 1]) + sys.d1_f_plus(q[n], q[n + 1], u[n]))
    rhs = -(b_mat.T @ lam_curr) - (c_mat.T @ lam_next)
    return _solve_t(_m_matrix(sys, q, u, n), rhs)


def backward_sweep(sys, traj, obj):
    """All adjoint values lam_0..lam_{N-1} as an (N, dim_q) array."""
    n_steps = len(traj.u)
    if n_steps < 2:
        raise ValueError("backward sweep needs at least two intervals")
    lam = np.empty((n_steps, sys.dim_q))
    lam[n_steps - 1], lam[n_steps - 2] = adjoint_boundary(sys, traj, obj)
    for n in range(n_steps - 2, 0, -1):
        lam[n - 1] = adjoint_step(sys, traj, lam[n + 1], lam[n], n)
    return lam


def control_gradient(sys, traj, lam, obj):
    """Gradient of the objective in the controls, shape (N, dim_u).

    Interior intervals pair lam_n with the left force slot and lam_{n+1}
    with the right one; the final interval has no later multiplier, so the
    right slot couples directly to the momentum mismatch weighted by S_p.
    """
    q, u = traj.q, traj.u
    n_steps = len(u)
    dp = traj.p_N - obj.p_target
    sp_dp = obj.s_p @ dp
    grad = np.empty((n_steps, sys.dim_u))
    for n in range(n_steps - 1):
        grad[n] = (obj.r @ u[n]
                   + sys.d3_f_minus(q[n], q[n + 1], u[n]).T @ lam[n]
                   + sys.d3_f_plus(q[n], q[n + 1], u[n]).T @ lam[n + 1])
    n = n_steps - 1
    grad[n] = (obj.r @ u[n]
               + sys.d3_f_minus(q[n], q[n + 1], u[n]).T @ lam[n]
               + sys.d3_f_plus(q[n], q[n + 1], u[n]).T @ sp_dp)
    return grad


def reduced_gradient(sys, q0, p0, controls, obj, settings=None):
    """Forward run, backward sweep and control gradient in one call.

    Returns (value, gradient, trajectory with lam attached).  This is the
    single code path the shooting optimizer uses.
    """
    from varopt.numerics import DEFAULT_NEWTON

    traj = integrate(sys, q0, p0, controls, settings or DEFAULT_NEWTON)
    lam = backward_sweep(sys, traj, obj)
    traj.lam = lam
    grad = control_gradient(sys, traj, lam, obj)
    return objective(traj, obj), grad, traj
