"""Forced discrete Euler-Lagrange mechanics on a uniform time grid.

A mechanical system is described by a discrete Lagrangian Ld(qa, qb) on pairs
of neighbouring configurations together with left/right discrete force
covectors f_minus(qa, qb, u) and f_plus(qa, qb, u).  The two-point slot
derivatives follow the naming convention

    d1_ld  = derivative of Ld in the first slot        (n,)
    d12_ld = second derivative, first then second slot (n, n)
    d2_f_minus = derivative of f_minus in qb           (n, n)
    d3_f_plus  = derivative of f_plus in u             (n, dim_u)

and the stepping equation at an interior node n reads

    0 = d1_ld(q_n, q_{n+1}) + d2_ld(q_{n-1}, q_n)
        + f_minus(q_n, q_{n+1}, u_n) + f_plus(q_{n-1}, q_n, u_{n-1}).
"""

import dataclasses

import numpy as np

from varopt import numerics
from varopt.numerics import DEFAULT_NEWTON, newton_solve


@dataclasses.dataclass
class DiscreteSystem:
    """Callbacks defining one forced discrete mechanical system.

    All callbacks take and return plain float arrays: configurations are
    shape (dim_q,), controls shape (dim_u,), matrices shape (dim_q, dim_q)
    or (dim_q, dim_u) for the control derivatives.
    """

    dim_q: int
    dim_u: int
    h: float
    ld: callable
    d1_ld: callable
    d2_ld: callable
    d11_ld: callable
    d12_ld: callable
    d21_ld: callable
    d22_ld: callable
    f_minus: callable
    f_plus: callable
    d1_f_minus: callable
    d2_f_minus: callable
    d1_f_plus: callable
    d2_f_plus: callable
    d3_f_minus: callable
    d3_f_plus: callable
    continuous_legendre: callable


@dataclasses.dataclass
class Trajectory:
    """A discrete trajectory: q on nodes 0..N, u on intervals 0..N-1.

    lam optionally carries adjoint values on 0..N-1 and p_N the discrete
    momentum at the final node.
    """

    q: np.ndarray
    u: np.ndarray
    h: float
    lam: np.ndarray = None
    p_N: np.ndarray = None


def _fd_grad(f, x, eps=1e-6):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(x.size)
    for i in range(x.size):
        step = eps * (1.0 + abs(x[i]))
        xp = x.copy(); xp[i] += step
        xm = x.copy(); xm[i] -= step
        out[i] = (f(xp) - f(xm)) / (2.0 * step)
    return out


def _fd_jac_of_grad(g, x, eps=1e-4):
    # central difference of a vector-valued function, used for second
    # derivatives of finite-differenced first derivatives
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols = []
    for i in range(x.size):
        step = eps * (1.0 + abs(x[i]))
        xp = x.copy(); xp[i] += step
        xm = x.copy(); xm[i] -= step
        cols.append((g(xp) - g(xm)) / (2.0 * step))
    return np.stack(cols, axis=-1)


def midpoint_discretize(lagrangian, h, dim_q=1, dim_u=1, force=None):
    """Build a DiscreteSystem from a continuous Lagrangian by midpoint rule.

    lagrangian(q, qdot) is a scalar; the discrete Lagrangian is
    h * L((qa+qb)/2, (qb-qa)/h).  An optional continuous force force(q, qdot, u)
    returning an n-covector is split evenly onto the interval ends,
    f_minus = f_plus = (h/2) * force(midpoint, rate, u).  All slot derivatives
    come from central finite differences, so this constructor is meant for
    prototyping and cross-checks; production models supply analytic callbacks.
    """

    def ld(qa, qb):
        qa = np.atleast_1d(np.asarray(qa, dtype=float))
        qb = np.atleast_1d(np.asarray(qb, dtype=float))
        return h * lagrangian(0.5 * (qa + qb), (qb - qa) / h)

    def d1_ld(qa, qb):
        return _fd_grad(lambda z: ld(z, qb), qa)

    def d2_ld(qa, qb):
        return _fd_grad(lambda z: ld(qa, z), qb)

    def d11_ld(qa, qb):
        return _fd_jac_of_grad(lambda z: d1_ld(z, qb), qa)

    def d12_ld(qa, qb):
        return _fd_jac_of_grad(lambda z: d1_ld(qa, z), qb)

    def d21_ld(qa, qb):
        return _fd_jac_of_grad(lambda z: d2_ld(z, qb), qa)

    def d22_ld(qa, qb):
        return _fd_jac_of_grad(lambda z: d2_ld(qa, z), qb)

    if force is None:
        zero_vec = lambda qa, qb, u: np.zeros(dim_q)
        zero_qjac = lambda qa, qb, u: np.zeros((dim_q, dim_q))
        zero_ujac = lambda qa, qb, u: np.zeros((dim_q, dim_u))
        f_minus = f_plus = zero_vec
        d1_f_minus = d2_f_minus = d1_f_plus = d2_f_plus = zero_qjac
        d3_f_minus = d3_f_plus = zero_ujac
    else:
        def half_force(qa, qb, u):
            qa = np.atleast_1d(np.asarray(qa, dtype=float))
            qb = np.atleast_1d(np.asarray(qb, dtype=float))
            u = np.atleast_1d(np.asarray(u, dtype=float))
            return 0.5 * h * np.atleast_1d(
                np.asarray(force(0.5 * (qa + qb), (qb - qa) / h, u), dtype=float))

        f_minus = f_plus = half_force

        def _jac_wrt(which):
            def jac(qa, qb, u):
                if which == 0:
                    g = lambda z: half_force(z, qb, u)
                    x = qa
                elif which == 1:
                    g = lambda z: half_force(qa, z, u)
                    x = qb
                else:
                    g = lambda z: half_force(qa, qb, z)
                    x = u
                return _fd_jac_of_grad(g, x, eps=1e-6)
            return jac

        d1_f_minus = d1_f_plus = _jac_wrt(0)
        d2_f_minus = d2_f_plus = _jac_wrt(1)
        d3_f_minus = d3_f_plus = _jac_wrt(2)

    def continuous_legendre(q, qdot):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        return _fd_grad(lambda v: lagrangian(q, v), qdot)

    return DiscreteSystem(
        dim_q=dim_q, dim_u=dim_u, h=h,
        ld=ld, d1_ld=d1_ld, d2_ld=d2_ld,
        d11_ld=d11_ld, d12_ld=d12_ld, d21_ld=d21_ld, d22_ld=d22_ld,
        f_minus=f_minus, f_plus=f_plus,
        d1_f_minus=d1_f_minus, d2_f_minus=d2_f_minus,
        d1_f_plus=d1_f_plus, d2_f_plus=d2_f_plus,
        d3_f_minus=d3_f_minus, d3_f_plus=d3_f_plus,
        continuous_legendre=continuous_legendre,
    )


def del_residual(sys, q_prev, q_curr, q_next, u_prev, u_curr):
    """Forced discrete Euler-Lagrange residual at the middle node."""
    return (sys.d1_ld(q_curr, q_next) + sys.d2_ld(q_prev, q_curr)
            + sys.f_minus(q_curr, q_next, u_curr)
            + sys.f_plus(q_prev, q_curr, u_prev))


def legendre_minus(sys, q_a, q_b, u):
    """Discrete momentum at the left end of the interval (q_a, q_b)."""
    return -sys.d1_ld(q_a, q_b) - sys.f_minus(q_a, q_b, u)


def legendre_plus(sys, q_a, q_b, u):
    """Discrete momentum at the right end of the interval (q_a, q_b)."""
    return sys.d2_ld(q_a, q_b) + sys.f_plus(q_a, q_b, u)


def first_step(sys, q0, p0, u0, settings=DEFAULT_NEWTON):
    """Solve the initialization equation 0 = p0 + D1Ld(q0, q1) + f_minus for q1."""
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))

    def residual(q1):
        return p0 + sys.d1_ld(q0, q1) + sys.f_minus(q0, q1, u0)

    def jacobian(q1):
        return sys.d12_ld(q0, q1) + sys.d2_f_minus(q0, q1, u0)

    return newton_solve(residual, jacobian, q0, settings)


def step(sys, q_prev, q_curr, u_prev, u_curr, settings=DEFAULT_NEWTON, q_guess=None):
    """Advance one node: solve the DEL residual for q_next.

    The default predictor is the linear extrapolation 2 q_curr - q_prev.
    """
    q_prev = np.atleast_1d(np.asarray(q_prev, dtype=float))
    q_curr = np.atleast_1d(np.asarray(q_curr, dtype=float))
    if q_guess is None:
        q_guess = 2.0 * q_curr - q_prev

    def residual(q_next):
        return del_residual(sys, q_prev, q_curr, q_next, u_prev, u_curr)

    def jacobian(q_next):
        return sys.d12_ld(q_curr, q_next) + sys.d2_f_minus(q_curr, q_next, u_curr)

    return newton_solve(residual, jacobian, q_guess, settings)


def integrate(sys, q0, p0, controls, settings=DEFAULT_NEWTON):
    """Run the forced variational integrator over len(controls) intervals.

    Returns a Trajectory with q on nodes 0..N and the terminal discrete
    momentum p_N attached.
    """
    u = np.asarray(controls, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    n_steps = u.shape[0]
    if n_steps < 1:
        raise ValueError("need at least one control interval")
    q = np.empty((n_steps + 1, sys.dim_q))
    q[0] = np.atleast_1d(np.asarray(q0, dtype=float))
    q[1] = first_step(sys, q[0], p0, u[0], settings)
    for n in range(1, n_steps):
        q[n + 1] = step(sys, q[n - 1], q[n], u[n - 1], u[n], settings)
    p_end = legendre_plus(sys, q[-2], q[-1], u[-1])
    return Trajectory(q=q, u=u, h=sys.h, p_N=p_end)


def momentum_mismatch(sys, traj):
    """Max over interior nodes of |p_plus(node) - p_minus(node)|.

    For an exactly solved trajectory both Legendre transforms agree at every
    interior node up to the Newton tolerance; this is a cheap integrity check.
    """
    q, u = traj.q, traj.u
    worst = 0.0
    for n in range(1, len(q) - 1):
        pp = legendre_plus(sys, q[n - 1], q[n], u[n - 1])
        pm = legendre_minus(sys, q[n], q[n + 1], u[n])
        worst = max(worst, float(np.max(np.abs(pp - pm))))
    return worst
