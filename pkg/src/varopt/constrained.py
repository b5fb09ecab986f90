"""Holonomically constrained variational integration in null-space form.

The ambient system lives in R^n with m holonomic constraints g(q) = 0.  Two
ingredients remove the constraint forces and the Lagrange multipliers:

 * a null-space map P(q) of shape (n, n-m) whose columns span the tangent
   space of the constraint manifold, used to project the ambient discrete
   Euler-Lagrange residual, and
 * a nodal reparametrization q_next = Fd(q_curr, v) with v in R^(n-m), which
   keeps every iterate exactly on the manifold.

Controls enter through an input map: f_minus(qa, qb, u) = (h/2) B'(qa) tau(u)
and f_plus(qa, qb, u) = (h/2) B'(qb) tau(u), both supplied by the ambient
DiscreteSystem callbacks of the model.
"""

import dataclasses

import numpy as np

from varopt.numerics import DEFAULT_NEWTON, SingularJacobian, newton_solve
from varopt.discrete import DiscreteSystem


class ConstraintViolation(RuntimeError):
    """A trajectory node left the constraint manifold beyond tolerance."""


class InconsistentInitialData(ValueError):
    """Initial configuration does not satisfy the holonomic constraints."""


CONSTRAINT_TOL = 1e-10


@dataclasses.dataclass
class ConstrainedSystem:
    """Ambient forced system plus the constraint geometry.

    ambient       the underlying DiscreteSystem in R^n
    n_constraints m
    g(q)          constraint values, shape (m,)
    G(q)          constraint Jacobian, shape (m, n)
    P(q)          null-space matrix, shape (n, n-m)
    DP(q, w)      derivative of P(q)' w in q, shape (n-m, n)
    Bt(q)         transposed input map, shape (n, dim_u)
    tau(u)        generalized control forces, shape (dim_u,)
    Fd(q, v)      nodal reparametrization, shape (n,)
    D2Fd(q, v)    its derivative in v, shape (n, n-m)
    """

    ambient: DiscreteSystem
    n_constraints: int
    g: callable
    G: callable
    P: callable
    DP: callable
    Bt: callable
    tau: callable
    Fd: callable
    D2Fd: callable


@dataclasses.dataclass
class ConstrainedTrajectory:
    """Nodes q (0..N), local increments v (one per step, 1..N), controls u.

    p_N is the ambient discrete momentum of the final interval; its component
    along the constraint normal carries an O(h) force residue, which is
    harmless for rest targets.
    """

    q: np.ndarray
    v: np.ndarray
    u: np.ndarray
    h: float
    lam: np.ndarray = None
    p_N: np.ndarray = None


def _ambient_bracket(csys, q_prev, q_curr, q_next, u_prev, u_curr):
    sys = csys.ambient
    return (sys.d1_ld(q_curr, q_next) + sys.d2_ld(q_prev, q_curr)
            + sys.f_minus(q_curr, q_next, u_curr)
            + sys.f_plus(q_prev, q_curr, u_prev))


def constrained_del_residual(csys, q_prev, q_curr, v_next, u_prev, u_curr):
    """Projected DEL residual in R^(n-m) with q_next = Fd(q_curr, v_next)."""
    q_next = csys.Fd(q_curr, v_next)
    bracket = _ambient_bracket(csys, q_prev, q_curr, q_next, u_prev, u_curr)
    return csys.P(q_curr).T @ bracket


def _check_on_manifold(csys, q, where):
    gq = np.atleast_1d(csys.g(q))
    if np.max(np.abs(gq)) > CONSTRAINT_TOL:
        raise ConstraintViolation(
            "%s: constraint residual %.3e exceeds %.1e" % (where, np.max(np.abs(gq)), CONSTRAINT_TOL))


def constrained_step(csys, q_prev, q_curr, u_prev, u_curr,
                     settings=DEFAULT_NEWTON, v_guess=None):
    """Solve the projected residual for the local increment; returns (v_next, q_next)."""
    sys = csys.ambient
    q_prev = np.atleast_1d(np.asarray(q_prev, dtype=float))
    q_curr = np.atleast_1d(np.asarray(q_curr, dtype=float))
    n_red = sys.dim_q - csys.n_constraints
    if v_guess is None:
        v_guess = np.zeros(n_red)

    pt = csys.P(q_curr).T

    def residual(v):
        return constrained_del_residual(csys, q_prev, q_curr, v, u_prev, u_curr)

    def jacobian(v):
        q_next = csys.Fd(q_curr, v)
        inner = sys.d12_ld(q_curr, q_next) + sys.d2_f_minus(q_curr, q_next, u_curr)
        return pt @ inner @ csys.D2Fd(q_curr, v)

    v_next = newton_solve(residual, jacobian, v_guess, settings)
    q_next = csys.Fd(q_curr, v_next)
    _check_on_manifold(csys, q_next, "constrained_step")
    return v_next, q_next


def constrained_first_step(csys, q0, p0, u0, settings=DEFAULT_NEWTON):
    """Initialization: project the momentum equation and solve for (v_1, q_1).

    Raises InconsistentInitialData when q0 is off the manifold.
    """
    sys = csys.ambient
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    g0 = np.atleast_1d(csys.g(q0))
    if np.max(np.abs(g0)) > CONSTRAINT_TOL:
        raise InconsistentInitialData(
            "initial configuration violates the constraints by %.3e" % np.max(np.abs(g0)))

    pt = csys.P(q0).T

    def residual(v):
        q1 = csys.Fd(q0, v)
        return pt @ (p0 + sys.d1_ld(q0, q1) + sys.f_minus(q0, q1, u0))

    def jacobian(v):
        q1 = csys.Fd(q0, v)
        inner = sys.d12_ld(q0, q1) + sys.d2_f_minus(q0, q1, u0)
        return pt @ inner @ csys.D2Fd(q0, v)

    n_red = sys.dim_q - csys.n_constraints
    v1 = newton_solve(residual, jacobian, np.zeros(n_red), settings)
    q1 = csys.Fd(q0, v1)
    _check_on_manifold(csys, q1, "constrained_first_step")
    return v1, q1


def integrate_constrained(csys, q0, p0, controls, settings=DEFAULT_NEWTON):
    """Run the constrained integrator over len(controls) intervals."""
    u = np.asarray(controls, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    n_steps = u.shape[0]
    n = csys.ambient.dim_q
    q = np.empty((n_steps + 1, n))
    v = np.empty((n_steps, n - csys.n_constraints))
    q[0] = np.atleast_1d(np.asarray(q0, dtype=float))
    v[0], q[1] = constrained_first_step(csys, q[0], p0, u[0], settings)
    for k in range(1, n_steps):
        v[k], q[k + 1] = constrained_step(
            csys, q[k - 1], q[k], u[k - 1], u[k], settings, v_guess=v[k - 1].copy())
    sys = csys.ambient
    p_end = sys.d2_ld(q[-2], q[-1]) + sys.f_plus(q[-2], q[-1], u[-1])
    return ConstrainedTrajectory(q=q, v=v, u=u, h=csys.ambient.h, p_N=p_end)


def constrained_objective(traj, obj):
    """Terminal configuration + terminal ambient momentum + control effort."""
    dq = traj.q[-1] - obj.q_target
    value = 0.5 * dq @ obj.s_q @ dq
    if traj.p_N is not None and np.any(obj.s_p):
        dp = traj.p_N - obj.p_target
        value += 0.5 * dp @ obj.s_p @ dp
    for u in traj.u:
        value += 0.5 * u @ obj.r @ u
    return float(value)


def _solve_t(mat, rhs):
    try:
        return np.linalg.solve(mat.T, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(str(exc)) from exc


def constrained_backward_sweep(csys, traj, obj):
    """Adjoint values lam_0..lam_{N-1} in R^(n-m) for the projected scheme.

    The reparametrization makes the unknown of residual k-1 the increment
    v_k, so every linearization is chained through N_k = D2Fd(q_{k-1}, v_k).
    A terminal-momentum weight S_p acts on the ambient end momentum
    p_N = D2Ld(q_{N-1}, q_N) + f_plus(q_{N-1}, q_N, u_{N-1}); its q-derivatives
    feed the last two adjoint equations through the same tangent bases.
    """
    sys = csys.ambient
    q, v, u = traj.q, traj.v, traj.u
    n_steps = len(u)
    if n_steps < 2:
        raise ValueError("backward sweep needs at least two intervals")

    def a_mat(k):
        # derivative of residual k in the next node q_{k+1}
        return csys.P(q[k]).T @ (sys.d12_ld(q[k], q[k + 1])
                                 + sys.d2_f_minus(q[k], q[k + 1], u[k]))

    def b_mat(k):
        # derivative of residual k in its own node q_k (1 <= k <= N-1)
        bracket = _ambient_bracket(csys, q[k - 1], q[k], q[k + 1], u[k - 1], u[k])
        inner = (sys.d11_ld(q[k], q[k + 1]) + sys.d1_f_minus(q[k], q[k + 1], u[k])
                 + sys.d22_ld(q[k - 1], q[k]) + sys.d2_f_plus(q[k - 1], q[k], u[k - 1]))
        return csys.DP(q[k], bracket) + csys.P(q[k]).T @ inner

    def c_mat(k):
        # derivative of residual k in the previous node q_{k-1} (k >= 2)
        return csys.P(q[k]).T @ (sys.d21_ld(q[k - 1], q[k])
                                 + sys.d1_f_plus(q[k - 1], q[k], u[k - 1]))

    n_red = sys.dim_q - csys.n_constraints
    lam = np.empty((n_steps, n_red))
    dq = q[-1] - obj.q_target
    p_end = sys.d2_ld(q[-2], q[-1]) + sys.f_plus(q[-2], q[-1], u[-1])
    sp_dp = obj.s_p @ (p_end - obj.p_target)

    n_last = csys.D2Fd(q[n_steps - 1], v[n_steps - 1])
    dp_own = sys.d22_ld(q[-2], q[-1]) + sys.d2_f_plus(q[-2], q[-1], u[-1])
    lam[n_steps - 1] = _solve_t(
        a_mat(n_steps - 1) @ n_last,
        -(n_last.T @ (obj.s_q @ dq + dp_own.T @ sp_dp)))
    for j in range(n_steps - 1, 0, -1):
        n_j = csys.D2Fd(q[j - 1], v[j - 1])
        rhs = -(n_j.T @ (b_mat(j).T @ lam[j]))
        if j + 1 <= n_steps - 1:
            rhs -= n_j.T @ (c_mat(j + 1).T @ lam[j + 1])
        if j == n_steps - 1:
            # p_N also depends on the penultimate node
            dp_prev = sys.d21_ld(q[-2], q[-1]) + sys.d1_f_plus(q[-2], q[-1], u[-1])
            rhs -= n_j.T @ (dp_prev.T @ sp_dp)
        lam[j - 1] = _solve_t(a_mat(j - 1) @ n_j, rhs)
    return lam


def constrained_control_gradient(csys, traj, lam, obj):
    """Objective gradient in the controls for the projected scheme."""
    sys = csys.ambient
    q, u = traj.q, traj.u
    n_steps = len(u)
    grad = np.empty((n_steps, sys.dim_u))
    for n in range(n_steps):
        left = csys.P(q[n]).T @ sys.d3_f_minus(q[n], q[n + 1], u[n])
        grad[n] = obj.r @ u[n] + left.T @ lam[n]
        if n + 1 <= n_steps - 1:
            right = csys.P(q[n + 1]).T @ sys.d3_f_plus(q[n], q[n + 1], u[n])
            grad[n] += right.T @ lam[n + 1]
    if np.any(obj.s_p):
        # the ambient end momentum depends on u_{N-1} directly
        p_end = sys.d2_ld(q[-2], q[-1]) + sys.f_plus(q[-2], q[-1], u[-1])
        sp_dp = obj.s_p @ (p_end - obj.p_target)
        grad[-1] += sys.d3_f_plus(q[-2], q[-1], u[-1]).T @ sp_dp
    return grad


def reduced_gradient_constrained(csys, q0, p0, controls, obj, settings=None):
    """Forward + sweep + gradient, the shooting code path for constrained runs."""
    traj = integrate_constrained(csys, q0, p0, controls, settings or DEFAULT_NEWTON)
    lam = constrained_backward_sweep(csys, traj, obj)
    traj.lam = lam
    grad = constrained_control_gradient(csys, traj, lam, obj)
    return constrained_objective(traj, obj), grad, traj
