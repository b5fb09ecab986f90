"""Planar pendulum in two formulations: minimal angle and constrained point mass.

Conventions: the bob sits at q(phi) = l (sin phi, -cos phi), so
phi = atan2(x, -y), and the potential is V(phi) = m g l cos(phi)
(equivalently -m g y in ambient coordinates).  phi = 0 is thus the unstable
equilibrium and phi = pi the stable one; the benchmark control task moves the
bob from rest at phi = 0 to rest at phi = pi.  A positive control torque u
increases phi.

The constrained formulation drives the torque through the input map
B'(q) = [-y, x] / (2 l^2); B'(q) projected through the null-space map gives
exactly half the identity, so matching the minimal model's physics under a
shared control signal requires feeding the constrained model twice the
control values.
"""

import dataclasses

import numpy as np

from varopt.adjoint import OcpObjective, reduced_gradient
from varopt.constrained import ConstrainedSystem, reduced_gradient_constrained
from varopt.discrete import DiscreteSystem


@dataclasses.dataclass(frozen=True)
class PendulumParams:
    m: float = 1.0
    l: float = 1.0
    grav: float = 9.81
    h: float = 1e-3
    T: float = 2.0

    @property
    def n_steps(self):
        n = int(round(self.T / self.h))
        if abs(n * self.h - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError("horizon T is not an integer multiple of h")
        return n


def pendulum_minimal(params):
    """Forced discrete pendulum in the single angle coordinate."""
    m, l, g, h = params.m, params.l, params.grav, params.h
    ml2 = m * l * l
    mgl = m * g * l

    def ld(qa, qb):
        d = qb[0] - qa[0]
        return ml2 * d * d / (2.0 * h) - h * mgl * np.cos(0.5 * (qa[0] + qb[0]))

    def d1_ld(qa, qb):
        d = qb[0] - qa[0]
        return np.array([-ml2 * d / h + 0.5 * h * mgl * np.sin(0.5 * (qa[0] + qb[0]))])

    def d2_ld(qa, qb):
        d = qb[0] - qa[0]
        return np.array([ml2 * d / h + 0.5 * h * mgl * np.sin(0.5 * (qa[0] + qb[0]))])

    def _curv(qa, qb):
        return 0.25 * h * mgl * np.cos(0.5 * (qa[0] + qb[0]))

    def d11_ld(qa, qb):
        return np.array([[ml2 / h + _curv(qa, qb)]])

    def d12_ld(qa, qb):
        return np.array([[-ml2 / h + _curv(qa, qb)]])

    d21_ld = d12_ld
    d22_ld = d11_ld

    half_h = 0.5 * h

    def f_half(qa, qb, u):
        return np.array([half_h * u[0]])

    zero_mat = lambda qa, qb, u: np.zeros((1, 1))

    def d3_f(qa, qb, u):
        return np.array([[half_h]])

    def continuous_legendre(q, qdot):
        return np.array([ml2 * qdot[0]])

    return DiscreteSystem(
        dim_q=1, dim_u=1, h=h,
        ld=ld, d1_ld=d1_ld, d2_ld=d2_ld,
        d11_ld=d11_ld, d12_ld=d12_ld, d21_ld=d21_ld, d22_ld=d22_ld,
        f_minus=f_half, f_plus=f_half,
        d1_f_minus=zero_mat, d2_f_minus=zero_mat,
        d1_f_plus=zero_mat, d2_f_plus=zero_mat,
        d3_f_minus=d3_f, d3_f_plus=d3_f,
        continuous_legendre=continuous_legendre,
    )


def pendulum_constrained(params):
    """Pendulum as a point mass on a circle, null-space/reparametrized form."""
    m, l, g, h = params.m, params.l, params.grav, params.h
    l2 = l * l

    def ld(qa, qb):
        d = qb - qa
        return m * (d @ d) / (2.0 * h) + 0.5 * h * m * g * (qa[1] + qb[1])

    grav_vec = np.array([0.0, 0.5 * h * m * g])

    def d1_ld(qa, qb):
        return -m * (qb - qa) / h + grav_vec

    def d2_ld(qa, qb):
        return m * (qb - qa) / h + grav_vec

    eye_over_h = (m / h) * np.eye(2)

    d11_ld = lambda qa, qb: eye_over_h
    d22_ld = lambda qa, qb: eye_over_h
    d12_ld = lambda qa, qb: -eye_over_h
    d21_ld = lambda qa, qb: -eye_over_h

    def bt(q):
        return np.array([[-q[1]], [q[0]]]) / (2.0 * l2)

    spin = np.array([[0.0, -1.0], [1.0, 0.0]]) / (2.0 * l2)

    def f_minus(qa, qb, u):
        return 0.5 * h * (bt(qa) @ u)

    def f_plus(qa, qb, u):
        return 0.5 * h * (bt(qb) @ u)

    def d1_f_minus(qa, qb, u):
        return 0.5 * h * u[0] * spin

    d2_f_plus = d1_f_minus
    zero22 = lambda qa, qb, u: np.zeros((2, 2))

    def d3_f_minus(qa, qb, u):
        return 0.5 * h * bt(qa)

    def d3_f_plus(qa, qb, u):
        return 0.5 * h * bt(qb)

    def continuous_legendre(q, qdot):
        return m * np.asarray(qdot, dtype=float)

    ambient = DiscreteSystem(
        dim_q=2, dim_u=1, h=h,
        ld=ld, d1_ld=d1_ld, d2_ld=d2_ld,
        d11_ld=d11_ld, d12_ld=d12_ld, d21_ld=d21_ld, d22_ld=d22_ld,
        f_minus=f_minus, f_plus=f_plus,
        d1_f_minus=d1_f_minus, d2_f_minus=zero22,
        d1_f_plus=zero22, d2_f_plus=d2_f_plus,
        d3_f_minus=d3_f_minus, d3_f_plus=d3_f_plus,
        continuous_legendre=continuous_legendre,
    )

    def g_fun(q):
        return np.array([0.5 * (q @ q - l2)])

    def g_jac(q):
        return np.array([[q[0], q[1]]])

    def null_space(q):
        return np.array([[-q[1]], [q[0]]])

    def dp_contracted(q, w):
        # derivative of P(q)' w = -y w0 + x w1 in q
        return np.array([[w[1], -w[0]]])

    def fd_map(q, v):
        c, s = np.cos(v[0]), np.sin(v[0])
        return np.array([c * q[0] - s * q[1], s * q[0] + c * q[1]])

    def d2_fd(q, v):
        c, s = np.cos(v[0]), np.sin(v[0])
        return np.array([[-s * q[0] - c * q[1]], [c * q[0] - s * q[1]]])

    return ConstrainedSystem(
        ambient=ambient, n_constraints=1,
        g=g_fun, G=g_jac, P=null_space, DP=dp_contracted,
        Bt=bt, tau=lambda u: np.asarray(u, dtype=float),
        Fd=fd_map, D2Fd=d2_fd,
    )


def pendulum_objective(params, constrained=False):
    """Default swing-maneuver objective: heavy terminal-angle weight, light effort.

    Both variants penalize the terminal momentum; the constrained one acts on
    the ambient end momentum attached by the integrator.
    """
    r_weight = 1e-5 * params.h
    if constrained:
        target = params.l * np.array([np.sin(np.pi), -np.cos(np.pi)])
        return OcpObjective(s_q=1e3 * np.eye(2), s_p=1e-2 * np.eye(2),
                            r=[[r_weight]], q_target=target, p_target=np.zeros(2))
    return OcpObjective(s_q=[[1e3]], s_p=[[1e-2]], r=[[r_weight]],
                        q_target=[np.pi], p_target=[0.0])


def initial_state(params, constrained=False):
    """Rest state at phi = 0 (zero momentum)."""
    if constrained:
        return np.array([0.0, -params.l]), np.zeros(2)
    return np.array([0.0]), np.array([0.0])


def angle_history(traj, params=None):
    """Angle series phi_0..phi_N for either pendulum formulation.

    Minimal trajectories carry the angle directly.  Constrained ones
    accumulate the per-step rotation increments on top of the initial angle
    recovered from the ambient configuration.
    """
    if hasattr(traj, "v"):
        phi0 = np.arctan2(traj.q[0][0], -traj.q[0][1])
        return np.concatenate(([phi0], phi0 + np.cumsum(traj.v[:, 0])))
    return traj.q[:, 0]


def pendulum_energies(traj, params):
    """Per-interval kinetic, potential and total energy of a pendulum run.

    Kinetic energy uses the midpoint velocity of each interval, potential is
    m g l cos(phi) at the interval midpoint angle; both series have length N.
    """
    phi = angle_history(traj, params)
    m, l, g, h = params.m, params.l, params.grav, traj.h
    rates = np.diff(phi) / h
    mids = 0.5 * (phi[:-1] + phi[1:])
    kinetic = 0.5 * m * l * l * rates ** 2
    potential = m * g * l * np.cos(mids)
    return kinetic, potential, kinetic + potential


def minimal_ocp_evaluate(params, obj=None, settings=None):
    """Shooting callback for the minimal pendulum: u -> (J, grad, trajectory)."""
    sys = pendulum_minimal(params)
    q0, p0 = initial_state(params)

    def evaluate(u, objective_override=None):
        active = objective_override if objective_override is not None else obj
        return reduced_gradient(sys, q0, p0, u, active, settings)

    return evaluate


def constrained_ocp_evaluate(params, obj=None, settings=None):
    """Shooting callback for the constrained pendulum."""
    csys = pendulum_constrained(params)
    q0, p0 = initial_state(params, constrained=True)

    def evaluate(u, objective_override=None):
        active = objective_override if objective_override is not None else obj
        return reduced_gradient_constrained(csys, q0, p0, u, active, settings)

    return evaluate
