"""Quaternion and unit dual quaternion kernels for rigid-motion fields.

Conventions used throughout the package:

 * quaternions are plain float arrays (w, x, y, z), scalar first;
 * dual quaternions are arrays of shape (..., 8), real part before dual part;
 * a rigid placement is q~ = q + (1/2) x^ (x) q eps with q the unit rotation
   quaternion, x^ the pure translation quaternion, and (x) the quaternion
   product, so the translation is recovered as 2 q_eps (x) conj(q_r);
 * tangent increments xi in R^6 are ordered (rotation, translation) and act
   on the right: q~ <- q~ (x) exp((xi_rot + xi_trans eps) / 2).

All matrix helpers broadcast over leading axes; the beam assembly relies on
that to process whole rows of nodes with single einsum calls.
"""

import numpy as np


class DegenerateRealPart(ValueError):
    """Dual quaternion with vanishing real part has no seminorm."""


class NonUnitAxis(ValueError):
    """Screw axis must be a unit vector."""


def _hamilton_tensor():
    t = np.zeros((4, 4, 4))
    # (a (x) b)_i = t[i, j, k] a_j b_k
    table = {
        (0, 0): (0, 1.0), (0, 1): (1, 1.0), (0, 2): (2, 1.0), (0, 3): (3, 1.0),
        (1, 0): (1, 1.0), (1, 1): (0, -1.0), (1, 2): (3, 1.0), (1, 3): (2, -1.0),
        (2, 0): (2, 1.0), (2, 1): (3, -1.0), (2, 2): (0, -1.0), (2, 3): (1, 1.0),
        (3, 0): (3, 1.0), (3, 1): (2, 1.0), (3, 2): (1, -1.0), (3, 3): (0, -1.0),
    }
    for (j, k), (i, sign) in table.items():
        t[i, j, k] = sign
    return t


HAMILTON = _hamilton_tensor()
K4 = np.diag([1.0, -1.0, -1.0, -1.0])
K8 = np.block([[K4, np.zeros((4, 4))], [np.zeros((4, 4)), K4]])

# embeds (rotation, translation) tangent vectors into the pure slots
EMBED6 = np.zeros((8, 6))
EMBED6[1:4, 0:3] = np.eye(3)
EMBED6[5:8, 3:6] = np.eye(3)

IDENTITY8 = np.array([1.0, 0, 0, 0, 0, 0, 0, 0])


def q_mul(a, b):
    """Hamilton product of quaternions, broadcasting over leading axes."""
    return np.einsum("ijk,...j,...k->...i", HAMILTON, a, b)


def q_conj(a):
    a = np.asarray(a, dtype=float)
    return a * np.array([1.0, -1.0, -1.0, -1.0])


def dq_mul(a, b):
    """Dual quaternion product (dual unit squares to zero)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    real = q_mul(a[..., :4], b[..., :4])
    dual = q_mul(a[..., :4], b[..., 4:]) + q_mul(a[..., 4:], b[..., :4])
    return np.concatenate([real, dual], axis=-1)


def dq_conj(a):
    a = np.asarray(a, dtype=float)
    return a * np.array([1.0, -1, -1, -1, 1.0, -1, -1, -1])


def dq_seminorm(a):
    """Norm of the real part plus the dual correction <q_r, q_eps>/|q_r|."""
    a = np.asarray(a, dtype=float)
    nr = np.linalg.norm(a[..., :4], axis=-1)
    if np.any(nr == 0.0):
        raise DegenerateRealPart("real part of the dual quaternion vanishes")
    return nr + np.sum(a[..., :4] * a[..., 4:], axis=-1) / nr


def unity_residual(a):
    """The two scalar unit-placement constraints (|q_r|^2 - 1, <q_r, q_eps>)."""
    a = np.asarray(a, dtype=float)
    c1 = np.sum(a[..., :4] ** 2, axis=-1) - 1.0
    c2 = np.sum(a[..., :4] * a[..., 4:], axis=-1)
    return c1, c2


def translation_of(a):
    """Cartesian translation encoded in a unit placement: 2 q_eps (x) conj(q_r)."""
    a = np.asarray(a, dtype=float)
    return 2.0 * q_mul(a[..., 4:], q_conj(a[..., :4]))[..., 1:]


def rotation_angle(q):
    """Principal rotation angle of a unit quaternion."""
    q = np.asarray(q, dtype=float)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), q[..., 0])


def from_screw(theta, axis, translation):
    """Unit placement that rotates by theta about the unit axis and translates.

    Raises NonUnitAxis when the axis is not normalized.
    """
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise NonUnitAxis("axis must have unit length")
    q_r = np.concatenate([[np.cos(0.5 * theta)], np.sin(0.5 * theta) * axis])
    t_pure = np.concatenate([[0.0], np.asarray(translation, dtype=float)])
    q_eps = 0.5 * q_mul(t_pure, q_r)
    return np.concatenate([q_r, q_eps])


def _exp_coefficients(theta2):
    """cos(t/2), sin(t/2)/t and g = (s2 - c/2)/t^2 with series fallbacks."""
    theta2 = np.asarray(theta2, dtype=float)
    small = theta2 < 1e-6
    safe = np.where(small, 1.0, theta2)
    theta = np.sqrt(safe)
    c = np.cos(0.5 * np.sqrt(theta2))
    s2 = np.where(small,
                  0.5 - theta2 / 48.0 + theta2 ** 2 / 3840.0,
                  np.sin(0.5 * theta) / theta)
    g = np.where(small,
                 1.0 / 24.0 - theta2 / 960.0 + theta2 ** 2 / 107520.0,
                 (s2 - 0.5 * c) / safe)
    dg = np.where(small,
                  -1.0 / 960.0 + theta2 / 53760.0,
                  (s2 / 8.0 - 1.5 * g) / safe)
    return c, s2, g, dg


def dq_exp_tangent(xi):
    """Exponential of the scaled tangent vector: exp((omega^ + v^ eps) / 2).

    Returns a unit placement for any xi = (omega, v) in R^6; the rotation
    part turns by |omega| about omega.
    """
    xi = np.asarray(xi, dtype=float)
    omega = xi[..., :3]
    v = xi[..., 3:]
    theta2 = np.sum(omega ** 2, axis=-1)
    c, s2, g, _ = _exp_coefficients(theta2)
    wv = np.sum(omega * v, axis=-1)
    out = np.empty(xi.shape[:-1] + (8,))
    out[..., 0] = c
    out[..., 1:4] = s2[..., None] * omega
    out[..., 4] = -0.5 * wv * s2
    out[..., 5:8] = s2[..., None] * v - (g * wv)[..., None] * omega
    return out


def dq_exp_jacobian(xi):
    """Derivative of dq_exp_tangent in xi, shape (..., 8, 6)."""
    xi = np.asarray(xi, dtype=float)
    omega = xi[..., :3]
    v = xi[..., 3:]
    theta2 = np.sum(omega ** 2, axis=-1)
    c, s2, g, dg = _exp_coefficients(theta2)
    wv = np.sum(omega * v, axis=-1)
    eye = np.eye(3)
    jac = np.zeros(xi.shape[:-1] + (8, 6))
    s2e = s2[..., None, None]
    ge = g[..., None, None]
    oo = omega[..., :, None] * omega[..., None, :]
    ov = omega[..., :, None] * v[..., None, :]
    vo = v[..., :, None] * omega[..., None, :]
    jac[..., 0, 0:3] = -0.5 * s2[..., None] * omega
    jac[..., 1:4, 0:3] = s2e * eye - ge * oo
    jac[..., 4, 0:3] = -0.5 * (s2[..., None] * v - (g * wv)[..., None] * omega)
    jac[..., 4, 3:6] = -0.5 * s2[..., None] * omega
    jac[..., 5:8, 0:3] = (-ge * (vo + ov)
                          - (g * wv)[..., None, None] * eye
                          - (2.0 * dg * wv)[..., None, None] * oo)
    jac[..., 5:8, 3:6] = s2e * eye - ge * oo
    return jac


def lmat4(a):
    """Left-multiplication matrix: lmat4(a) @ b = a (x) b."""
    return np.einsum("ijk,...j->...ik", HAMILTON, np.asarray(a, dtype=float))


def rmat4(b):
    """Right-multiplication matrix: rmat4(b) @ a = a (x) b."""
    return np.einsum("ijk,...k->...ij", HAMILTON, np.asarray(b, dtype=float))


def _block8(tl, bl, br):
    out = np.zeros(tl.shape[:-2] + (8, 8))
    out[..., 0:4, 0:4] = tl
    out[..., 4:8, 0:4] = bl
    out[..., 4:8, 4:8] = br
    return out


def lmat8(a):
    """Left dual product matrix: lmat8(a) @ b = a (x) b on 8-vectors."""
    a = np.asarray(a, dtype=float)
    lr = lmat4(a[..., :4])
    return _block8(lr, lmat4(a[..., 4:]), lr)


def rmat8(b):
    """Right dual product matrix: rmat8(b) @ a = a (x) b on 8-vectors."""
    b = np.asarray(b, dtype=float)
    rr = rmat4(b[..., :4])
    return _block8(rr, rmat4(b[..., 4:]), rr)


def cmat8(a):
    """Conjugated left product: cmat8(a) @ b = conj(a) (x) b."""
    return lmat8(np.asarray(a, dtype=float) * np.array([1.0, -1, -1, -1, 1.0, -1, -1, -1]))


def left_mul_matrix(a):
    """Public alias of the 8x8 left-multiplication matrix."""
    return lmat8(a)


def zmat8(u):
    """Pairing matrix with lmat8(a).T @ u = zmat8(u) @ a for all a."""
    u = np.asarray(u, dtype=float)
    zr = rmat4(u[..., :4]) @ K4
    ze = rmat4(u[..., 4:]) @ K4
    out = np.zeros(u.shape[:-1] + (8, 8))
    out[..., 0:4, 0:4] = zr
    out[..., 0:4, 4:8] = ze
    out[..., 4:8, 0:4] = ze
    return out


def xmat8(w):
    """Derivative matrix of d -> rmat8(d).T @ w, i.e. xmat8(w) = d(rmat8(d).T w)/dd."""
    w = np.asarray(w, dtype=float)
    xr = lmat4(w[..., :4]) @ K4
    xe = lmat4(w[..., 4:]) @ K4
    out = np.zeros(w.shape[:-1] + (8, 8))
    out[..., 0:4, 0:4] = xr
    out[..., 0:4, 4:8] = xe
    out[..., 4:8, 0:4] = xe
    return out


def quat_tangent_matrix(q):
    """Half left-multiplication by q restricted to pure inputs, shape (..., 4, 3)."""
    return 0.5 * lmat4(q)[..., :, 1:]


def beam_null_space(a):
    """Tangent basis of the unit-placement constraints at a, shape (..., 8, 6).

    Columns are (1/2) a (x) e_i for the three pure rotation slots followed by
    the three pure translation slots; the unity constraint Jacobian
    annihilates all six columns at unit placements.
    """
    a = np.asarray(a, dtype=float)
    pr = quat_tangent_matrix(a[..., :4])
    pe = quat_tangent_matrix(a[..., 4:])
    out = np.zeros(a.shape[:-1] + (8, 6))
    out[..., 0:4, 0:3] = pr
    out[..., 4:8, 0:3] = pe
    out[..., 4:8, 3:6] = pr
    return out


def unity_jacobian(a):
    """Jacobian of the two unity constraints, shape (..., 2, 8)."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape[:-1] + (2, 8))
    out[..., 0, 0:4] = 2.0 * a[..., :4]
    out[..., 1, 0:4] = a[..., 4:]
    out[..., 1, 4:8] = a[..., :4]
    return out
