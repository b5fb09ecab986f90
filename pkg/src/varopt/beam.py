"""Geometrically exact beam as a constrained field theory on unit dual quaternions.

The beam configuration is a spacetime grid of unit dual quaternion placements
q~_a^n (time level n, space node a).  The discrete Lagrangian of a spacetime
cell is the trapezoidal average of the four corner evaluations of the ambient
density

    l(b, td, sd) = 2 m' M m - 2 s' C s - U_grav(b),
    m = conj(b) (x) td,          (half the body-frame time rate)
    s = conj(b) (x) sd - s_ref,  (half the body-frame strain)

scaled by dt*ds/4, where td and sd are the forward difference quotients in
time and space belonging to that corner.  M and C are the diagonal inertia
and stiffness matrices extended by the alpha parameters on the two scalar
slots; the alphas drop out of the projected dynamics on the unit manifold.

Damping forces come from a Rayleigh-type variational treatment of the
Kelvin-Voigt law: each cell stores two discrete strain measures (left and
right corner based), their time rates pair with the strain derivative
matrices, and the resulting four corner covectors dissipate

    sum_i f^i . (increments) = -(dt^2 ds / 2) sum_E Kdot_E' D Kdot_E <= 0

exactly (the trapezoidal split makes the average-gradient identity exact for
the quadratic strain maps).  Boundary torque control enters as a pair of
covectors at the a=0 corners whose left-multiplication image is 2 dt ds u k.

Stepping solves the stacked projected equations of motion for one new time
row through the right-multiplicative update q <- q (x) exp(xi) with Newton
iterations on xi.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import dualquat as dq
from .numerics import DEFAULT_NEWTON, newton_solve, NonConvergence

SIGN4 = np.array([1.0, -1.0, -1.0, -1.0])
SIGN8 = np.array([1.0, -1, -1, -1, 1.0, -1, -1, -1])
K_HAT8 = np.array([0.0, 0, 0, 1, 0, 0, 0, 0])

# per corner term: (base corner, t-from, t-to, s-from, s-to, reference side)
# corners are numbered c1=(a,n), c2=(a+1,n), c3=(a,n+1), c4=(a+1,n+1)
TERMS = (
    (0, 0, 2, 0, 1, 0),
    (1, 1, 3, 0, 1, 1),
    (2, 0, 2, 2, 3, 0),
    (3, 1, 3, 2, 3, 1),
)


class BeamStepFailure(RuntimeError):
    """Newton failed during a beam time step (message carries the level)."""


@dataclass(frozen=True)
class BeamMaterial:
    """Material, section and damping data of the beam.

    gravity is the physical acceleration vector; the potential energy density
    is -rho A <gravity, x>.  alpha are the four free parameters weighting the
    scalar slots of the extended inertia/stiffness matrices.
    """

    e_mod: float
    nu: float
    rho: float
    a_cross: float
    i2: float
    i3: float
    g_shear: float = None
    kappa2: float = 1.0
    kappa3: float = 1.0
    eta: float = 0.0
    zeta: float = 0.0
    alpha: tuple = (1.0, 1.0, 1.0, 1.0)
    gravity: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.e_mod <= 0 or self.rho <= 0 or self.a_cross <= 0:
            raise ValueError("young's modulus, density and section area must be positive")
        if self.g_shear is None:
            object.__setattr__(self, "g_shear", self.e_mod / (2.0 * (1.0 + self.nu)))
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))

    @classmethod
    def square(cls, e_mod, nu, rho, side, **kw):
        """Square cross-section of the given side length."""
        return cls(e_mod=e_mod, nu=nu, rho=rho, a_cross=side ** 2,
                   i2=side ** 4 / 12.0, i3=side ** 4 / 12.0, **kw)


def extensional_viscosity(mat):
    """chi = zeta (3 - E/G)^2 + eta (E/G)^2 / 3."""
    r = mat.e_mod / mat.g_shear
    return mat.zeta * (3.0 - r) ** 2 + mat.eta * r ** 2 / 3.0


def section_matrices(mat):
    """Diagonal inertia, stiffness and damping matrices (J, rho, C1, C2, D)."""
    a1, a2, a3, a4 = mat.alpha
    rho, A = mat.rho, mat.a_cross
    i2, i3 = mat.i2, mat.i3
    jt = np.diag([a1, rho * (i2 + i3), rho * i2, rho * i3])
    rhot = np.diag([a2, rho * A, rho * A, rho * A])
    c1t = np.diag([a3, mat.g_shear * (i2 + i3), mat.e_mod * i2, mat.e_mod * i3])
    c2t = np.diag([a4, mat.e_mod * A, mat.kappa2 * mat.g_shear * A, mat.kappa3 * mat.g_shear * A])
    chi = extensional_viscosity(mat)
    dt8 = np.diag([0.0, mat.eta * (i2 + i3), chi * i2, chi * i3,
                   0.0, chi * A, mat.eta * A, mat.eta * A])
    return jt, rhot, c1t, c2t, dt8


def _mass_diag(mat):
    jt, rhot, _, _, _ = section_matrices(mat)
    return np.concatenate([np.diag(jt), np.diag(rhot)])


def _stiff_diag(mat):
    _, _, c1t, c2t, _ = section_matrices(mat)
    return np.concatenate([np.diag(c1t), np.diag(c2t)])


def _damp_diag(mat):
    return np.diag(section_matrices(mat)[4])


def straight_reference(n_space, length):
    """Reference placements of a straight beam along e1, shape (A+1, 8)."""
    s = np.linspace(0.0, length, n_space + 1)
    out = np.zeros((n_space + 1, 8))
    out[:, 0] = 1.0
    out[:, 5] = 0.5 * s
    return out


@dataclass
class BeamGrid:
    """Spacetime grid of placements with its reference configuration.

    nodes has shape (N+1, A+1, 8); rows are time levels.  The reference row
    fixes the stress-free strain state, precomputed per space interval for
    the left and right corner conventions.
    """

    nodes: np.ndarray
    dt: float
    ds: float
    reference: np.ndarray
    sref_left: np.ndarray = field(init=False)
    sref_right: np.ndarray = field(init=False)
    sref_alpha: np.ndarray = field(init=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.reference = np.asarray(self.reference, dtype=float)
        sd = (self.reference[1:] - self.reference[:-1]) / self.ds
        self.sref_left = dq.dq_mul(dq.dq_conj(self.reference[:-1]), sd)
        self.sref_right = dq.dq_mul(dq.dq_conj(self.reference[1:]), sd)
        self.sref_alpha = np.stack(
            _gauge_scalars(self.reference[:-1], self.reference[1:], self.ds), axis=-1)

    @property
    def n_steps(self):
        return self.nodes.shape[0] - 1

    @property
    def n_space(self):
        return self.nodes.shape[1] - 1

    @classmethod
    def from_rest(cls, reference, n_steps, dt, ds):
        reference = np.asarray(reference, dtype=float)
        nodes = np.tile(reference, (n_steps + 1, 1, 1))
        return cls(nodes=nodes, dt=dt, ds=ds, reference=reference)

    def unity_audit(self, row=None, tol=1e-9):
        rows = self.nodes if row is None else self.nodes[row]
        c1, c2 = dq.unity_residual(rows)
        worst = max(np.max(np.abs(c1)), np.max(np.abs(c2)))
        if worst > tol:
            raise BeamStepFailure(f"unit placement constraints violated by {worst:.3e}")
        return worst


def _cmul(b, x):
    return dq.dq_mul(dq.dq_conj(b), x)


def _physical_weights(mat):
    """Mass and stiffness diagonals with the two gauge slots removed.

    The scalar slots of the body-frame rates vanish identically on grids that
    satisfy the unit-placement constraints (see _gauge_scalars), so the
    alpha-weighted terms carry no gradient along the constraint manifold and
    the equations are assembled without them.
    """
    mvec = _mass_diag(mat).copy()
    cvec = _stiff_diag(mat).copy()
    mvec[0] = mvec[4] = 0.0
    cvec[0] = cvec[4] = 0.0
    return mvec, cvec


def _gauge_scalars(ca, cb, d):
    """Scalar slots of the rate from ca to cb, paired with the average base.

    (<b_r, v_r>, <b_r, v_eps> + <b_eps, v_r>) with b = (ca+cb)/2 and
    v = (cb-ca)/d collapse to difference quotients of the two unit-placement
    constraint values, hence are exactly zero between unit placements; the
    arbitrary alpha weights multiply only these.
    """
    real0 = np.sum(ca[..., :4] ** 2, axis=-1)
    real1 = np.sum(cb[..., :4] ** 2, axis=-1)
    mix0 = np.sum(ca[..., :4] * ca[..., 4:], axis=-1)
    mix1 = np.sum(cb[..., :4] * cb[..., 4:], axis=-1)
    return (real1 - real0) / (2.0 * d), (mix1 - mix0) / (2.0 * d)


def _pair_geometry(grid, row0, row1):
    """Corner placements, difference quotients and references for one row pair."""
    c = (row0[:-1], row0[1:], row1[:-1], row1[1:])
    td = ((c[2] - c[0]) / grid.dt, (c[3] - c[1]) / grid.dt)
    sd = ((c[1] - c[0]) / grid.ds, (c[3] - c[2]) / grid.ds)
    sref = (grid.sref_left, grid.sref_right)
    return c, td, sd, sref


def _term_states(c, td, sd, sref):
    """Half rates m_i, s_i and bases b_i per corner term, each (A, 8)."""
    out = []
    for (bi, tf, tt, sf, st, ri) in TERMS:
        b = c[bi]
        tdi = td[0] if bi in (0, 2) else td[1]
        sdi = sd[0] if bi in (0, 1) else sd[1]
        out.append((b, tdi, sdi, _cmul(b, tdi), _cmul(b, sdi) - sref[ri]))
    return out


def _potential(mat, b):
    """Gravitational potential density -rho A <g, x(b)> per base, shape (A,)."""
    grav = np.asarray(mat.gravity)
    if not np.any(grav):
        return np.zeros(b.shape[:-1])
    x = 2.0 * dq.q_mul(b[..., 4:], dq.q_conj(b[..., :4]))[..., 1:]
    return -mat.rho * mat.a_cross * (x @ grav)


def _potential_gradient(mat, b):
    grav = np.asarray(mat.gravity)
    out = np.zeros(b.shape)
    if not np.any(grav):
        return out
    g4 = np.concatenate([[0.0], grav])
    coef = -2.0 * mat.rho * mat.a_cross
    # d/dq_r of -2 rho A <g4, q_eps (x) conj(q_r)>
    out[..., :4] = coef * SIGN4 * dq.q_mul(dq.q_conj(b[..., 4:]), np.broadcast_to(g4, b[..., 4:].shape))
    out[..., 4:] = coef * dq.q_mul(np.broadcast_to(g4, b[..., :4].shape), b[..., :4])
    return out


def _potential_hessian(mat):
    """Constant 8x8 Hessian of the potential density."""
    grav = np.asarray(mat.gravity)
    out = np.zeros((8, 8))
    if not np.any(grav):
        return out
    g4 = np.concatenate([[0.0], grav])
    l4 = dq.lmat4(g4)
    coef = -2.0 * mat.rho * mat.a_cross
    out[4:, :4] = coef * l4
    out[:4, 4:] = -coef * l4  # transpose block: L4(g)' = -L4(g) for pure g
    return out


def cell_lagrangian(grid, mat, a, n):
    """Trapezoidal cell Lagrangian of cell (a, n), a in 0..A-1, n in 0..N-1."""
    if not (0 <= a < grid.n_space and 0 <= n < grid.n_steps):
        raise IndexError("cell index outside the grid")
    vals = _row_cell_values(grid, mat, grid.nodes[n], grid.nodes[n + 1])
    return float(vals[a])


def _row_cell_values(grid, mat, row0, row1):
    mvec, cvec = _physical_weights(mat)
    a1, a2, a3, a4 = mat.alpha
    c, td, sd, sref = _pair_geometry(grid, row0, row1)
    pref = grid.dt * grid.ds / 4.0
    total = np.zeros(row0.shape[0] - 1)
    for (bi, tf, tt, sf, st, ri), (b, tdi, sdi, m, s) in zip(
            TERMS, _term_states(c, td, sd, sref)):
        total += 2.0 * np.einsum("ai,i,ai->a", m, mvec, m)
        total -= 2.0 * np.einsum("ai,i,ai->a", s, cvec, s)
        total -= _potential(mat, b)
        m0, m4 = _gauge_scalars(c[tf], c[tt], grid.dt)
        s0, s4 = _gauge_scalars(c[sf], c[st], grid.ds)
        s0 = s0 - grid.sref_alpha[:, 0]
        s4 = s4 - grid.sref_alpha[:, 1]
        total += 2.0 * (a1 * m0 ** 2 + a2 * m4 ** 2) - 2.0 * (a3 * s0 ** 2 + a4 * s4 ** 2)
    return pref * total


def discrete_rates(grid, a, n):
    """Full body-frame rates of cell (a, n): Omega and K per corner term, (4, 8) each."""
    if not (0 <= a < grid.n_space and 0 <= n < grid.n_steps):
        raise IndexError("cell index outside the grid")
    c, td, sd, sref = _pair_geometry(grid, grid.nodes[n], grid.nodes[n + 1])
    omega = np.empty((4, 8))
    kappa = np.empty((4, 8))
    for i, (b, tdi, sdi, m, s) in enumerate(_term_states(c, td, sd, sref)):
        omega[i] = 2.0 * m[a]
        kappa[i] = 2.0 * (s[a] + sref[TERMS[i][5]][a])
        # gauge slots use the average-base pairing (zero between unit nodes)
        (bi, tf, tt, sf, st, ri) = TERMS[i]
        m0, m4 = _gauge_scalars(c[tf][a], c[tt][a], grid.dt)
        k0, k4 = _gauge_scalars(c[sf][a], c[st][a], grid.ds)
        omega[i, 0], omega[i, 4] = 2.0 * m0, 2.0 * m4
        kappa[i, 0], kappa[i, 4] = 2.0 * k0, 2.0 * k4
    return omega, kappa


def _row_cell_gradient(grid, mat, row0, row1):
    """Slot derivatives of the cell Lagrangians, shape (A, 4, 8).

    On unit-placement rows the gauge-slot terms have zero gradient (their
    scalars vanish identically there), so only the physical weights appear.
    """
    mvec, cvec = _physical_weights(mat)
    c, td, sd, sref = _pair_geometry(grid, row0, row1)
    pref = grid.dt * grid.ds / 4.0
    n_cells = row0.shape[0] - 1
    slots = np.zeros((n_cells, 4, 8))
    for (bi, tf, tt, sf, st, ri), (b, tdi, sdi, m, s) in zip(TERMS, _term_states(c, td, sd, sref)):
        mm = mvec * m
        cs = cvec * s
        gb = (4.0 * SIGN8 * np.einsum("aji,aj->ai", dq.rmat8(tdi), mm)
              - 4.0 * SIGN8 * np.einsum("aji,aj->ai", dq.rmat8(sdi), cs)
              - _potential_gradient(mat, b))
        cb_t = np.einsum("aji,aj->ai", dq.cmat8(b), mm)
        cb_s = np.einsum("aji,aj->ai", dq.cmat8(b), cs)
        tt_vec = (4.0 / grid.dt) * cb_t
        ss_vec = (4.0 / grid.ds) * cb_s
        slots[:, bi] += gb
        slots[:, tt] += tt_vec
        slots[:, tf] -= tt_vec
        slots[:, sf] += ss_vec
        slots[:, st] -= ss_vec
    return pref * slots


def _row_cell_hessian(grid, mat, row0, row1):
    """Second slot derivatives of the cell Lagrangians, shape (A, 4, 4, 8, 8).

    Gauge-slot curvature is dropped along with the gradient: its Gauss-Newton
    block annihilates every tangent direction of the unit constraints, so the
    projected Newton systems are unchanged.
    """
    mvec, cvec = _physical_weights(mat)
    c, td, sd, sref = _pair_geometry(grid, row0, row1)
    pref = grid.dt * grid.ds / 4.0
    n_cells = row0.shape[0] - 1
    hess = np.zeros((n_cells, 4, 4, 8, 8))
    hess_u = _potential_hessian(mat)
    for (bi, tf, tt, sf, st, ri), (b, tdi, sdi, m, s) in zip(TERMS, _term_states(c, td, sd, sref)):
        rt = dq.rmat8(tdi)
        rs = dq.rmat8(sdi)
        cb = dq.cmat8(b)
        mm = mvec * m
        cs = cvec * s
        # gradient pieces: gb on the base slot, tt_vec = (4/dt) cb' M m on the
        # time pair, ss_vec = (4/ds) cb' C s on the space pair
        rt_k = rt * SIGN8  # rmat8(td) @ K8
        rs_k = rs * SIGN8
        k_rt_t = SIGN8[:, None] * np.einsum("aji,jk->aik", rt, np.diag(mvec))  # K8 R(td)' M
        k_rs_t = SIGN8[:, None] * np.einsum("aji,jk->aik", rs, np.diag(cvec))
        dgb_db = (4.0 * np.einsum("aij,ajk->aik", k_rt_t, rt_k)
                  - 4.0 * np.einsum("aij,ajk->aik", k_rs_t, rs_k)
                  - hess_u)
        dgb_dtd = 4.0 * (SIGN8[:, None] * dq.xmat8(mm)
                         + np.einsum("aij,ajk->aik", k_rt_t, cb))
        dgb_dsd = -4.0 * (SIGN8[:, None] * dq.xmat8(cs)
                          + np.einsum("aij,ajk->aik", k_rs_t, cb))
        cb_t = np.einsum("aij->aji", cb)
        dtt_db = (4.0 / grid.dt) * (dq.zmat8(mm) * SIGN8
                                    + np.einsum("aij,jk,akl->ail", cb_t, np.diag(mvec), rt_k))
        dtt_dtd = (4.0 / grid.dt) * np.einsum("aij,jk,akl->ail", cb_t, np.diag(mvec), cb)
        dss_db = (4.0 / grid.ds) * (dq.zmat8(cs) * SIGN8
                                    + np.einsum("aij,jk,akl->ail", cb_t, np.diag(cvec), rs_k))
        dss_dsd = (4.0 / grid.ds) * np.einsum("aij,jk,akl->ail", cb_t, np.diag(cvec), cb)
        wt_t = np.zeros(4)
        wt_t[tt] = 1.0 / grid.dt
        wt_t[tf] = -1.0 / grid.dt
        wt_s = np.zeros(4)
        wt_s[st] = 1.0 / grid.ds
        wt_s[sf] = -1.0 / grid.ds
        receivers = ((bi, "g", 1.0), (tt, "t", 1.0), (tf, "t", -1.0),
                     (sf, "s", 1.0), (st, "s", -1.0))
        pieces = {
            "g": (dgb_db, dgb_dtd, dgb_dsd),
            "t": (dtt_db, dtt_dtd, None),
            "s": (dss_db, None, dss_dsd),
        }
        for (i_slot, kind, sign) in receivers:
            d_db, d_dtd, d_dsd = pieces[kind]
            for j in range(4):
                block = None
                if j == bi:
                    block = d_db.copy()
                if d_dtd is not None and wt_t[j] != 0.0:
                    block = (block if block is not None else 0.0) + wt_t[j] * d_dtd
                if d_dsd is not None and wt_s[j] != 0.0:
                    block = (block if block is not None else 0.0) + wt_s[j] * d_dsd
                if block is not None:
                    hess[:, i_slot, j] += sign * block
    return pref * hess


def _kv_wmats(grid, c):
    """Strain derivative matrices W_E^(i) = dK_E^{lvl(i)}/dc_i, keyed (side, corner)."""
    sd_b = (c[1] - c[0]) / grid.ds
    sd_t = (c[3] - c[2]) / grid.ds
    two_ds = 2.0 / grid.ds
    w = {}
    w[("L", 0)] = 2.0 * dq.rmat8(sd_b) * SIGN8 - two_ds * dq.cmat8(c[0])
    w[("L", 1)] = two_ds * dq.cmat8(c[0])
    w[("R", 0)] = -two_ds * dq.cmat8(c[1])
    w[("R", 1)] = 2.0 * dq.rmat8(sd_b) * SIGN8 + two_ds * dq.cmat8(c[1])
    w[("L", 2)] = 2.0 * dq.rmat8(sd_t) * SIGN8 - two_ds * dq.cmat8(c[2])
    w[("L", 3)] = two_ds * dq.cmat8(c[2])
    w[("R", 2)] = -two_ds * dq.cmat8(c[3])
    w[("R", 3)] = 2.0 * dq.rmat8(sd_t) * SIGN8 + two_ds * dq.cmat8(c[3])
    return w


def _kv_rates(grid, c):
    """Discrete strain time rates Kdot per side, each (A, 8)."""
    sd_b = (c[1] - c[0]) / grid.ds
    sd_t = (c[3] - c[2]) / grid.ds
    k_bot = {"L": 2.0 * _cmul(c[0], sd_b), "R": 2.0 * _cmul(c[1], sd_b)}
    k_top = {"L": 2.0 * _cmul(c[2], sd_t), "R": 2.0 * _cmul(c[3], sd_t)}
    return {e: (k_top[e] - k_bot[e]) / grid.dt for e in ("L", "R")}


def _row_kv_forces(grid, mat, row0, row1):
    """Kelvin-Voigt corner covectors per cell, shape (A, 4, 8)."""
    n_cells = row0.shape[0] - 1
    dvec = _damp_diag(mat)
    if not np.any(dvec):
        return np.zeros((n_cells, 4, 8))
    c = (row0[:-1], row0[1:], row1[:-1], row1[1:])
    pref = grid.dt * grid.ds / 4.0
    kdot = _kv_rates(grid, c)
    wmats = _kv_wmats(grid, c)
    out = np.zeros((n_cells, 4, 8))
    for i in range(4):
        for e in ("L", "R"):
            out[:, i] -= pref * np.einsum("aji,aj->ai", wmats[(e, i)], dvec * kdot[e])
    return out


def _row_kv_jacobian(grid, mat, row0, row1):
    """Derivatives of the KV covectors w.r.t. the four corners, (A, 4, 4, 8, 8)."""
    n_cells = row0.shape[0] - 1
    dvec = _damp_diag(mat)
    if not np.any(dvec):
        return np.zeros((n_cells, 4, 4, 8, 8))
    c = (row0[:-1], row0[1:], row1[:-1], row1[1:])
    pref = grid.dt * grid.ds / 4.0
    kdot = _kv_rates(grid, c)
    wmats = _kv_wmats(grid, c)
    two_ds = 2.0 / grid.ds
    # level and sign bookkeeping: corners 0,1 live on the lower level, 2,3 on
    # the upper; dKdot/dc_j = (sign_j / dt) W^(j)
    sign_t = np.array([-1.0, -1.0, 1.0, 1.0])
    out = np.zeros((n_cells, 4, 4, 8, 8))

    def dw_terms(e, i, w8):
        """d(W_E^(i)' w)/dc_j for fixed covector w, dict j -> (A, 8, 8)."""
        kx = SIGN8[:, None] * dq.xmat8(w8)  # K8 X8(w)
        zk = dq.zmat8(w8) * SIGN8           # Z8(w) K8
        low, high = (0, 1) if i in (0, 1) else (2, 3)
        res = {}
        if e == "L":
            if i in (0, 2):
                res[low] = -two_ds * (kx + zk)
                res[high] = two_ds * kx
            else:
                res[low] = two_ds * zk
        else:
            if i in (0, 2):
                res[high] = -two_ds * zk
            else:
                res[low] = -two_ds * kx
                res[high] = two_ds * (kx + zk)
        return res

    for i in range(4):
        for e in ("L", "R"):
            w8 = dvec * kdot[e]
            w_i_t = np.einsum("aij->aji", wmats[(e, i)])
            for j, dwm in dw_terms(e, i, w8).items():
                out[:, i, j] -= pref * dwm
            for j in range(4):
                wj = wmats[(e, j)]
                out[:, i, j] -= pref * (sign_t[j] / grid.dt) * np.einsum(
                    "aij,j,ajk->aik", w_i_t, dvec, wj)
    return out


def kelvin_voigt_forces(grid, mat, a, n):
    """The four damping covectors of cell (a, n)."""
    if not (0 <= a < grid.n_space and 0 <= n < grid.n_steps):
        raise IndexError("cell index outside the grid")
    return _row_kv_forces(grid, mat, grid.nodes[n], grid.nodes[n + 1])[a]


def control_force_boundary(u, dt, ds, placement=None):
    """Boundary torque covector; its left-multiplication image is 2 dt ds u k.

    With placement omitted the image vector itself is returned; otherwise the
    covector at that unit placement.
    """
    image = 2.0 * dt * ds * float(u) * K_HAT8
    if placement is None:
        return image
    return dq.cmat8(placement).T @ image


def _control_image(u, dt, ds):
    return 2.0 * dt * ds * float(u) * K_HAT8


def _row_force_slots(grid, mat, row0, row1, u):
    """KV plus boundary control covectors per cell and slot, (A, 4, 8)."""
    slots = _row_kv_forces(grid, mat, row0, row1)
    if u is not None:
        image = _control_image(u, grid.dt, grid.ds)
        slots[0, 0] += dq.cmat8(row0[0]).T @ image
        slots[0, 2] += dq.cmat8(row1[0]).T @ image
    return slots


def assemble_cell_forces(grid, mat, controls):
    """All force covectors on the full grid, shape (N, A, 4, 8)."""
    n_steps = grid.n_steps
    out = np.zeros((n_steps, grid.n_space, 4, 8))
    for n in range(n_steps):
        u = None if controls is None else controls[n]
        out[n] = _row_force_slots(grid, mat, grid.nodes[n], grid.nodes[n + 1], u)
    return out


def _level_bracket(grid, slots_cur, slots_prev, p0=None):
    """Sum the adjacent-cell slot covectors onto the nodes of one time level."""
    n_nodes = grid.n_space + 1
    out = np.zeros((n_nodes, 8))
    if slots_cur is not None:
        out[:-1] += slots_cur[:, 0]
        out[1:] += slots_cur[:, 1]
    if slots_prev is not None:
        out[:-1] += slots_prev[:, 2]
        out[1:] += slots_prev[:, 3]
    if p0 is not None:
        out += grid.ds * p0
    return out


def _node_bracket(grid, mat, forces, n, p0=None):
    """Unprojected equation covectors of time level n, shape (A+1, 8)."""
    slots_cur = _row_cell_gradient(grid, mat, grid.nodes[n], grid.nodes[n + 1])
    if forces is not None:
        slots_cur = slots_cur + forces[n]
    if n >= 1:
        slots_prev = _row_cell_gradient(grid, mat, grid.nodes[n - 1], grid.nodes[n])
        if forces is not None:
            slots_prev = slots_prev + forces[n - 1]
    else:
        slots_prev = None
    return _level_bracket(grid, slots_cur, slots_prev, p0 if n == 0 else None)


def field_del_residual(grid, mat, forces, a, n):
    """Projected discrete field equation at an interior node (a, n), in R^6."""
    if not (1 <= a <= grid.n_space - 1 and 1 <= n <= grid.n_steps - 1):
        raise IndexError("not an interior node")
    bracket = _node_bracket(grid, mat, forces, n)
    return dq.beam_null_space(grid.nodes[n, a]).T @ bracket[a]


def boundary_del_residual(grid, mat, forces, a, n, p0=None):
    """Projected equation at a spatial boundary or initial-time node."""
    if not (0 <= a <= grid.n_space and 0 <= n <= grid.n_steps - 1):
        raise IndexError("node outside the equation range")
    if 1 <= a <= grid.n_space - 1 and 1 <= n <= grid.n_steps - 1:
        raise IndexError("interior node; use field_del_residual")
    bracket = _node_bracket(grid, mat, forces, n, p0=p0)
    return dq.beam_null_space(grid.nodes[n, a]).T @ bracket[a]


def _full_mask(grid, free_mask):
    if free_mask is None:
        return np.ones((grid.n_space + 1, 6), dtype=bool)
    mask = np.asarray(free_mask, dtype=bool)
    if mask.shape != (grid.n_space + 1, 6):
        raise ValueError("free_mask must have shape (A+1, 6)")
    return mask


def _step_jacobian(grid, mat, row_n, row_next, xi, mask):
    """Jacobian of the projected level-n equations w.r.t. the masked xi."""
    n_nodes = grid.n_space + 1
    hess = _row_cell_hessian(grid, mat, row_n, row_next)
    hess = hess + _row_kv_jacobian(grid, mat, row_n, row_next)
    jac8 = np.zeros((n_nodes, 8, n_nodes, 8))
    for a in range(grid.n_space):
        for i_slot, i_node in ((0, a), (1, a + 1)):
            for j_slot, j_node in ((2, a), (3, a + 1)):
                jac8[i_node, :, j_node, :] += hess[a, i_slot, j_slot]
    proj = dq.beam_null_space(row_n)
    tan = np.einsum("aij,ajk->aik", dq.lmat8(row_n), dq.dq_exp_jacobian(xi))
    jac6 = np.einsum("aip,aibj,bjq->apbq", proj, jac8, tan)
    flat = jac6.reshape(6 * n_nodes, 6 * n_nodes)
    idx = mask.reshape(-1)
    return flat[np.ix_(idx, idx)]


def beam_step(grid, mat, n, controls, p0=None, free_mask=None,
              settings=DEFAULT_NEWTON, xi_guess=None):
    """Solve the level-n equations for time row n+1; returns the increments xi.

    The new row is written into the grid.  controls is the full (N,) torque
    array (entries may be None for no control); p0 are the prescribed initial
    ambient momenta, used only at n=0.  free_mask marks the node degrees of
    freedom that are solved for; masked components keep xi = 0.
    """
    if not (0 <= n < grid.n_steps):
        raise IndexError("time level outside the grid")
    mask = _full_mask(grid, free_mask)
    idx = mask.reshape(-1)
    n_nodes = grid.n_space + 1
    row_n = grid.nodes[n]
    u_n = None if controls is None else controls[n]
    if n >= 1:
        u_prev = None if controls is None else controls[n - 1]
        slots_prev = _row_cell_gradient(grid, mat, grid.nodes[n - 1], row_n)
        slots_prev += _row_force_slots(grid, mat, grid.nodes[n - 1], row_n, u_prev)
        p0_row = None
    else:
        slots_prev = None
        p0_row = np.zeros((n_nodes, 8)) if p0 is None else np.asarray(p0, dtype=float)
    proj = dq.beam_null_space(row_n)

    def unpack(z):
        xi = np.zeros((n_nodes, 6))
        xi.reshape(-1)[idx] = z
        return xi

    def residual(z):
        xi = unpack(z)
        row_next = dq.dq_mul(row_n, dq.dq_exp_tangent(xi))
        slots = _row_cell_gradient(grid, mat, row_n, row_next)
        slots += _row_force_slots(grid, mat, row_n, row_next, u_n)
        bracket = _level_bracket(grid, slots, slots_prev, p0_row)
        return np.einsum("aik,ai->ak", proj, bracket).reshape(-1)[idx]

    def jacobian(z):
        xi = unpack(z)
        row_next = dq.dq_mul(row_n, dq.dq_exp_tangent(xi))
        return _step_jacobian(grid, mat, row_n, row_next, xi, mask)

    z0 = np.zeros(int(idx.sum())) if xi_guess is None else np.asarray(xi_guess).reshape(-1)[idx]
    # rescue ladder for violent transients: the extrapolated predictor can
    # overshoot (retry from rest), and plain Newton can bounce between
    # branches (retry with the backtracking safeguard)
    starts = [z0]
    if np.any(z0):
        starts.append(np.zeros_like(z0))
    variants = [settings]
    if not settings.line_search:
        variants.append(replace(settings, line_search=True))
    z = failure = None
    for variant in variants:
        for start in starts:
            try:
                z = newton_solve(residual, jacobian, start, settings=variant)
                break
            except NonConvergence as exc:
                failure = exc
        if z is not None:
            break
    if z is None:
        raise NonConvergence(f"beam step at time level {n}: {failure}") from failure
    xi = unpack(z)
    grid.nodes[n + 1] = dq.dq_mul(row_n, dq.dq_exp_tangent(xi))
    grid.unity_audit(row=n + 1)
    return xi


def integrate_beam(grid, mat, controls, p0=None, free_mask=None,
                   settings=DEFAULT_NEWTON):
    """March the grid forward through all time levels (constant-velocity predictor)."""
    xi = None
    for n in range(grid.n_steps):
        xi = beam_step(grid, mat, n, controls, p0=p0, free_mask=free_mask,
                       settings=settings, xi_guess=xi)
    return grid


def beam_energies(grid, mat, upto=None):
    """Energy series per time interval.

    Returns (T_trans, T_rot, U_total, U_grav, deformation, H) as arrays of
    length N (or upto), assembled from the same corner terms as the action;
    the alpha slots are excluded since they carry no physical energy.
    """
    mvec = _mass_diag(mat)
    cvec = _stiff_diag(mat)
    rot = np.zeros(8)
    rot[1:4] = mvec[1:4]
    tra = np.zeros(8)
    tra[5:8] = mvec[5:8]
    stiff = np.zeros(8)
    stiff[1:4] = cvec[1:4]
    stiff[5:8] = cvec[5:8]
    n_int = grid.n_steps if upto is None else upto
    t_tr = np.zeros(n_int)
    t_rot = np.zeros(n_int)
    u_def = np.zeros(n_int)
    u_grav = np.zeros(n_int)
    quarter = grid.ds / 4.0
    for n in range(n_int):
        c, td, sd, sref = _pair_geometry(grid, grid.nodes[n], grid.nodes[n + 1])
        for (b, tdi, sdi, m, s) in _term_states(c, td, sd, sref):
            t_tr[n] += quarter * 2.0 * np.sum(m * tra * m)
            t_rot[n] += quarter * 2.0 * np.sum(m * rot * m)
            u_def[n] += quarter * 2.0 * np.sum(s * stiff * s)
            u_grav[n] += quarter * np.sum(_potential(mat, b))
    u_total = u_def + u_grav
    h_total = t_tr + t_rot + u_total
    return t_tr, t_rot, u_total, u_grav, u_def, h_total
