"""Boundary-torque optimal control of the rod model.

The reduced objective is a Mayer distance of the final row to a target row
plus a quadratic control cost,

    J(u) = sum_a s_q |q_a^N - target_a|^2 + sum_n r/2 u_n^2,

and its gradient comes from a discrete adjoint pass: one transposed linear
solve per time level against the same slot-pair derivative blocks the
forward Newton iteration used.  All variations are taken in the
right-translation basis at each converged row (the null-space columns of
the unit-placement constraints), restricted to the free degrees of freedom.

The first torque value is prescribed data, not a decision variable, so its
gradient entry is reported as zero and a gradient-descent update never
moves it.
"""

from dataclasses import dataclass

import numpy as np

from . import dualquat as dq
from .beam import (
    SIGN8,
    _control_image,
    _full_mask,
    _node_bracket,
    _row_cell_hessian,
    _row_kv_jacobian,
    assemble_cell_forces,
)
from .numerics import SingularJacobian


def upswing_target(reference):
    """Reference rows turned by a half turn about e3 (the torque axis)."""
    k8 = np.zeros(8)
    k8[3] = 1.0
    return dq.dq_mul(k8, np.asarray(reference, dtype=float))


def ocp_free_mask(n_space):
    """Roots may rotate but not translate; every other node is free."""
    mask = np.ones((n_space + 1, 6), dtype=bool)
    mask[0, 3:] = False
    return mask


@dataclass
class BeamOcp:
    """Objective data: target rows, Mayer weight s_q, control weight r."""

    target: np.ndarray
    s_q: float
    r: float
    free_mask: np.ndarray = None

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        if self.free_mask is None:
            self.free_mask = ocp_free_mask(self.target.shape[0] - 1)


def beam_objective(grid, ocp, controls):
    """Mayer distance of the last row plus the running control cost."""
    diff = grid.nodes[-1] - ocp.target
    value = ocp.s_q * float(np.sum(diff * diff))
    value += 0.5 * ocp.r * float(np.sum(np.square(controls)))
    return value


def pair_jacobians(grid, mat):
    """Slot-pair derivative blocks (A, 4, 4, 8, 8) for every time-step pair.

    Entry [a, i, j] of element m is the derivative of the cell-(a, m)
    covector at slot i with respect to corner j, conservative and viscous
    parts together.  Each pair feeds three different level matrices, so the
    sweep computes the list once.
    """
    return [_row_cell_hessian(grid, mat, grid.nodes[m], grid.nodes[m + 1])
            + _row_kv_jacobian(grid, mat, grid.nodes[m], grid.nodes[m + 1])
            for m in range(grid.n_steps)]


def _collect_blocks(grid, cells, slot_rows, corner_cols):
    """Scatter per-cell (slot x corner) 8x8 blocks onto node-index matrices."""
    n_nodes = grid.n_space + 1
    out = np.zeros((n_nodes, 8, n_nodes, 8))
    for a in range(grid.n_space):
        for i_slot in slot_rows:
            i_node = a if i_slot in (0, 2) else a + 1
            for j_slot in corner_cols:
                j_node = a if j_slot in (0, 2) else a + 1
                out[i_node, :, j_node, :] += cells[a, i_slot, j_slot]
    return out


def _project(grid, amb, row_rows, row_cols, idx):
    """Both-sides change of basis to masked right-translation coordinates."""
    proj_r = dq.beam_null_space(row_rows)
    proj_c = dq.beam_null_space(row_cols)
    n_nodes = grid.n_space + 1
    mat6 = np.einsum("aip,aibj,bjq->apbq", proj_r, amb, proj_c)
    flat = mat6.reshape(6 * n_nodes, 6 * n_nodes)
    return flat[np.ix_(idx, idx)]


def _control_jacobian_block(grid, u):
    """d(torque covector at the root)/d(root placement), one 8x8 block."""
    if u is None or u == 0.0:
        return None
    image = _control_image(u, grid.dt, grid.ds)
    return dq.zmat8(image) * SIGN8


def level_matrix_next(grid, pairs, m, idx):
    """Derivative of the level-m equations w.r.t. row m+1 (the step Jacobian)."""
    amb = _collect_blocks(grid, pairs[m], (0, 1), (2, 3))
    return _project(grid, amb, grid.nodes[m], grid.nodes[m + 1], idx)


def level_matrix_same(grid, mat, pairs, forces, controls, m, idx):
    """Derivative of the level-m equations w.r.t. row m itself (m >= 1)."""
    amb = _collect_blocks(grid, pairs[m], (0, 1), (0, 1))
    amb += _collect_blocks(grid, pairs[m - 1], (2, 3), (2, 3))
    if controls is not None:
        for u in (controls[m], controls[m - 1]):
            blk = _control_jacobian_block(grid, u)
            if blk is not None:
                amb[0, :, 0, :] += blk
    flat = _project(grid, amb, grid.nodes[m], grid.nodes[m], idx)
    # the projection basis moves with the row, so the residual covector
    # itself enters through d(null_space)^T bracket
    bracket = _node_bracket(grid, mat, forces, m)
    n_nodes = grid.n_space + 1
    proj = dq.beam_null_space(grid.nodes[m])
    extra = np.zeros((n_nodes, 6, n_nodes, 6))
    for a in range(n_nodes):
        extra[a, :, a, :] = 0.5 * dq.EMBED6.T @ dq.zmat8(bracket[a]) @ proj[a]
    return flat + extra.reshape(6 * n_nodes, 6 * n_nodes)[np.ix_(idx, idx)]


def level_matrix_prev(grid, pairs, m, idx):
    """Derivative of the level-m equations w.r.t. row m-1 (m >= 1)."""
    amb = _collect_blocks(grid, pairs[m - 1], (2, 3), (0, 1))
    return _project(grid, amb, grid.nodes[m], grid.nodes[m - 1], idx)


def _mayer_gradient(grid, ocp, idx):
    """Masked gradient of the Mayer term w.r.t. the final row."""
    diff = 2.0 * ocp.s_q * (grid.nodes[-1] - ocp.target)
    proj = dq.beam_null_space(grid.nodes[-1])
    return np.einsum("aij,ai->aj", proj, diff).reshape(-1)[idx]


def _solve_t(mat, rhs, m):
    try:
        return np.linalg.solve(mat.T, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(f"adjoint solve at time level {m}: {exc}") from exc


def beam_backward_sweep(grid, mat, ocp, controls):
    """Adjoint covectors lam^0..lam^{N-1}, one masked vector per time level.

    Solves A_{N-1}^T lam^{N-1} = -dJ/dxi^N and then, marching backwards,
    A_m^T lam^m = -B_{m+1}^T lam^{m+1} - C_{m+2}^T lam^{m+2}, where A, B, C
    are the derivatives of the level equations with respect to the next,
    the same, and the previous row, all evaluated on the converged grid.
    """
    n_steps = grid.n_steps
    idx = _full_mask(grid, ocp.free_mask).reshape(-1)
    pairs = pair_jacobians(grid, mat)
    forces = assemble_cell_forces(grid, mat, controls)
    lam = np.zeros((n_steps, int(idx.sum())))
    rhs = -_mayer_gradient(grid, ocp, idx)
    for m in range(n_steps - 1, -1, -1):
        lam[m] = _solve_t(level_matrix_next(grid, pairs, m, idx), rhs, m)
        if m == 0:
            break
        rhs = -(level_matrix_same(grid, mat, pairs, forces, controls, m, idx).T
                @ lam[m])
        if m + 1 <= n_steps - 1:
            rhs -= level_matrix_prev(grid, pairs, m + 1, idx).T @ lam[m + 1]
    return lam


def scatter_adjoint(grid, ocp, lam):
    """Unpack masked adjoint rows to per-node vectors, shape (N, A+1, 6)."""
    idx = _full_mask(grid, ocp.free_mask).reshape(-1)
    n_nodes = grid.n_space + 1
    out = np.zeros((lam.shape[0], n_nodes * 6))
    out[:, idx] = lam
    return out.reshape(lam.shape[0], n_nodes, 6)


def _control_direction(grid, row, idx):
    """Masked derivative of one level's equations w.r.t. the torque value."""
    n_nodes = grid.n_space + 1
    vec = dq.cmat8(row[0]).T @ _control_image(1.0, grid.dt, grid.ds)
    out = np.zeros((n_nodes, 6))
    out[0] = dq.beam_null_space(row[0]).T @ vec
    return out.reshape(-1)[idx]


def beam_input_gradient(grid, ocp, controls, lam):
    """Reduced objective gradient over the torque sequence, shape (N,).

    u_n drives the level-n equations through the root covector at row n and
    the level-(n+1) equations through the matching covector at row n+1 (the
    latter is absent for the last interval).  The first entry is fixed data
    and reports zero.
    """
    n_steps = grid.n_steps
    idx = _full_mask(grid, ocp.free_mask).reshape(-1)
    grad = ocp.r * np.asarray(controls, dtype=float)
    for n in range(1, n_steps):
        grad[n] += lam[n] @ _control_direction(grid, grid.nodes[n], idx)
        if n + 1 <= n_steps - 1:
            grad[n] += lam[n + 1] @ _control_direction(grid, grid.nodes[n + 1], idx)
    grad[0] = 0.0
    return grad


def beam_reduced_gradient(grid, mat, ocp, controls):
    """Objective value and adjoint gradient on an already-integrated grid."""
    lam = beam_backward_sweep(grid, mat, ocp, controls)
    return (beam_objective(grid, ocp, controls),
            beam_input_gradient(grid, ocp, controls, lam))
