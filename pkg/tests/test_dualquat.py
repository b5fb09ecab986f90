import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varopt import dualquat as dq


def rand_unit_placement(rng):
    a = rng.normal(size=8)
    a[:4] /= np.linalg.norm(a[:4])
    a[4:] -= (a[:4] @ a[4:]) * a[:4]
    return a


def test_hamilton_table():
    i = np.array([0.0, 1, 0, 0])
    j = np.array([0.0, 0, 1, 0])
    k = np.array([0.0, 0, 0, 1])
    assert np.allclose(dq.q_mul(i, j), k)
    assert np.allclose(dq.q_mul(j, i), -k)
    assert np.allclose(dq.q_mul(j, k), i)
    assert np.allclose(dq.q_mul(k, i), j)
    assert np.allclose(dq.q_mul(i, i), -np.array([1.0, 0, 0, 0]))


def test_identity_neutral():
    rng = np.random.default_rng(3)
    a = rng.normal(size=8)
    assert np.allclose(dq.dq_mul(dq.IDENTITY8, a), a)
    assert np.allclose(dq.dq_mul(a, dq.IDENTITY8), a)


coords = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@given(st.lists(coords, min_size=24, max_size=24))
@settings(max_examples=100, deadline=None)
def test_product_algebra(vals):
    a, b, c = np.array(vals).reshape(3, 8)
    # associativity and the conjugation anti-automorphism
    assert np.allclose(dq.dq_mul(dq.dq_mul(a, b), c), dq.dq_mul(a, dq.dq_mul(b, c)), atol=1e-10)
    assert np.allclose(dq.dq_conj(dq.dq_mul(a, b)),
                       dq.dq_mul(dq.dq_conj(b), dq.dq_conj(a)), atol=1e-12)


def test_matrix_helpers_match_products():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a, b = rng.normal(size=(2, 8))
        assert np.allclose(dq.lmat8(a) @ b, dq.dq_mul(a, b), atol=1e-13)
        assert np.allclose(dq.rmat8(b) @ a, dq.dq_mul(a, b), atol=1e-13)
        assert np.allclose(dq.cmat8(a) @ b, dq.dq_mul(dq.dq_conj(a), b), atol=1e-13)
        # defining identities of the pairing matrices
        assert np.allclose(dq.lmat8(a).T @ b, dq.zmat8(b) @ a, atol=1e-13)
        assert np.allclose(dq.rmat8(a).T @ b, dq.xmat8(b) @ a, atol=1e-13)


def test_left_mul_matrix_preserves_seminorm():
    rng = np.random.default_rng(5)
    u = rand_unit_placement(rng)
    a = rand_unit_placement(rng)
    prod = dq.left_mul_matrix(u) @ a
    assert abs(dq.dq_seminorm(prod) - 1.0) < 1e-12


def test_seminorm_matches_dual_sqrt():
    # a (x) conj(a) is a dual scalar; its dual square root has real part
    # |q_r| and dual part <q_r, q_eps>/|q_r|, and the seminorm is their sum.
    rng = np.random.default_rng(7)
    a = rng.normal(size=8)
    s = dq.dq_mul(a, dq.dq_conj(a))
    real, dual = s[0], s[4]
    assert np.allclose(s[1:4], 0) and np.allclose(s[5:8], 0)
    expected = np.sqrt(real) + dual / (2 * np.sqrt(real))
    assert abs(dq.dq_seminorm(a) - expected) < 1e-12


def test_seminorm_degenerate():
    with pytest.raises(dq.DegenerateRealPart):
        dq.dq_seminorm(np.array([0.0, 0, 0, 0, 1, 2, 3, 4]))


def test_unity_residual_values():
    c1, c2 = dq.unity_residual(dq.IDENTITY8)
    assert c1 == 0.0 and c2 == 0.0
    c1, c2 = dq.unity_residual(2.0 * dq.IDENTITY8)
    assert c1 == 3.0 and c2 == 0.0


def test_from_screw_half_turn():
    s = dq.from_screw(np.pi, np.array([0.0, 0, 1]), np.zeros(3))
    assert np.allclose(s, [0, 0, 0, 1, 0, 0, 0, 0], atol=1e-15)
    with pytest.raises(dq.NonUnitAxis):
        dq.from_screw(0.3, np.array([0.0, 0, 2]), np.zeros(3))


def test_from_screw_rotates_vectors():
    rng = np.random.default_rng(13)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    theta = 1.234
    s = dq.from_screw(theta, axis, np.zeros(3))
    v = rng.normal(size=3)
    rotated = dq.q_mul(dq.q_mul(s[:4], np.concatenate([[0.0], v])), dq.q_conj(s[:4]))[1:]
    # Rodrigues formula as the independent reference
    expected = (v * np.cos(theta) + np.cross(axis, v) * np.sin(theta)
                + axis * (axis @ v) * (1 - np.cos(theta)))
    assert np.allclose(rotated, expected, atol=1e-12)


def test_translation_round_trip():
    rng = np.random.default_rng(17)
    t = rng.normal(size=3)
    s = dq.from_screw(0.9, np.array([1.0, 0, 0]), t)
    assert np.allclose(dq.translation_of(s), t, atol=1e-13)
    assert abs(dq.dq_seminorm(s) - 1.0) < 1e-13


def test_exp_matches_screw_for_pure_rotation():
    theta = 0.7
    e = dq.dq_exp_tangent(np.array([0, 0, theta, 0, 0, 0.0]))
    s = dq.from_screw(theta, np.array([0.0, 0, 1]), np.zeros(3))
    assert np.allclose(e, s, atol=1e-15)


def test_exp_pure_translation():
    v = np.array([0.4, -0.2, 0.1])
    e = dq.dq_exp_tangent(np.concatenate([np.zeros(3), v]))
    assert np.allclose(e[:4], [1, 0, 0, 0])
    assert np.allclose(e[4:], np.concatenate([[0.0], 0.5 * v]))
    assert np.allclose(dq.translation_of(e), v, atol=1e-15)


def test_exp_produces_unit_placements():
    rng = np.random.default_rng(19)
    xi = rng.normal(size=(200, 6))
    e = dq.dq_exp_tangent(xi)
    c1, c2 = dq.unity_residual(e)
    assert np.max(np.abs(c1)) < 1e-14
    assert np.max(np.abs(c2)) < 1e-14


@pytest.mark.parametrize("scale", [1.0, 1e-2, 1e-3, 2e-4, 1e-5, 0.0])
def test_exp_jacobian_matches_fd(scale):
    # covers both the closed-form branch and the small-angle series branch
    rng = np.random.default_rng(23)
    xi = rng.normal(size=6)
    xi[:3] *= scale
    jac = dq.dq_exp_jacobian(xi)
    fd = np.zeros((8, 6))
    eps = 1e-6
    for m in range(6):
        step = np.zeros(6)
        step[m] = eps
        fd[:, m] = (dq.dq_exp_tangent(xi + step) - dq.dq_exp_tangent(xi - step)) / (2 * eps)
    assert np.max(np.abs(jac - fd)) < 1e-8


def test_exp_jacobian_at_zero():
    assert np.allclose(dq.dq_exp_jacobian(np.zeros(6)), 0.5 * dq.EMBED6)


def test_null_space_at_identity():
    assert np.allclose(dq.beam_null_space(dq.IDENTITY8), 0.5 * dq.EMBED6)


def test_null_space_annihilated_by_constraints():
    rng = np.random.default_rng(29)
    worst = 0.0
    for _ in range(1000):
        a = rand_unit_placement(rng)
        prod = dq.unity_jacobian(a) @ dq.beam_null_space(a)
        worst = max(worst, np.max(np.abs(prod)))
    assert worst < 1e-12


def test_unity_jacobian_matches_fd():
    rng = np.random.default_rng(31)
    a = rng.normal(size=8)
    jac = dq.unity_jacobian(a)
    eps = 1e-7
    fd = np.zeros((2, 8))
    for m in range(8):
        step = np.zeros(8)
        step[m] = eps
        hi = dq.unity_residual(a + step)
        lo = dq.unity_residual(a - step)
        fd[:, m] = [(hi[0] - lo[0]) / (2 * eps), (hi[1] - lo[1]) / (2 * eps)]
    assert np.max(np.abs(jac - fd)) < 1e-7


def test_long_run_update_drift():
    # 1e4 right-multiplicative exponential updates must hold the unit
    # constraints to 1e-9 without any renormalization
    rng = np.random.default_rng(37)
    a = dq.from_screw(0.4, np.array([0.0, 1, 0]), np.array([0.1, 0, -0.2]))
    for _ in range(10000):
        xi = rng.normal(size=6) * 0.05
        a = dq.dq_mul(a, dq.dq_exp_tangent(xi))
    c1, c2 = dq.unity_residual(a)
    assert abs(c1) < 1e-9
    assert abs(c2) < 1e-9
    assert abs(dq.dq_seminorm(a) - 1.0) < 1e-9


def test_rotation_angle():
    assert abs(dq.rotation_angle(np.array([np.cos(0.3), np.sin(0.3), 0, 0])) - 0.6) < 1e-14
