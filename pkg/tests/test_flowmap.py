import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from vpfm.flowmap import (
    ParticleSet,
    SegmentClock,
    batched_det,
    batched_matmul,
    connect_jacobians,
    find_unstable,
    push_forward_gradient,
    push_forward_vorticity,
    rk4_march,
)
from vpfm.grid import GridDesc, sample_faces_from_function


def affine_velocity(desc, A, c):
    A = np.asarray(A, float)
    return sample_faces_from_function(desc, lambda x: (x - c) @ A.T)


def abc_velocity(desc):
    def fn(x):
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([np.sin(Z) + np.cos(Y), np.sin(X) + np.cos(Z), np.sin(Y) + np.cos(X)], -1)
    return sample_faces_from_function(desc, fn)


def cellular_velocity(desc):
    def fn(x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y)], -1)
    return sample_faces_from_function(desc, fn)


def march(p, desc, u, dt, steps, use_hessian=True):
    for _ in range(steps):
        rk4_march(p, desc, u, dt, use_hessian)


def test_segment_clock_schedule():
    clk = SegmentClock(4, 2)
    longs, shorts = [], []
    for _ in range(9):
        longs.append(clk.long_due())
        shorts.append(clk.short_due())
        clk.advance()
    assert longs == [True, False, False, False, True, False, False, False, True]
    assert shorts == [True, False] * 4 + [True]
    with pytest.raises(ValueError):
        SegmentClock(2, 3)


def test_affine_field_matches_matrix_exponential():
    desc = GridDesc((16, 16, 16), 1.0 / 16)
    A = np.array([[0.3, -0.8, 0.1], [0.5, -0.1, 0.2], [-0.2, 0.4, -0.2]])
    c = np.full(3, 0.5)
    u = affine_velocity(desc, A, c)
    p = ParticleSet(np.array([[0.5, 0.5, 0.5], [0.52, 0.47, 0.51]]))
    dt = 0.05
    march(p, desc, u, dt, 4)
    assert np.allclose(p.F_bc, expm(A * 4 * dt), atol=1e-7)
    assert np.allclose(p.T_bc, expm(-A * 4 * dt), atol=1e-7)
    # zero Hessian of an affine field keeps the map Hessian at zero
    assert np.abs(p.gradF_bc).max() < 1e-9
    x0 = np.array([0.52, 0.47, 0.51]) - c
    assert np.allclose(p.pos[1] - c, expm(A * 4 * dt) @ x0, atol=1e-7)


def test_quarter_turn_rigid_rotation():
    desc = GridDesc((32, 32), 1.0 / 32)
    rate = 2.0
    A = np.array([[0.0, -rate], [rate, 0.0]])
    u = affine_velocity(desc, A, np.array([0.5, 0.5]))
    p = ParticleSet(np.array([[0.7, 0.5]]))
    steps = 200
    march(p, desc, u, (np.pi / 2) / rate / steps, steps)
    assert np.allclose(p.pos[0], [0.5, 0.7], atol=1e-9)
    assert np.allclose(p.F_bc[0], [[0.0, -1.0], [1.0, 0.0]], atol=1e-9)


def test_forward_backward_jacobians_stay_inverse():
    desc = GridDesc((32, 32, 32), 2 * np.pi / 32)
    u = abc_velocity(desc)
    rng = np.random.default_rng(1)
    p = ParticleSet(rng.uniform(2.0, 4.0, (50, 3)))
    march(p, desc, u, 0.02, 20)
    drift = np.abs(batched_matmul(p.F_bc, p.T_bc) - np.eye(3)).max()
    assert drift < 1e-6


def test_split_segment_equals_unsplit_march():
    desc = GridDesc((32, 32, 32), 2 * np.pi / 32)
    u = abc_velocity(desc)
    x0 = np.array([[3.0, 3.1, 2.9], [2.5, 3.5, 3.2]])
    whole = ParticleSet(x0)
    march(whole, desc, u, 0.03, 10)
    split = ParticleSet(x0)
    march(split, desc, u, 0.03, 4)
    split.reset_short()
    march(split, desc, u, 0.03, 6)
    F_ac, T_ac = connect_jacobians(split)
    assert np.allclose(F_ac, whole.F_bc, atol=1e-12)
    assert np.allclose(T_ac, whole.T_bc, atol=1e-12)


def _fd_map_derivative(desc, u, x0, dt, steps, h=1e-5):
    """d F_ij / d X_m by central differences of the marched Jacobian."""
    d = x0.size
    out = np.zeros((d, d, d))
    for m in range(d):
        e = np.zeros(d)
        e[m] = h
        pp = ParticleSet(np.stack([x0 + e, x0 - e]))
        march(pp, desc, u, dt, steps)
        out[:, :, m] = (pp.F_bc[0] - pp.F_bc[1]) / (2 * h)
    return out


def quadratic_velocity(desc, rng):
    """Random quadratic field; its B-spline interpolant has an exactly constant Hessian."""
    A = rng.normal(size=(3, 3))
    Q = rng.normal(size=(3, 3, 3))
    Q = 0.5 * (Q + Q.transpose(0, 2, 1))
    c = np.full(3, 0.5)

    def fn(x):
        r = x - c
        return r @ A.T + 0.5 * np.einsum("ikl,...k,...l->...i", Q, r, r)
    return sample_faces_from_function(desc, fn)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_evolved_hessian_matches_finite_difference_of_jacobian(seed):
    rng = np.random.default_rng(seed)
    desc = GridDesc((16, 16, 16), 1.0 / 16)
    u = quadratic_velocity(desc, rng)
    x0 = rng.uniform(0.45, 0.55, 3)
    p = ParticleSet(x0[None, :])
    dt, steps = 0.01, 5
    march(p, desc, u, dt, steps)
    # G is the derivative w.r.t. current position: dF/dX = G . F
    dF_dX = np.einsum("ijl,lm->ijm", p.gradF_bc[0], p.F_bc[0])
    ref = _fd_map_derivative(desc, u, x0, dt, steps)
    rel = np.abs(dF_dX - ref).max() / np.abs(ref).max()
    assert rel < 1e-3


def test_hessian_off_keeps_map_hessian_zero():
    desc = GridDesc((32, 32, 32), 2 * np.pi / 32)
    p = ParticleSet(np.array([[3.0, 3.0, 3.0]]))
    march(p, desc, abc_velocity(desc), 0.05, 3, use_hessian=False)
    assert not np.any(p.gradF_bc)
    assert not np.allclose(p.F_bc[0], np.eye(3))


def test_planar_3d_flow_reduces_to_2d():
    n = 32
    d2 = GridDesc((n, n), 2 * np.pi / n)
    d3 = GridDesc((n, n, 8), 2 * np.pi / n)
    u2 = cellular_velocity(d2)

    def fn3(x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y), 0 * X], -1)

    u3 = sample_faces_from_function(d3, fn3)
    p2 = ParticleSet(np.array([[2.0, 2.5]]))
    p3 = ParticleSet(np.array([[2.0, 2.5, 1.0]]))
    march(p2, d2, u2, 0.05, 10)
    march(p3, d3, u3, 0.05, 10)
    assert np.allclose(p3.pos[0, :2], p2.pos[0], atol=1e-12)
    assert np.allclose(p3.F_bc[0, :2, :2], p2.F_bc[0], atol=1e-12)
    assert np.allclose(p3.F_bc[0, 2], [0, 0, 1], atol=1e-12)


def test_push_forward_vorticity():
    p = ParticleSet(np.zeros((2, 3)))
    p.omega_a = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    p.F_ab[:] = np.diag([2.0, 1.0, 0.5])
    p.F_bc[:] = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    w = push_forward_vorticity(p)
    F_ac = p.F_bc @ p.F_ab
    assert np.allclose(w, np.einsum("nij,nj->ni", F_ac, p.omega_a))
    p2 = ParticleSet(np.zeros((3, 2)))
    p2.omega_a = np.array([1.0, -2.0, 3.0])
    p2.F_bc[:] = [[2.0, 1.0], [0.0, 0.5]]
    # 2D: no stretching, the value is carried unchanged
    assert np.array_equal(push_forward_vorticity(p2), p2.omega_a)


def test_push_forward_gradient_2d_uses_backward_jacobian():
    p = ParticleSet(np.zeros((1, 2)))
    p.grad_omega_b = np.array([[1.0, 2.0]])
    p.T_bc[0] = [[1.0, 0.5], [0.0, 2.0]]
    g = push_forward_gradient(p)
    assert np.allclose(g[0], p.T_bc[0].T @ p.grad_omega_b[0])


def test_push_forward_gradient_3d_hessian_term():
    rng = np.random.default_rng(3)
    p = ParticleSet(np.zeros((1, 3)))
    p.omega_b = rng.normal(size=(1, 3))
    p.grad_omega_b = rng.normal(size=(1, 3, 3))
    p.F_bc[0] = np.eye(3) + 0.1 * rng.normal(size=(3, 3))
    p.T_bc[0] = np.linalg.inv(p.F_bc[0])
    p.gradF_bc[0] = rng.normal(size=(3, 3, 3))
    with_h = push_forward_gradient(p, True)[0]
    without = push_forward_gradient(p, False)[0]
    assert np.allclose(without, p.F_bc[0] @ p.grad_omega_b[0] @ p.T_bc[0])
    assert np.allclose(with_h - without, np.einsum("ikl,k->il", p.gradF_bc[0], p.omega_b[0]))


def test_batched_helpers_match_numpy():
    rng = np.random.default_rng(4)
    for d in (2, 3):
        a = rng.normal(size=(7, d, d))
        b = rng.normal(size=(7, d, d))
        assert np.allclose(batched_matmul(a, b), a @ b)
        assert np.allclose(batched_det(a), np.linalg.det(a))


def test_find_unstable_flags_inverted_and_nonfinite():
    p = ParticleSet(np.zeros((4, 2)))
    p.F_bc[1] = [[-1.0, 0.0], [0.0, 1.0]]
    p.pos[2, 0] = np.nan
    p.gradF_bc[3, 0, 0, 0] = np.inf
    assert list(find_unstable(p)) == [1, 2, 3]


def test_reset_short_folds_prefix():
    p = ParticleSet(np.zeros((1, 2)))
    p.F_ab[0] = [[2.0, 0.0], [0.0, 0.5]]
    p.T_ab[0] = [[0.5, 0.0], [0.0, 2.0]]
    p.F_bc[0] = [[1.0, 1.0], [0.0, 1.0]]
    p.T_bc[0] = [[1.0, -1.0], [0.0, 1.0]]
    F_ac, T_ac = connect_jacobians(p)
    p.reset_short()
    assert np.allclose(p.F_ab, F_ac)
    assert np.allclose(p.T_ab, T_ac)
    assert np.allclose(p.F_bc[0], np.eye(2))
    assert np.allclose(p.F_ab[0] @ p.T_ab[0], np.eye(2))
