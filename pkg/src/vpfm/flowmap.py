"""
Particle flow maps: RK4 marching of positions, forward/backward Jacobians and
the forward-map Hessian, two-segment map bookkeeping and push-forward of
vorticity and its gradient.

Particle state is stored as a structure of arrays (``ParticleSet``).  Index
conventions follow ``grad[i, l] = d f_i / d x_l`` and
``hess[i, j, l] = d F_ij / d x_l`` (derivative with respect to the current
position).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .grid import FieldSampler, GridDesc, sample_2d, sample_3d


@dataclass
class SegmentClock:
    """Counters deciding when the long and short maps are reinitialized."""

    n_long: int
    n_short: int = 1
    step: int = 0

    def __post_init__(self):
        if not (1 <= self.n_short <= self.n_long):
            raise ValueError(
                f"need 1 <= n_short <= n_long, got {self.n_short}, {self.n_long}"
            )

    @property
    def step_in_long(self) -> int:
        return self.step % self.n_long

    @property
    def step_in_short(self) -> int:
        return self.step % self.n_short

    def long_due(self) -> bool:
        return self.step_in_long == 0

    def short_due(self) -> bool:
        return self.step_in_short == 0

    def advance(self) -> None:
        self.step += 1


class ParticleSet:
    """Vortex particles with their flow-map state.

    ``omega_*`` are scalars in 2D and 3-vectors in 3D; ``grad_omega_b`` is a
    2-vector in 2D and a 3x3 matrix in 3D.
    """

    def __init__(self, pos: np.ndarray):
        pos = np.array(pos, dtype=float, order="C")
        n, d = pos.shape
        self.dim = d
        self.pos = pos
        vshape = (n,) if d == 2 else (n, 3)
        gshape = (n, 2) if d == 2 else (n, 3, 3)
        self.omega_a = np.zeros(vshape)
        self.omega_b = np.zeros(vshape)
        self.grad_omega_b = np.zeros(gshape)
        eye = np.broadcast_to(np.eye(d), (n, d, d))
        self.F_ab = eye.copy()
        self.T_ab = eye.copy()
        self.F_bc = eye.copy()
        self.T_bc = eye.copy()
        self.gradF_bc = np.zeros((n, d, d, d))

    def __len__(self) -> int:
        return self.pos.shape[0]

    def reset_long(self) -> None:
        """All maps back to identity (start of a long segment)."""
        eye = np.eye(self.dim)
        for m in (self.F_ab, self.T_ab, self.F_bc, self.T_bc):
            m[:] = eye
        self.gradF_bc[:] = 0.0

    def reset_short(self) -> None:
        """Fold the finished short segment into the prefix and restart it."""
        F_ac, T_ac = connect_jacobians(self)
        self.F_ab = F_ac
        self.T_ab = T_ac
        eye = np.eye(self.dim)
        self.F_bc[:] = eye
        self.T_bc[:] = eye
        self.gradF_bc[:] = 0.0

    def snapshot(self) -> dict:
        return {k: v.copy() for k, v in self.__dict__.items() if isinstance(v, np.ndarray)}

    def restore(self, snap: dict, idx=None) -> None:
        for k, v in snap.items():
            if idx is None:
                setattr(self, k, v.copy())
            else:
                getattr(self, k)[idx] = v[idx]


@njit(cache=True, parallel=True)
def batched_matmul(a, b):
    """``a[n] @ b[n]`` for stacks of small square matrices."""
    n, d, _ = a.shape
    out = np.empty_like(a)
    for p in prange(n):
        for i in range(d):
            for j in range(d):
                s = 0.0
                for k in range(d):
                    s += a[p, i, k] * b[p, k, j]
                out[p, i, j] = s
    return out


@njit(cache=True, parallel=True)
def batched_det(a):
    n, d, _ = a.shape
    out = np.empty(n)
    for p in prange(n):
        if d == 2:
            out[p] = a[p, 0, 0] * a[p, 1, 1] - a[p, 0, 1] * a[p, 1, 0]
        else:
            out[p] = (a[p, 0, 0] * (a[p, 1, 1] * a[p, 2, 2] - a[p, 1, 2] * a[p, 2, 1])
                      - a[p, 0, 1] * (a[p, 1, 0] * a[p, 2, 2] - a[p, 1, 2] * a[p, 2, 0])
                      + a[p, 0, 2] * (a[p, 1, 0] * a[p, 2, 1] - a[p, 1, 1] * a[p, 2, 0]))
    return out


def connect_jacobians(p: ParticleSet) -> tuple[np.ndarray, np.ndarray]:
    """Long-map Jacobians from prefix and suffix: F_ac = F_bc F_ab, T_ac = T_ab T_bc."""
    return batched_matmul(p.F_bc, p.F_ab), batched_matmul(p.T_ab, p.T_bc)


def push_forward_vorticity(p: ParticleSet, F_ac: np.ndarray | None = None) -> np.ndarray:
    """Current particle vorticity carried along the long map."""
    if p.dim == 2:
        return p.omega_a.copy()
    if F_ac is None:
        F_ac = connect_jacobians(p)[0]
    return np.einsum("nij,nj->ni", F_ac, p.omega_a)


def push_forward_gradient(p: ParticleSet, use_hessian: bool = True) -> np.ndarray:
    """Current vorticity gradient carried along the short map."""
    if p.dim == 2:
        return np.einsum("nml,nm->nl", p.T_bc, p.grad_omega_b)
    out = batched_matmul(batched_matmul(p.F_bc, p.grad_omega_b), p.T_bc)
    if use_hessian:
        out += np.einsum("nikl,nk->nil", p.gradF_bc, p.omega_b)
    return out


# ---------------------------------------------------------------------------
# RK4 marching


@njit(cache=True, inline="always")
def _rhs(d, gu, H, F, T, G, dF, dT, dG, use_hess):
    # dF/dt = gu F ; dT/dt = -T gu
    for i in range(d):
        for j in range(d):
            sf = 0.0
            st = 0.0
            for k in range(d):
                sf += gu[i, k] * F[k, j]
                st -= T[i, k] * gu[k, j]
            dF[i, j] = sf
            dT[i, j] = st
    if use_hess:
        # dG_ijl/dt = -G_ijk gu_kl + gu_ik G_kjl + H_ilk F_kj
        for i in range(d):
            for j in range(d):
                for l in range(d):
                    s = 0.0
                    for k in range(d):
                        s += -G[i, j, k] * gu[k, l] + gu[i, k] * G[k, j, l] + H[i, l, k] * F[k, j]
                    dG[i, j, l] = s


@njit(cache=True, inline="always")
def _sample_2d(a0, a1, _unused, offs, origin, inv_dx, x, v, gu, H):
    v0, f0 = sample_2d(a0, offs[0], origin, inv_dx, x, gu[0], H[0])
    v1, f1 = sample_2d(a1, offs[1], origin, inv_dx, x, gu[1], H[1])
    v[0] = v0
    v[1] = v1
    return f0 or f1


@njit(cache=True, inline="always")
def _sample_3d(a0, a1, a2, offs, origin, inv_dx, x, v, gu, H):
    v0, f0 = sample_3d(a0, offs[0], origin, inv_dx, x, gu[0], H[0])
    v1, f1 = sample_3d(a1, offs[1], origin, inv_dx, x, gu[1], H[1])
    v2, f2 = sample_3d(a2, offs[2], origin, inv_dx, x, gu[2], H[2])
    v[0] = v0
    v[1] = v1
    v[2] = v2
    return f0 or f1 or f2


def _make_march_one(d, sample):
    @njit(inline="always")
    def march_one(a0, a1, a2, offs, origin, inv_dx, dt, use_hess, x0, F0, T0, G0):
        return _march_body(d, sample, a0, a1, a2, offs, origin, inv_dx, dt,
                           use_hess, x0, F0, T0, G0)

    return march_one


@njit(inline="always")
def _march_body(d, sample, a0, a1, a2, offs, origin, inv_dx, dt, use_hess,
                x0, F0, T0, G0):
    """Classical RK4 on (x, F, T, G) sharing stage velocities; in-place."""
    x = np.empty(d)
    F = np.empty((d, d))
    T = np.empty((d, d))
    G = np.zeros((d, d, d))
    v = np.empty(d)
    gu = np.empty((d, d))
    H = np.empty((d, d, d))
    dF = np.empty((d, d))
    dT = np.empty((d, d))
    dG = np.zeros((d, d, d))
    ax = np.zeros(d)
    aF = np.zeros((d, d))
    aT = np.zeros((d, d))
    aG = np.zeros((d, d, d))
    clamped = False
    for stage in range(4):
        if stage == 0:
            c = 0.0
        elif stage == 3:
            c = 1.0
        else:
            c = 0.5
        w = 1.0 / 6.0 if (stage == 0 or stage == 3) else 1.0 / 3.0
        # stage state from the previous stage derivative
        for i in range(d):
            x[i] = x0[i] + c * dt * v[i] if stage > 0 else x0[i]
            for j in range(d):
                F[i, j] = F0[i, j] + c * dt * dF[i, j] if stage > 0 else F0[i, j]
                T[i, j] = T0[i, j] + c * dt * dT[i, j] if stage > 0 else T0[i, j]
                if use_hess:
                    for l in range(d):
                        G[i, j, l] = G0[i, j, l] + c * dt * dG[i, j, l] if stage > 0 else G0[i, j, l]
        fl = sample(a0, a1, a2, offs, origin, inv_dx, x, v, gu, H)
        clamped = clamped or fl
        _rhs(d, gu, H, F, T, G, dF, dT, dG, use_hess)
        for i in range(d):
            ax[i] += w * v[i]
            for j in range(d):
                aF[i, j] += w * dF[i, j]
                aT[i, j] += w * dT[i, j]
                if use_hess:
                    for l in range(d):
                        aG[i, j, l] += w * dG[i, j, l]
    for i in range(d):
        x0[i] += dt * ax[i]
        for j in range(d):
            F0[i, j] += dt * aF[i, j]
            T0[i, j] += dt * aT[i, j]
            if use_hess:
                for l in range(d):
                    G0[i, j, l] += dt * aG[i, j, l]
    return clamped


_march_one_2d = _make_march_one(2, _sample_2d)
_march_one_3d = _make_march_one(3, _sample_3d)


@njit(cache=True, parallel=True)
def _march_2d(a0, a1, offs, origin, inv_dx, dt, use_hess, pos, F, T, G, clamped):
    for p in prange(pos.shape[0]):
        clamped[p] = _march_one_2d(a0, a1, a1, offs, origin, inv_dx, dt,
                                   use_hess, pos[p], F[p], T[p], G[p])


@njit(cache=True, parallel=True)
def _march_3d(a0, a1, a2, offs, origin, inv_dx, dt, use_hess, pos, F, T, G, clamped):
    for p in prange(pos.shape[0]):
        clamped[p] = _march_one_3d(a0, a1, a2, offs, origin, inv_dx, dt,
                                   use_hess, pos[p], F[p], T[p], G[p])


@dataclass
class MarchReport:
    clamped: int
    unstable: np.ndarray  # indices of particles with det F <= 0 or non-finite state


def rk4_march(
    p: ParticleSet,
    desc: GridDesc,
    u_mid: list[np.ndarray],
    dt: float,
    use_hessian: bool = True,
    sampler: FieldSampler | None = None,
) -> MarchReport:
    """Advance positions, F_bc, T_bc and gradF_bc by one RK4 step through u_mid."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    s = sampler or FieldSampler.velocity(desc, u_mid)
    clamped = np.zeros(len(p), dtype=np.bool_)
    args = (s.offs, s.origin, s.inv_dx, float(dt), bool(use_hessian),
            p.pos, p.F_bc, p.T_bc, p.gradF_bc, clamped)
    if p.dim == 2:
        _march_2d(*s.padded, *args)
    else:
        _march_3d(*s.padded, *args)
    return MarchReport(int(clamped.sum()), find_unstable(p))


def find_unstable(p: ParticleSet) -> np.ndarray:
    det = batched_det(p.F_bc)
    bad = ~np.isfinite(det) | (det <= 0.0)
    bad |= ~np.isfinite(p.pos).all(axis=1)
    bad |= ~np.isfinite(p.gradF_bc).reshape(len(p), -1).all(axis=1)
    return np.flatnonzero(bad)
