"""
Grid <-> particle transfers for vorticity.

G2P evaluates the quadratic B-spline interpolant and its gradient.  P2G is the
gradient-augmented, weight-normalized scatter

    w_g = sum_p s_gp (w_p + grad w_p . (x_g - x_p)) / sum_p s_gp

with empty nodes (zero total weight) set to zero.
"""
from __future__ import annotations

import logging

import numpy as np
from numba import njit

from .flowmap import ParticleSet
from .grid import PAD, FieldSampler, GridDesc, bspline_1d, padded_offsets

log = logging.getLogger(__name__)


def g2p(desc: GridDesc, omega: list[np.ndarray], pos: np.ndarray):
    """Interpolated vorticity and its gradient at ``pos``.

    Returns ``(w, grad)`` with shapes ``(n,)``/``(n, 2)`` in 2D and
    ``(n, 3)``/``(n, 3, 3)`` in 3D.
    """
    s = FieldSampler(desc, omega, desc.vort_specs())
    val, grad = s.value_and_gradient(pos)
    if desc.dim == 2:
        return val[:, 0], grad[:, 0, :]
    return val, grad


def g2p_value(desc: GridDesc, omega: list[np.ndarray], pos: np.ndarray) -> np.ndarray:
    val = FieldSampler(desc, omega, desc.vort_specs()).value(pos)
    return val[:, 0] if desc.dim == 2 else val


@njit(cache=True)
def _scatter_2d(acc, wacc, off, origin, inv_dx, dx, pos, val, grad):
    nx, ny = acc.shape
    for p in range(pos.shape[0]):
        sx = (pos[p, 0] - origin[0]) * inv_dx - off[0]
        sy = (pos[p, 1] - origin[1]) * inv_dx - off[1]
        sx = min(max(sx, 0.5), nx - 1.5 - 1e-9)
        sy = min(max(sy, 0.5), ny - 1.5 - 1e-9)
        bx, wx0, wx1, wx2, _a, _b, _c = bspline_1d(sx)
        by, wy0, wy1, wy2, _d, _e, _f = bspline_1d(sy)
        wx = (wx0, wx1, wx2)
        wy = (wy0, wy1, wy2)
        for i in range(3):
            rx = (bx + i - sx) * dx
            for j in range(3):
                ry = (by + j - sy) * dx
                w = wx[i] * wy[j]
                acc[bx + i, by + j] += w * (val[p] + grad[p, 0] * rx + grad[p, 1] * ry)
                wacc[bx + i, by + j] += w


@njit(cache=True)
def _scatter_3d(acc, wacc, off, origin, inv_dx, dx, pos, val, grad):
    nx, ny, nz = acc.shape
    for p in range(pos.shape[0]):
        sx = (pos[p, 0] - origin[0]) * inv_dx - off[0]
        sy = (pos[p, 1] - origin[1]) * inv_dx - off[1]
        sz = (pos[p, 2] - origin[2]) * inv_dx - off[2]
        sx = min(max(sx, 0.5), nx - 1.5 - 1e-9)
        sy = min(max(sy, 0.5), ny - 1.5 - 1e-9)
        sz = min(max(sz, 0.5), nz - 1.5 - 1e-9)
        bx, wx0, wx1, wx2, _a, _b, _c = bspline_1d(sx)
        by, wy0, wy1, wy2, _d, _e, _f = bspline_1d(sy)
        bz, wz0, wz1, wz2, _g, _h, _i = bspline_1d(sz)
        wx = (wx0, wx1, wx2)
        wy = (wy0, wy1, wy2)
        wz = (wz0, wz1, wz2)
        for i in range(3):
            rx = (bx + i - sx) * dx
            for j in range(3):
                ry = (by + j - sy) * dx
                wxy = wx[i] * wy[j]
                base = val[p] + grad[p, 0] * rx + grad[p, 1] * ry
                for k in range(3):
                    rz = (bz + k - sz) * dx
                    w = wxy * wz[k]
                    acc[bx + i, by + j, bz + k] += w * (base + grad[p, 2] * rz)
                    wacc[bx + i, by + j, bz + k] += w


def p2g(
    desc: GridDesc,
    pos: np.ndarray,
    omega: np.ndarray,
    grad_omega: np.ndarray | None = None,
    coverage_warn: float = 1e-3,
) -> list[np.ndarray]:
    """Gradient-augmented normalized scatter of particle vorticity to the grid."""
    pos = np.ascontiguousarray(pos, dtype=float)
    n = pos.shape[0]
    specs = desc.vort_specs()
    if desc.dim == 2:
        vals = [np.ascontiguousarray(omega, dtype=float).reshape(n)]
        grads = [np.zeros((n, 2)) if grad_omega is None else np.ascontiguousarray(grad_omega)]
    else:
        vals = [np.ascontiguousarray(omega[:, c]) for c in range(3)]
        grads = [
            np.zeros((n, 3)) if grad_omega is None else np.ascontiguousarray(grad_omega[:, c, :])
            for c in range(3)
        ]
    offs = padded_offsets(desc, specs)
    origin = np.asarray(desc.origin, dtype=float)
    scatter = _scatter_2d if desc.dim == 2 else _scatter_3d
    inner = (slice(PAD, -PAD),) * desc.dim
    out = []
    uncovered = 0
    total = 0
    for c, spec in enumerate(specs):
        shape = tuple(s + 2 * PAD for s in desc.shape(*spec))
        acc = np.zeros(shape)
        wacc = np.zeros(shape)
        scatter(acc, wacc, offs[c], origin, 1.0 / desc.dx, desc.dx, pos, vals[c], grads[c])
        acc = acc[inner]
        wacc = wacc[inner]
        res = np.zeros_like(acc)
        np.divide(acc, wacc, out=res, where=wacc > 0.0)
        uncovered += int(np.count_nonzero(wacc == 0.0))
        total += wacc.size
        out.append(res)
    if n and uncovered > coverage_warn * total:
        log.info("P2G left %d of %d grid samples without particle coverage", uncovered, total)
    return out


def reseed_uniform(
    desc: GridDesc, particles_per_cell: int, jitter: float = 0.0, seed: int = 0
) -> np.ndarray:
    """Stratified particle positions: a k^dim sub-lattice in every cell.

    ``particles_per_cell`` must be a perfect ``dim``-th power.  ``jitter`` is
    the maximum offset as a fraction of the sub-cell width.
    """
    if particles_per_cell < 1:
        raise ValueError("particles_per_cell must be >= 1")
    k = round(particles_per_cell ** (1.0 / desc.dim))
    if k ** desc.dim != particles_per_cell:
        raise ValueError(
            f"particles_per_cell={particles_per_cell} is not a perfect power of dim={desc.dim}"
        )
    sub = (np.arange(k) + 0.5) / k
    axes = [
        (np.arange(n)[:, None] + sub[None, :]).ravel() for n in desc.cells
    ]
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, desc.dim)
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        lattice = lattice + rng.uniform(-0.5, 0.5, lattice.shape) * (jitter / k)
    return np.asarray(desc.origin) + lattice * desc.dx


def reinit_long(desc: GridDesc, omega: list[np.ndarray], ppc: int,
                jitter: float = 0.0, seed: int = 0) -> ParticleSet:
    """Fresh particles carrying the grid vorticity, all maps at identity."""
    p = ParticleSet(reseed_uniform(desc, ppc, jitter, seed))
    p.omega_a = g2p_value(desc, omega, p.pos)
    return p


def reinit_short(desc: GridDesc, omega: list[np.ndarray], p: ParticleSet) -> None:
    """Reload the short-segment vorticity and gradient and restart the short map."""
    p.omega_b, p.grad_omega_b = g2p(desc, omega, p.pos)
    p.reset_short()

