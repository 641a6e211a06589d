"""
Uniform staggered grids in 2D and 3D.

Storage layout (cell (0,..) has its lower corner at ``origin``):

* ``center``  -- cell centers, shape ``n``
* ``node``    -- cell corners, shape ``n + 1``
* ``face a``  -- faces normal to axis ``a``, shape ``n + e_a``
* ``edge a``  -- (3D) edges parallel to axis ``a``, shape ``n + 1 - e_a``

Vorticity and vector potential live on edges (3D) or nodes (2D), velocity on
faces, harmonic potential and masks on centers.

All particle/grid interpolation uses the quadratic B-spline kernel.  Fields
are padded with ``PAD`` ghost layers (odd reflection, which reproduces affine
data) before kernel evaluation so that stencils near walls stay in range.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import floor

import numpy as np
from numba import njit, prange

PAD = 2


@dataclass(frozen=True)
class GridDesc:
    """Uniform grid description."""

    cells: tuple[int, ...]
    dx: float
    origin: tuple[float, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        if len(cells) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got cells={cells}")
        if min(cells) < 4:
            raise ValueError(f"every axis needs at least 4 cells, got {cells}")
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")
        origin = self.origin
        if origin is None:
            origin = (0.0,) * len(cells)
        origin = tuple(float(o) for o in origin)
        if len(origin) != len(cells):
            raise ValueError("origin and cells must have the same length")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.cells, dtype=float) * self.dx

    @property
    def n(self) -> np.ndarray:
        return np.asarray(self.cells, dtype=np.int64)

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    def shape(self, layout: str, axis: int | None = None) -> tuple[int, ...]:
        n = np.asarray(self.cells)
        if layout == "center":
            s = n
        elif layout == "node":
            s = n + 1
        elif layout == "face":
            s = n + np.eye(self.dim, dtype=int)[axis]
        elif layout == "edge":
            if self.dim != 3:
                raise ValueError("edge layout only exists in 3D")
            s = n + 1 - np.eye(3, dtype=int)[axis]
        else:
            raise ValueError(f"unknown layout {layout!r}")
        return tuple(int(v) for v in s)

    def offset(self, layout: str, axis: int | None = None) -> np.ndarray:
        """Sample position of index 0 in units of dx, relative to ``origin``."""
        d = self.dim
        if layout == "center":
            return np.full(d, 0.5)
        if layout == "node":
            return np.zeros(d)
        if layout == "face":
            o = np.full(d, 0.5)
            o[axis] = 0.0
            return o
        if layout == "edge":
            o = np.zeros(d)
            o[axis] = 0.5
            return o
        raise ValueError(f"unknown layout {layout!r}")

    def positions(self, layout: str, axis: int | None = None) -> np.ndarray:
        """World coordinates of every sample, shape ``shape + (dim,)``."""
        off = self.offset(layout, axis)
        axes = [
            self.origin[a] + (np.arange(s) + off[a]) * self.dx
            for a, s in enumerate(self.shape(layout, axis))
        ]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def zeros(self, layout: str, axis: int | None = None) -> np.ndarray:
        return np.zeros(self.shape(layout, axis))

    # vorticity / vector potential storage
    def vort_specs(self) -> list[tuple[str, int | None]]:
        if self.dim == 3:
            return [("edge", 0), ("edge", 1), ("edge", 2)]
        return [("node", None)]

    def face_specs(self) -> list[tuple[str, int]]:
        return [("face", a) for a in range(self.dim)]

    def zeros_vort(self) -> list[np.ndarray]:
        return [self.zeros(*s) for s in self.vort_specs()]

    def zeros_faces(self) -> list[np.ndarray]:
        return [self.zeros(*s) for s in self.face_specs()]

    def contains(self, pos: np.ndarray, margin: float = 0.0) -> np.ndarray:
        lo = np.asarray(self.origin) + margin
        hi = np.asarray(self.origin) + self.extent - margin
        pos = np.atleast_2d(pos)
        return np.all((pos >= lo) & (pos <= hi), axis=1)

    def clamp(self, pos: np.ndarray, eps: float = 1e-9) -> np.ndarray:
        lo = np.asarray(self.origin) + eps * self.dx
        hi = np.asarray(self.origin) + self.extent - eps * self.dx
        return np.clip(pos, lo, hi)


def check_shapes(desc: GridDesc, arrays, specs) -> None:
    if len(arrays) != len(specs):
        raise ValueError(f"expected {len(specs)} arrays, got {len(arrays)}")
    for arr, spec in zip(arrays, specs):
        if arr.shape != desc.shape(*spec):
            raise ValueError(
                f"{spec} array has shape {arr.shape}, expected {desc.shape(*spec)}"
            )


# ---------------------------------------------------------------------------
# finite-difference stencils


def _diff(a: np.ndarray, axis: int, dx: float) -> np.ndarray:
    return np.diff(a, axis=axis) / dx


def _edge_pad(a: np.ndarray, axis: int) -> np.ndarray:
    width = [(0, 0)] * a.ndim
    width[axis] = (1, 1)
    return np.pad(a, width, mode="edge")


def curl(desc: GridDesc, u: list[np.ndarray]) -> list[np.ndarray]:
    """Face velocity -> edge (3D) / node (2D) vorticity.

    Interior samples are the exact staggered circulation per area.  Samples on
    the domain boundary use even (free-slip) ghosts for the tangential
    velocity, so they only see the along-wall variation of the normal velocity.
    """
    check_shapes(desc, u, desc.face_specs())
    dx = desc.dx
    if desc.dim == 2:
        ux, uy = u
        return [_diff(_edge_pad(uy, 0), 0, dx) - _diff(_edge_pad(ux, 1), 1, dx)]
    out = []
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        # w_a = d u_c / d x_b - d u_b / d x_c
        out.append(_diff(_edge_pad(u[c], b), b, dx) - _diff(_edge_pad(u[b], c), c, dx))
    return out


def curl_potential(desc: GridDesc, psi: list[np.ndarray]) -> list[np.ndarray]:
    """Edge/node vector potential -> face velocity (u = curl psi)."""
    check_shapes(desc, psi, desc.vort_specs())
    dx = desc.dx
    if desc.dim == 2:
        (p,) = psi
        return [_diff(p, 1, dx), -_diff(p, 0, dx)]
    out = []
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        out.append(_diff(psi[c], b, dx) - _diff(psi[b], c, dx))
    return out


def divergence(desc: GridDesc, u: list[np.ndarray]) -> np.ndarray:
    check_shapes(desc, u, desc.face_specs())
    return sum(_diff(u[a], a, desc.dx) for a in range(desc.dim))


def laplacian(
    desc: GridDesc,
    f: np.ndarray,
    layout: str,
    axis: int | None = None,
    ghost: str = "neumann",
) -> np.ndarray:
    """5/7-point Laplacian on any staggered layout.

    Along axes where samples sit on the walls (offset 0), boundary samples are
    treated as Dirichlet data and get 0 in the output.  Along axes where
    samples sit half a cell inside (offset 1/2) a ghost layer is used:
    ``"neumann"`` mirrors the first sample, ``"zero"`` uses 0.
    """
    if f.shape != desc.shape(layout, axis):
        raise ValueError(f"shape {f.shape} does not match {layout} {axis}")
    off = desc.offset(layout, axis)
    inv = 1.0 / desc.dx ** 2
    out = np.zeros_like(f)
    interior = tuple(
        slice(1, -1) if off[a] == 0.0 else slice(None) for a in range(desc.dim)
    )
    for a in range(desc.dim):
        if off[a] == 0.0:
            lo = [interior[k] for k in range(desc.dim)]
            hi = list(lo)
            lo[a] = slice(0, -2)
            hi[a] = slice(2, None)
            out[interior] += (f[tuple(lo)] + f[tuple(hi)] - 2.0 * f[interior]) * inv
        else:
            width = [(0, 0)] * desc.dim
            width[a] = (1, 1)
            if ghost == "neumann":
                g = np.pad(f, width, mode="edge")
            elif ghost == "zero":
                g = np.pad(f, width, mode="constant")
            else:
                raise ValueError(f"unknown ghost rule {ghost!r}")
            lo = [slice(None)] * desc.dim
            hi = [slice(None)] * desc.dim
            lo[a] = slice(0, -2)
            hi[a] = slice(2, None)
            lap = (g[tuple(lo)] + g[tuple(hi)] - 2.0 * f) * inv
            out[interior] += lap[interior]
    return out


def interior_mask(desc: GridDesc, layout: str, axis: int | None = None) -> np.ndarray:
    """True on samples not lying on a domain wall."""
    off = desc.offset(layout, axis)
    m = np.ones(desc.shape(layout, axis), dtype=bool)
    for a in range(desc.dim):
        if off[a] == 0.0:
            idx = [slice(None)] * desc.dim
            idx[a] = 0
            m[tuple(idx)] = False
            idx[a] = -1
            m[tuple(idx)] = False
    return m


def boundary_weights(desc: GridDesc, layout: str, axis: int | None = None) -> np.ndarray:
    """Trapezoid quadrature weights: 1/2 per wall a sample lies on."""
    off = desc.offset(layout, axis)
    w = np.ones(desc.shape(layout, axis))
    for a in range(desc.dim):
        if off[a] == 0.0:
            idx = [slice(None)] * desc.dim
            idx[a] = 0
            w[tuple(idx)] *= 0.5
            idx[a] = -1
            w[tuple(idx)] *= 0.5
    return w


# ---------------------------------------------------------------------------
# quadratic B-spline kernel


@njit(cache=True, inline="always")
def bspline_1d(s):
    """Base index and weights (value, d/ds, d2/ds2) for lattice coordinate s."""
    base = floor(s - 0.5)
    f = s - base
    w0 = 0.5 * (1.5 - f) ** 2
    w1 = 0.75 - (f - 1.0) ** 2
    w2 = 0.5 * (f - 0.5) ** 2
    d0 = f - 1.5
    d1 = -2.0 * (f - 1.0)
    d2 = f - 0.5
    return base, w0, w1, w2, d0, d1, d2


@dataclass
class KernelWeights:
    base_index: np.ndarray
    weights: np.ndarray  # (dim, 3)
    gradients: np.ndarray  # (dim, 3), 1/length
    second: np.ndarray  # (dim, 3), 1/length^2
    clamped: bool = False


def kernel_at(desc: GridDesc, pos, layout: str, axis: int | None = None) -> KernelWeights:
    """Per-axis quadratic B-spline weights around ``pos`` for one staggering.

    Positions farther than ``PAD - 1/2`` samples outside the array are clamped
    and reported through ``clamped``.
    """
    pos = np.asarray(pos, dtype=float)
    off = desc.offset(layout, axis)
    shape = desc.shape(layout, axis)
    s = (pos - np.asarray(desc.origin)) / desc.dx - off
    lo = -PAD + 0.5
    hi = np.asarray(shape) - 1 + PAD - 0.5 - 1e-9
    sc = np.clip(s, lo, hi)
    clamped = bool(np.any(sc != s))
    base = np.empty(desc.dim, dtype=np.int64)
    w = np.empty((desc.dim, 3))
    g = np.empty((desc.dim, 3))
    h = np.empty((desc.dim, 3))
    for a in range(desc.dim):
        b, w0, w1, w2, d0, d1, d2 = bspline_1d(float(sc[a]))
        base[a] = b
        w[a] = (w0, w1, w2)
        g[a] = np.array((d0, d1, d2)) / desc.dx
        h[a] = np.array((1.0, -2.0, 1.0)) / desc.dx ** 2
    return KernelWeights(base, w, g, h, clamped)


def pad_field(a: np.ndarray, pad: int = PAD) -> np.ndarray:
    """Odd reflection about the boundary sample (exact for affine data)."""
    return np.pad(a, pad, mode="reflect", reflect_type="odd")


def padded_offsets(desc: GridDesc, specs) -> np.ndarray:
    """Lattice offsets (in index units) of padded arrays for ``specs``."""
    return np.stack([desc.offset(*s) - PAD for s in specs])


# numba samplers; ``off`` holds the padded-lattice offset of the array


@njit(cache=True, inline="always")
def _lattice(p, origin, inv_dx, off, n):
    s = (p - origin) * inv_dx - off
    lo = 0.5
    hi = n - 1.5 - 1e-9
    flag = False
    if s < lo:
        s = lo
        flag = True
    elif s > hi:
        s = hi
        flag = True
    return s, flag


@njit(cache=True)
def sample_2d(arr, off, origin, inv_dx, p, g, h):
    """Value of padded node/face array at p; gradient into g, Hessian into h."""
    sx, fx = _lattice(p[0], origin[0], inv_dx, off[0], arr.shape[0])
    sy, fy = _lattice(p[1], origin[1], inv_dx, off[1], arr.shape[1])
    bx, wx0, wx1, wx2, dx0, dx1, dx2 = bspline_1d(sx)
    by, wy0, wy1, wy2, dy0, dy1, dy2 = bspline_1d(sy)
    wx = (wx0, wx1, wx2)
    wy = (wy0, wy1, wy2)
    ddx = (dx0, dx1, dx2)
    ddy = (dy0, dy1, dy2)
    hh = (1.0, -2.0, 1.0)
    v = 0.0
    g[0] = 0.0
    g[1] = 0.0
    h[0, 0] = 0.0
    h[0, 1] = 0.0
    h[1, 1] = 0.0
    for i in range(3):
        for j in range(3):
            a = arr[bx + i, by + j]
            v += wx[i] * wy[j] * a
            g[0] += ddx[i] * wy[j] * a
            g[1] += wx[i] * ddy[j] * a
            h[0, 0] += hh[i] * wy[j] * a
            h[0, 1] += ddx[i] * ddy[j] * a
            h[1, 1] += wx[i] * hh[j] * a
    g[0] *= inv_dx
    g[1] *= inv_dx
    i2 = inv_dx * inv_dx
    h[0, 0] *= i2
    h[0, 1] *= i2
    h[1, 1] *= i2
    h[1, 0] = h[0, 1]
    return v, fx or fy


@njit(cache=True)
def sample_3d(arr, off, origin, inv_dx, p, g, h):
    sx, fx = _lattice(p[0], origin[0], inv_dx, off[0], arr.shape[0])
    sy, fy = _lattice(p[1], origin[1], inv_dx, off[1], arr.shape[1])
    sz, fz = _lattice(p[2], origin[2], inv_dx, off[2], arr.shape[2])
    bx, wx0, wx1, wx2, dx0, dx1, dx2 = bspline_1d(sx)
    by, wy0, wy1, wy2, dy0, dy1, dy2 = bspline_1d(sy)
    bz, wz0, wz1, wz2, dz0, dz1, dz2 = bspline_1d(sz)
    wx = (wx0, wx1, wx2)
    wy = (wy0, wy1, wy2)
    wz = (wz0, wz1, wz2)
    ddx = (dx0, dx1, dx2)
    ddy = (dy0, dy1, dy2)
    ddz = (dz0, dz1, dz2)
    hh = (1.0, -2.0, 1.0)
    v = 0.0
    g0 = 0.0
    g1 = 0.0
    g2 = 0.0
    h00 = 0.0
    h11 = 0.0
    h22 = 0.0
    h01 = 0.0
    h02 = 0.0
    h12 = 0.0
    for i in range(3):
        for j in range(3):
            wxy = wx[i] * wy[j]
            dxy = ddx[i] * wy[j]
            xdy = wx[i] * ddy[j]
            dxdy = ddx[i] * ddy[j]
            hxy = hh[i] * wy[j]
            xhy = wx[i] * hh[j]
            for k in range(3):
                a = arr[bx + i, by + j, bz + k]
                v += wxy * wz[k] * a
                g0 += dxy * wz[k] * a
                g1 += xdy * wz[k] * a
                g2 += wxy * ddz[k] * a
                h00 += hxy * wz[k] * a
                h11 += xhy * wz[k] * a
                h22 += wxy * hh[k] * a
                h01 += dxdy * wz[k] * a
                h02 += dxy * ddz[k] * a
                h12 += xdy * ddz[k] * a
    i2 = inv_dx * inv_dx
    g[0] = g0 * inv_dx
    g[1] = g1 * inv_dx
    g[2] = g2 * inv_dx
    h[0, 0] = h00 * i2
    h[1, 1] = h11 * i2
    h[2, 2] = h22 * i2
    h[0, 1] = h01 * i2
    h[1, 0] = h01 * i2
    h[0, 2] = h02 * i2
    h[2, 0] = h02 * i2
    h[1, 2] = h12 * i2
    h[2, 1] = h12 * i2
    return v, fx or fy or fz


@njit(cache=True)
def value_2d(arr, off, origin, inv_dx, p):
    sx, fx = _lattice(p[0], origin[0], inv_dx, off[0], arr.shape[0])
    sy, fy = _lattice(p[1], origin[1], inv_dx, off[1], arr.shape[1])
    bx, wx0, wx1, wx2, _a, _b, _c = bspline_1d(sx)
    by, wy0, wy1, wy2, _d, _e, _f = bspline_1d(sy)
    wx = (wx0, wx1, wx2)
    wy = (wy0, wy1, wy2)
    v = 0.0
    for i in range(3):
        for j in range(3):
            v += wx[i] * wy[j] * arr[bx + i, by + j]
    return v


@njit(cache=True)
def value_3d(arr, off, origin, inv_dx, p):
    sx, fx = _lattice(p[0], origin[0], inv_dx, off[0], arr.shape[0])
    sy, fy = _lattice(p[1], origin[1], inv_dx, off[1], arr.shape[1])
    sz, fz = _lattice(p[2], origin[2], inv_dx, off[2], arr.shape[2])
    bx, wx0, wx1, wx2, _a, _b, _c = bspline_1d(sx)
    by, wy0, wy1, wy2, _d, _e, _f = bspline_1d(sy)
    bz, wz0, wz1, wz2, _g, _h, _i = bspline_1d(sz)
    wx = (wx0, wx1, wx2)
    wy = (wy0, wy1, wy2)
    wz = (wz0, wz1, wz2)
    v = 0.0
    for i in range(3):
        for j in range(3):
            wxy = wx[i] * wy[j]
            for k in range(3):
                v += wxy * wz[k] * arr[bx + i, by + j, bz + k]
    return v


@njit(cache=True)
def gradient_2d(arr, off, origin, inv_dx, p, g):
    """Value and gradient only (no Hessian)."""
    sx, fx = _lattice(p[0], origin[0], inv_dx, off[0], arr.shape[0])
    sy, fy = _lattice(p[1], origin[1], inv_dx, off[1], arr.shape[1])
    bx, wx0, wx1, wx2, dx0, dx1, dx2 = bspline_1d(sx)
    by, wy0, wy1, wy2, dy0, dy1, dy2 = bspline_1d(sy)
    wx = (wx0, wx1, wx2)
    wy = (wy0, wy1, wy2)
    ddx = (dx0, dx1, dx2)
    ddy = (dy0, dy1, dy2)
    v = 0.0
    g0 = 0.0
    g1 = 0.0
    for i in range(3):
        for j in range(3):
            a = arr[bx + i, by + j]
            v += wx[i] * wy[j] * a
            g0 += ddx[i] * wy[j] * a
            g1 += wx[i] * ddy[j] * a
    g[0] = g0 * inv_dx
    g[1] = g1 * inv_dx
    return v, fx or fy


@njit(cache=True)
def gradient_3d(arr, off, origin, inv_dx, p, g):
    sx, fx = _lattice(p[0], origin[0], inv_dx, off[0], arr.shape[0])
    sy, fy = _lattice(p[1], origin[1], inv_dx, off[1], arr.shape[1])
    sz, fz = _lattice(p[2], origin[2], inv_dx, off[2], arr.shape[2])
    bx, wx0, wx1, wx2, dx0, dx1, dx2 = bspline_1d(sx)
    by, wy0, wy1, wy2, dy0, dy1, dy2 = bspline_1d(sy)
    bz, wz0, wz1, wz2, dz0, dz1, dz2 = bspline_1d(sz)
    wx = (wx0, wx1, wx2)
    wy = (wy0, wy1, wy2)
    wz = (wz0, wz1, wz2)
    ddx = (dx0, dx1, dx2)
    ddy = (dy0, dy1, dy2)
    ddz = (dz0, dz1, dz2)
    v = 0.0
    g0 = 0.0
    g1 = 0.0
    g2 = 0.0
    for i in range(3):
        for j in range(3):
            wxy = wx[i] * wy[j]
            dxy = ddx[i] * wy[j]
            xdy = wx[i] * ddy[j]
            for k in range(3):
                a = arr[bx + i, by + j, bz + k]
                v += wxy * wz[k] * a
                g0 += dxy * wz[k] * a
                g1 += xdy * wz[k] * a
                g2 += wxy * ddz[k] * a
    g[0] = g0 * inv_dx
    g[1] = g1 * inv_dx
    g[2] = g2 * inv_dx
    return v, fx or fy or fz


@njit(cache=True, parallel=True)
def _sample_many_2d(a0, a1, nc, offs, origin, inv_dx, pts, order, val, grad, hess):
    clamp = np.zeros(pts.shape[0], dtype=np.int64)
    for p in prange(pts.shape[0]):
        h = np.empty((2, 2))
        for c in range(nc):
            arr = a0 if c == 0 else a1
            if order == 0:
                val[p, c] = value_2d(arr, offs[c], origin, inv_dx, pts[p])
                continue
            if order == 1:
                v, fl = gradient_2d(arr, offs[c], origin, inv_dx, pts[p], grad[p, c])
            else:
                v, fl = sample_2d(arr, offs[c], origin, inv_dx, pts[p], grad[p, c], h)
                hess[p, c, :, :] = h
            val[p, c] = v
            if fl:
                clamp[p] += 1
    return clamp.sum()


@njit(cache=True, parallel=True)
def _sample_many_3d(a0, a1, a2, nc, offs, origin, inv_dx, pts, order, val, grad, hess):
    clamp = np.zeros(pts.shape[0], dtype=np.int64)
    for p in prange(pts.shape[0]):
        h = np.empty((3, 3))
        for c in range(nc):
            if c == 0:
                arr = a0
            elif c == 1:
                arr = a1
            else:
                arr = a2
            if order == 0:
                val[p, c] = value_3d(arr, offs[c], origin, inv_dx, pts[p])
                continue
            if order == 1:
                v, fl = gradient_3d(arr, offs[c], origin, inv_dx, pts[p], grad[p, c])
            else:
                v, fl = sample_3d(arr, offs[c], origin, inv_dx, pts[p], grad[p, c], h)
                hess[p, c, :, :] = h
            val[p, c] = v
            if fl:
                clamp[p] += 1
    return clamp.sum()


class FieldSampler:
    """Quadratic B-spline sampler over a list of staggered arrays.

    Used for velocities (one face array per component), for vorticity (edge
    arrays in 3D, one node array in 2D) and for scalar grid increments.
    """

    def __init__(self, desc: GridDesc, arrays: list[np.ndarray], specs):
        check_shapes(desc, arrays, specs)
        if not 1 <= len(arrays) <= desc.dim:
            raise ValueError("sampler takes between 1 and dim arrays")
        self.desc = desc
        self.padded = tuple(np.ascontiguousarray(pad_field(a)) for a in arrays)
        self.offs = padded_offsets(desc, specs)
        self.origin = np.asarray(desc.origin, dtype=float)
        self.inv_dx = 1.0 / desc.dx
        self.last_clamped = 0

    @classmethod
    def velocity(cls, desc: GridDesc, u: list[np.ndarray]) -> "FieldSampler":
        return cls(desc, u, desc.face_specs())

    def _run(self, pts, order):
        pts = np.ascontiguousarray(np.atleast_2d(pts), dtype=float)
        m, d = pts.shape[0], self.desc.dim
        nc = len(self.padded)
        val = np.empty((m, nc))
        grad = np.empty((m, nc, d)) if order else np.empty((1, 1, 1))
        hess = np.empty((m, nc, d, d)) if order == 2 else np.empty((1, 1, 1, 1))
        arrs = list(self.padded) + [self.padded[0]] * (d - nc)
        if d == 2:
            self.last_clamped = _sample_many_2d(
                *arrs, nc, self.offs, self.origin, self.inv_dx, pts, order, val, grad, hess
            )
        else:
            self.last_clamped = _sample_many_3d(
                *arrs, nc, self.offs, self.origin, self.inv_dx, pts, order, val, grad, hess
            )
        return val, grad, hess

    def value(self, pts) -> np.ndarray:
        return self._run(pts, 0)[0]

    def gradient(self, pts) -> np.ndarray:
        """``g[p, i, l] = d f_i / d x_l``."""
        return self._run(pts, 1)[1]

    def value_and_gradient(self, pts) -> tuple[np.ndarray, np.ndarray]:
        val, grad, _ = self._run(pts, 1)
        return val, grad

    def hessian(self, pts) -> np.ndarray:
        """``h[p, i, l, k] = d^2 f_i / d x_l d x_k``."""
        return self._run(pts, 2)[2]

    def all(self, pts):
        return self._run(pts, 2)


def sample_velocity(desc: GridDesc, u: list[np.ndarray], pos) -> np.ndarray:
    return FieldSampler.velocity(desc, u).value(pos)


def sample_velocity_gradient(desc: GridDesc, u: list[np.ndarray], pos) -> np.ndarray:
    return FieldSampler.velocity(desc, u).gradient(pos)


def sample_velocity_hessian(desc: GridDesc, u: list[np.ndarray], pos) -> np.ndarray:
    return FieldSampler.velocity(desc, u).hessian(pos)


def sample_faces_from_function(desc: GridDesc, fn) -> list[np.ndarray]:
    """Evaluate a vector function ``fn(x) -> (..., dim)`` on every face array."""
    return [fn(desc.positions("face", a))[..., a] for a in range(desc.dim)]
