"""
Analytic solids: signed distances, pose tracks, voxelization into cell masks
and face fractions, solid velocities, and the near-wall penalization fields.

Signed distances are negative inside a solid.  Fractions count face sample
points with positive distance (4x4 per face in 3D, 4 per edge in 2D).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .elliptic import BoundaryFaces
from .grid import FieldSampler, GridDesc, curl

SHAPE_KINDS = ("sphere", "disk", "box", "plate", "cylinder", "halfspace")


@dataclass
class PoseTrack:
    """Rigid pose keyframes: translation interpolated linearly, rotation by slerp.

    Rotations are rotation vectors (3D) or angles (2D).  Outside the keyframe
    range the nearest pose is held.
    """

    times: list[float] = field(default_factory=lambda: [0.0])
    translations: list = field(default_factory=lambda: [None])
    rotations: list = field(default_factory=lambda: [None])

    def pose(self, t: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(self.times, dtype=float)
        trans = np.array([np.zeros(dim) if v is None else np.asarray(v, float)
                          for v in self.translations])
        rots = [np.zeros(3 if dim == 3 else 1) if r is None else np.atleast_1d(np.asarray(r, float))
                for r in self.rotations]
        if len(times) == 1:
            c = trans[0]
            R = _rotation_matrix(rots[0], dim)
            return c, R
        tc = float(np.clip(t, times[0], times[-1]))
        c = np.array([np.interp(tc, times, trans[:, a]) for a in range(dim)])
        if dim == 2:
            ang = np.interp(tc, times, [r[0] for r in rots])
            R = _rotation_matrix(np.array([ang]), 2)
        else:
            sl = Slerp(times, Rotation.from_rotvec(np.stack(rots)))
            R = sl([tc]).as_matrix()[0]
        return c, R


def _rotation_matrix(r, dim):
    if dim == 2:
        a = float(np.atleast_1d(r)[0])
        return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return Rotation.from_rotvec(np.asarray(r, float)).as_matrix()


@dataclass
class SolidShape:
    """One analytic solid in its local frame, placed by a pose track.

    Parameters by kind: ``sphere``/``disk``: radius; ``box``/``plate``:
    half_extents; ``cylinder``: radius, half_height (local z axis, 3D);
    ``halfspace``: normal (solid where normal . x < 0).
    """

    kind: str
    params: dict
    track: PoseTrack = field(default_factory=PoseTrack)

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown solid kind {self.kind!r}")

    def local_sdf(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind in ("sphere", "disk"):
            return np.linalg.norm(x, axis=-1) - float(p["radius"])
        if self.kind in ("box", "plate"):
            q = np.abs(x) - np.asarray(p["half_extents"], float)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            return outside + np.minimum(q.max(axis=-1), 0.0)
        if self.kind == "cylinder":
            r = np.linalg.norm(x[..., :2], axis=-1) - float(p["radius"])
            h = np.abs(x[..., 2]) - float(p.get("half_height", np.inf))
            q = np.stack([r, h], axis=-1)
            return np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(q.max(axis=-1), 0.0)
        n = np.asarray(p["normal"], float)
        return x @ (n / np.linalg.norm(n))

    def sdf(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        dim = x.shape[-1]
        c, R = self.track.pose(t, dim)
        return self.local_sdf((x - c) @ R)

    def velocity(self, x: np.ndarray, t: float, dt: float) -> np.ndarray:
        """Rigid velocity from the finite difference of consecutive poses."""
        dim = x.shape[-1]
        c1, R1 = self.track.pose(t, dim)
        c0, R0 = self.track.pose(t - dt, dim)
        local = (x - c1) @ R1
        prev = local @ R0.T + c0
        return (x - prev) / dt

    def is_static(self) -> bool:
        return len(self.track.times) <= 1


@dataclass
class SolidScene:
    shapes: list[SolidShape] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.shapes)

    def sdf(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        if not self.shapes:
            return np.full(x.shape[:-1], np.inf)
        return np.min([s.sdf(x, t) for s in self.shapes], axis=0)

    def velocity(self, x: np.ndarray, t: float, dt: float) -> np.ndarray:
        """Velocity of the nearest solid at each point."""
        out = np.zeros_like(x)
        if not self.shapes:
            return out
        d = np.stack([s.sdf(x, t) for s in self.shapes])
        which = d.argmin(axis=0)
        for k, s in enumerate(self.shapes):
            m = which == k
            if np.any(m) and not s.is_static():
                out[m] = s.velocity(x[m], t, dt)
        return out

    def is_static(self) -> bool:
        return all(s.is_static() for s in self.shapes)


@dataclass
class SolidMasks:
    chi_S: np.ndarray
    chi_surf: np.ndarray
    chi_in: np.ndarray
    alpha: list[np.ndarray]
    u_Sn: list[np.ndarray]
    u_S_cell: np.ndarray  # (..., dim) solid velocity at cell centres, zero in fluid

    def boundary_faces(self) -> BoundaryFaces:
        return BoundaryFaces(self.alpha, self.u_Sn, self.chi_in)


def _face_sample_offsets(dim: int, axis: int, samples: int) -> np.ndarray:
    """Offsets (units of dx) of the sample lattice on a face normal to ``axis``."""
    s = (np.arange(samples) + 0.5) / samples - 0.5
    tang = [a for a in range(dim) if a != axis]
    grids = np.meshgrid(*([s] * len(tang)), indexing="ij")
    out = np.zeros((samples ** len(tang), dim))
    for k, a in enumerate(tang):
        out[:, a] = grids[k].ravel()
    return out


def face_fractions(desc: GridDesc, scene: SolidScene, axis: int, t: float = 0.0,
                   samples: int = 4) -> np.ndarray:
    """Fluid fraction of every face normal to ``axis``."""
    x = desc.positions("face", axis)
    d = scene.sdf(x, t)
    alpha = (d > 0.0).astype(float)
    near = np.abs(d) < 0.75 * desc.dx
    if np.any(near):
        pts = x[near]
        off = _face_sample_offsets(desc.dim, axis, samples) * desc.dx
        ds = scene.sdf(pts[:, None, :] + off[None, :, :], t)
        alpha[near] = (ds > 0.0).mean(axis=1)
    return alpha


def voxel_fractions(desc: GridDesc, chi_S: np.ndarray, axis: int) -> np.ndarray:
    """Staircase fractions: a face is open iff no adjacent cell is solid."""
    width = [(0, 0)] * desc.dim
    width[axis] = (1, 1)
    padded = np.pad(chi_S, width, mode="edge")
    lo = [slice(None)] * desc.dim
    hi = [slice(None)] * desc.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return (~(padded[tuple(lo)] | padded[tuple(hi)])).astype(float)


def voxelize(desc: GridDesc, scene: SolidScene, t: float = 0.0, dt: float = 1.0,
             fractions: str = "cut", samples: int = 4) -> SolidMasks:
    """Cell masks, face fractions and solid velocities at time ``t``."""
    centers = desc.positions("center")
    if not scene:
        return SolidMasks(
            np.zeros(desc.cells, bool), np.zeros(desc.cells, bool), np.zeros(desc.cells, bool),
            [np.ones(desc.shape("face", a)) for a in range(desc.dim)],
            desc.zeros_faces(), np.zeros(desc.cells + (desc.dim,)),
        )
    chi_S = scene.sdf(centers, t) < 0.0
    if fractions == "cut":
        alpha = [face_fractions(desc, scene, a, t, samples) for a in range(desc.dim)]
    elif fractions == "voxel":
        alpha = [voxel_fractions(desc, chi_S, a) for a in range(desc.dim)]
    else:
        raise ValueError(f"unknown fraction mode {fractions!r}")
    # surface: solid cells with a fluid 6-neighbour or a partially open face
    padded = np.pad(chi_S, 1, mode="constant", constant_values=True)
    surf = np.zeros(desc.cells, bool)
    core = tuple(slice(1, -1) for _ in range(desc.dim))
    for a in range(desc.dim):
        for sh in (-1, 1):
            idx = list(core)
            idx[a] = slice(1 + sh, padded.shape[a] - 1 + sh)
            surf |= ~padded[tuple(idx)]
        partial = (alpha[a] > 0.0) & (alpha[a] < 1.0)
        lo = [slice(None)] * desc.dim
        hi = [slice(None)] * desc.dim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        surf |= partial[tuple(lo)] | partial[tuple(hi)]
    chi_surf = chi_S & surf
    chi_in = chi_S & ~chi_surf
    u_S_cell = np.zeros(desc.cells + (desc.dim,))
    u_Sn = desc.zeros_faces()
    if not scene.is_static():
        u_S_cell[chi_S] = scene.velocity(centers[chi_S], t, dt)
        for a in range(desc.dim):
            xf = desc.positions("face", a)
            m = alpha[a] < 1.0
            u_Sn[a][m] = scene.velocity(xf[m], t, dt)[:, a]
    return SolidMasks(chi_S, chi_surf, chi_in, alpha, u_Sn, u_S_cell)


# ---------------------------------------------------------------------------
# simplified near-wall penalization


def _neighbour_offsets(dim: int, axis: int) -> list[tuple[int, ...]]:
    """Cell offsets (relative to the lower cell of a face) of the near-face stencil."""
    out = []
    for r in (0, 1):
        for b in range(dim):
            if b == axis:
                continue
            for s in (-1, 1):
                o = [0] * dim
                o[axis] = r
                o[b] = s
                out.append(tuple(o))
    return out


def _shifted_cells(a: np.ndarray, offset, axis, fill):
    """View of a cell array indexed by face index along ``axis`` plus ``offset``.

    Entry [f] holds a[cell(f) + offset] where cell(f) is the cell below face f
    (face index i sits between cells i-1 and i).
    """
    dim = len(offset)
    width = [(2, 2)] * dim + [(0, 0)] * (a.ndim - dim)
    padded = np.pad(a, width, mode="constant", constant_values=fill)
    idx = []
    for b in range(dim):
        n = a.shape[b]
        if b == axis:
            start = 2 - 1 + offset[b]
            idx.append(slice(start, start + n + 1))
        else:
            start = 2 + offset[b]
            idx.append(slice(start, start + n))
    return padded[tuple(idx)]


def penalization_mask(desc: GridDesc, chi_S: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """(mask of the penalized face set, near-face solid count) for one axis."""
    offs = _neighbour_offsets(desc.dim, axis)
    count = sum(_shifted_cells(chi_S.astype(int), o, axis, 0) for o in offs)
    lo = [0] * desc.dim
    hi = [0] * desc.dim
    hi[axis] = 1
    # out-of-domain cells count as a solid column so wall faces are never penalized
    column = _shifted_cells(chi_S, tuple(lo), axis, True) | _shifted_cells(chi_S, tuple(hi), axis, True)
    mask = (~column) & (count > 0)
    return mask, count


def penalization_velocity(desc: GridDesc, u: list[np.ndarray], masks: SolidMasks) -> list[np.ndarray]:
    """Near-wall slip correction ``(1/K) sum_N chi_S(N) (u_solid(N) - u)`` on the
    penalized faces, K = 8 in 3D and 4 in 2D."""
    K = 4.0 if desc.dim == 2 else 8.0
    out = []
    for a in range(desc.dim):
        mask, count = penalization_mask(desc, masks.chi_S, a)
        us = np.zeros(desc.shape("face", a))
        for o in _neighbour_offsets(desc.dim, a):
            solid = _shifted_cells(masks.chi_S, o, a, False)
            vel = _shifted_cells(masks.u_S_cell[..., a], o, a, 0.0)
            us += np.where(solid, vel, 0.0)
        pen = (us - count * u[a]) / K
        out.append(np.where(mask, pen, 0.0))
    return out


def penalization_vorticity(desc: GridDesc, u_pen: list[np.ndarray], lam: float) -> list[np.ndarray]:
    """``lam * curl(u_pen)`` on the vorticity layout."""
    if lam < 0.0:
        raise ValueError("penalization coefficient must be non-negative")
    return [lam * w for w in curl(desc, u_pen)]


def tangential_slip(desc: GridDesc, u: list[np.ndarray], masks: SolidMasks,
                    scene: SolidScene | None = None, t: float = 0.0) -> float:
    """Mean slip speed on the penalized faces.

    Without ``scene`` this is the mean |u| of the face components.  With
    ``scene`` the full velocity is sampled at each penalized face, the solid
    velocity and the component along the SDF normal are removed, and the mean
    tangential speed is returned.
    """
    if scene is None:
        vals = []
        for a in range(desc.dim):
            mask, _ = penalization_mask(desc, masks.chi_S, a)
            vals.append(np.abs(u[a][mask]))
        v = np.concatenate(vals)
        return float(v.mean()) if v.size else 0.0
    pts = np.concatenate([desc.positions("face", a)[penalization_mask(desc, masks.chi_S, a)[0]]
                          for a in range(desc.dim)])
    if not len(pts):
        return 0.0
    rel = FieldSampler.velocity(desc, u).value(pts) - scene.velocity(pts, t, 1.0)
    h = 1e-3 * desc.dx
    n = np.stack([(scene.sdf(pts + h * e, t) - scene.sdf(pts - h * e, t)) / (2 * h)
                  for e in np.eye(desc.dim)], axis=1)
    n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    tang = rel - np.sum(rel * n, axis=1, keepdims=True) * n
    return float(np.linalg.norm(tang, axis=1).mean())
