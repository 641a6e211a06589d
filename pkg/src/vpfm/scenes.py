"""
Bundled benchmark scenes.

Each scene is a function of a parameter dict returning a :class:`SceneSetup`:
grid, initial vorticity, solids, wall-vorticity rule, body force and the
numerical defaults the scene is meant to run with.  Every parameter has a
default listed in ``SCENE_DEFAULTS`` so that a scene is fully determined by
its name and the parameters given in the run config.

Vortex rings and knots are built from closed filaments mollified with the
compact kernel ``315 / (64 pi s^3) (1 - r^2/s^2)^3``; 2D point vortices use
Gaussian cores.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit, prange

from .grid import GridDesc, curl
from .solids import PoseTrack, SolidScene, SolidShape


class SceneError(ValueError):
    """Invalid scene name or parameters."""


@dataclass
class SceneSetup:
    desc: GridDesc
    omega0: list
    solids: SolidScene | None = None
    wall_vorticity: Callable | None = None
    force: Callable | None = None
    sim_defaults: dict = field(default_factory=dict)
    exact_velocity: Callable | None = None


# ---------------------------------------------------------------------------
# filament vorticity


@njit(cache=True, parallel=True)
def _mollified_filaments(points, mid, seg, sigma, out):
    norm = 315.0 / (64.0 * np.pi * sigma ** 3)
    s2 = sigma * sigma
    for p in prange(points.shape[0]):
        ax = 0.0
        ay = 0.0
        az = 0.0
        for k in range(mid.shape[0]):
            dx = points[p, 0] - mid[k, 0]
            dy = points[p, 1] - mid[k, 1]
            dz = points[p, 2] - mid[k, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 < s2:
                q = 1.0 - r2 / s2
                w = norm * q * q * q
                ax += w * seg[k, 0]
                ay += w * seg[k, 1]
                az += w * seg[k, 2]
        out[p, 0] += ax
        out[p, 1] += ay
        out[p, 2] += az


def circle_curve(center, normal, radius: float, n: int) -> np.ndarray:
    """``n`` points on a circle, oriented counter-clockwise about ``normal``."""
    nrm = np.asarray(normal, float)
    nrm = nrm / np.linalg.norm(nrm)
    helper = np.array([1.0, 0.0, 0.0]) if abs(nrm[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(nrm, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nrm, e1)
    t = 2 * np.pi * np.arange(n) / n
    return np.asarray(center, float) + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)


def trefoil_curve(center, scale: float, n: int) -> np.ndarray:
    t = 2 * np.pi * np.arange(n) / n
    pts = np.stack([
        np.sin(t) + 2 * np.sin(2 * t),
        np.cos(t) - 2 * np.cos(2 * t),
        -np.sin(3 * t),
    ], axis=1)
    return np.asarray(center, float) + scale * pts


def filament_vorticity(desc: GridDesc, curves, strengths, sigma: float) -> list[np.ndarray]:
    """Edge vorticity of closed filaments with circulation ``strengths``."""
    if desc.dim != 3:
        raise SceneError("filament vorticity needs a 3D grid")
    mids, segs = [], []
    for c, g in zip(curves, strengths):
        c = np.asarray(c, float)
        nxt = np.roll(c, -1, axis=0)
        mids.append(0.5 * (c + nxt))
        segs.append(float(g) * (nxt - c))
    mid = np.ascontiguousarray(np.concatenate(mids))
    seg = np.ascontiguousarray(np.concatenate(segs))
    out = []
    for c, spec in enumerate(desc.vort_specs()):
        pts = np.ascontiguousarray(desc.positions(*spec).reshape(-1, 3))
        acc = np.zeros_like(pts)
        _mollified_filaments(pts, mid, seg, float(sigma), acc)
        out.append(acc[:, c].reshape(desc.shape(*spec)))
    return out


def _segments_for(radius: float, sigma: float, dx: float) -> int:
    return int(max(64, np.ceil(2 * np.pi * radius / min(0.25 * sigma, 0.5 * dx))))


def _check_inside(desc: GridDesc, pts, margin: float, what: str):
    lo = np.asarray(desc.origin) + margin
    hi = np.asarray(desc.origin) + desc.extent - margin
    pts = np.atleast_2d(pts)
    if np.any(pts < lo) or np.any(pts > hi):
        raise SceneError(f"{what} does not fit inside the domain")


def ring_vorticity(desc: GridDesc, rings: list[dict], sigma: float) -> list[np.ndarray]:
    curves, strengths = [], []
    for r in rings:
        n = _segments_for(r["radius"], sigma, desc.dx)
        c = circle_curve(r["center"], r["normal"], r["radius"], n)
        _check_inside(desc, c, sigma, "vortex ring")
        curves.append(c)
        strengths.append(r["strength"])
    return filament_vorticity(desc, curves, strengths, sigma)


def gaussian_vortices(desc: GridDesc, vortices: list[dict]) -> list[np.ndarray]:
    """2D node vorticity of Gaussian cores ``G / (pi s^2) exp(-r^2 / s^2)``."""
    x = desc.positions("node")
    w = np.zeros(desc.shape("node"))
    for v in vortices:
        c = np.asarray(v["center"], float)
        _check_inside(desc, c, v["core"], "point vortex")
        r2 = np.sum((x - c) ** 2, axis=-1)
        w += v["strength"] / (np.pi * v["core"] ** 2) * np.exp(-r2 / v["core"] ** 2)
    return [w]


# ---------------------------------------------------------------------------
# wall vorticity for no-slip boxes


def thom_walls(wall_velocity: dict) -> Callable:
    """Thom wall vorticity on all four walls of a 2D box.

    ``wall_velocity`` maps ``"top"``, ``"bottom"``, ``"left"``, ``"right"`` to
    the tangential wall speed (positive along +x for top/bottom and +y for
    left/right).  Corners take the mean of their two walls.
    """
    U = {k: float(wall_velocity.get(k, 0.0)) for k in ("top", "bottom", "left", "right")}

    def rule(desc: GridDesc, omega, psi):
        h = desc.dx
        w = omega[0]
        p = psi[0]
        top = -2.0 * (p[:, -2] + h * U["top"]) / h ** 2
        bottom = -2.0 * (p[:, 1] - h * U["bottom"]) / h ** 2
        left = -2.0 * (p[1, :] + h * U["left"]) / h ** 2
        right = -2.0 * (p[-2, :] - h * U["right"]) / h ** 2
        w[:, -1] = top
        w[:, 0] = bottom
        w[0, :] = left
        w[-1, :] = right
        w[0, 0] = 0.5 * (bottom[0] + left[0])
        w[-1, 0] = 0.5 * (bottom[-1] + right[0])
        w[0, -1] = 0.5 * (top[0] + left[-1])
        w[-1, -1] = 0.5 * (top[-1] + right[-1])

    return rule


# ---------------------------------------------------------------------------
# body forces


def make_force(spec: dict | None, dim: int) -> Callable | None:
    """Body force from a config descriptor.

    ``{"kind": "constant", "value": [...]}`` (curl-free, injects nothing) or
    ``{"kind": "shear", "amplitude": A, "wavenumber": k}`` giving
    ``f_x = A sin(k y)``.
    """
    if not spec:
        return None
    kind = spec.get("kind")
    if kind == "constant":
        value = np.asarray(spec["value"], float)
        if value.shape != (dim,):
            raise SceneError("constant force needs one component per axis")

        def force(desc, t):
            return [np.full(desc.shape("face", a), value[a]) for a in range(desc.dim)]
        return force
    if kind == "shear":
        amp = float(spec["amplitude"])
        k = float(spec["wavenumber"])

        def force(desc, t):
            f = desc.zeros_faces()
            y = desc.positions("face", 0)[..., 1]
            f[0] = amp * np.sin(k * y)
            return f
        return force
    raise SceneError(f"unknown force kind {kind!r}")


# ---------------------------------------------------------------------------
# scenes


def _grid(p, default_cells, extent) -> GridDesc:
    cells = tuple(int(c) for c in p["cells"])
    if len(cells) != len(default_cells):
        raise SceneError(f"cells must have {len(default_cells)} entries")
    dx = float(extent) / cells[0]
    return GridDesc(cells, dx, p.get("origin"))


def taylor_green(p) -> SceneSetup:
    """Decaying Taylor-Green vortex in a free-slip box [0, 2 pi]^2.

    ``psi = A sin x sin y exp(-2 nu t)`` satisfies the walls exactly.
    """
    n = int(p["resolution"])
    desc = GridDesc((n, n), 2 * np.pi / n)
    amp = float(p["amplitude"])
    nu = float(p["nu"])
    x = desc.positions("node")
    omega = [2.0 * amp * np.sin(x[..., 0]) * np.sin(x[..., 1])]

    def exact(desc_, t):
        decay = amp * np.exp(-2.0 * nu * t)
        xu = desc_.positions("face", 0)
        xv = desc_.positions("face", 1)
        return [
            decay * np.sin(xu[..., 0]) * np.cos(xu[..., 1]),
            -decay * np.cos(xv[..., 0]) * np.sin(xv[..., 1]),
        ]

    return SceneSetup(desc, omega, sim_defaults={"nu": nu, "cfl": p["cfl"], "n_long": 20},
                      exact_velocity=exact)


def leapfrog2d(p) -> SceneSetup:
    """Two counter-rotating pairs of Gaussian vortices, one behind the other."""
    desc = _grid(p, (0, 0), p["extent"])
    vort = []
    for x0 in p["pair_x"]:
        for sign, dy in ((1.0, p["half_gap"]), (-1.0, -p["half_gap"])):
            vort.append({"center": (x0, p["center_y"] + dy),
                         "strength": sign * p["strength"], "core": p["core"]})
    return SceneSetup(desc, gaussian_vortices(desc, vort),
                      sim_defaults={"n_long": 240, "nu": 0.0})


def leapfrog3d(p) -> SceneSetup:
    desc = _grid(p, (0, 0, 0), p["extent"])
    rings = [{"center": (x0, p["center"][0], p["center"][1]), "normal": (1, 0, 0),
              "radius": p["radius"], "strength": p["strength"]} for x0 in p["ring_x"]]
    return SceneSetup(desc, ring_vorticity(desc, rings, p["sigma"]),
                      sim_defaults={"n_long": 40})


def hopf_link(p) -> SceneSetup:
    desc = _grid(p, (0, 0, 0), p["extent"])
    s = p["strength"]
    rings = [
        {"center": p["centers"][0], "normal": (0, 0, 1), "radius": p["radius"], "strength": s},
        {"center": p["centers"][1], "normal": (0, 1, 0), "radius": p["radius"], "strength": -s},
    ]
    return SceneSetup(desc, ring_vorticity(desc, rings, p["sigma"]),
                      sim_defaults={"n_long": 30})


def headon(p) -> SceneSetup:
    """Two coaxial rings travelling towards each other."""
    desc = _grid(p, (0, 0, 0), p["extent"])
    c = p["axis_center"]
    s = p["strength"]
    rings = [
        {"center": (p["ring_x"][0], c[0], c[1]), "normal": (1, 0, 0), "radius": p["radius"], "strength": s},
        {"center": (p["ring_x"][1], c[0], c[1]), "normal": (1, 0, 0), "radius": p["radius"], "strength": -s},
    ]
    return SceneSetup(desc, ring_vorticity(desc, rings, p["sigma"]),
                      sim_defaults={"n_long": 20})


def trefoil(p) -> SceneSetup:
    desc = _grid(p, (0, 0, 0), p["extent"])
    n = _segments_for(3 * p["scale"], p["sigma"], desc.dx) * 3
    curve = trefoil_curve(p["center"], p["scale"], n)
    _check_inside(desc, curve, p["sigma"], "trefoil knot")
    omega = filament_vorticity(desc, [curve], [p["strength"]], p["sigma"])
    return SceneSetup(desc, omega, sim_defaults={"n_long": 40})


def cavity(p) -> SceneSetup:
    """Unit lid-driven cavity; no-slip walls through Thom wall vorticity."""
    n = int(p["resolution"])
    desc = GridDesc((n, n), 1.0 / n)
    nu = float(p["lid_velocity"]) / float(p["re"])
    return SceneSetup(desc, [np.zeros(desc.shape("node"))],
                      wall_vorticity=thom_walls({"top": p["lid_velocity"]}),
                      sim_defaults={"nu": nu, "n_long": 20})


def _flow_scene(p, dim, shape: SolidShape, length: float) -> SceneSetup:
    desc = _grid(p, (0,) * dim, p["extent"])
    U = float(p["inflow"])
    inflow = [0.0] * dim
    inflow[0] = U
    nu = U * length / float(p["re"]) if p.get("re") else 0.0
    omega = desc.zeros_vort()
    return SceneSetup(desc, omega, solids=SolidScene([shape]),
                      sim_defaults={"inflow": inflow, "nu": nu, "penalization": True,
                                    "n_long": 20})


def sphere_flow(p) -> SceneSetup:
    s = SolidShape("sphere", {"radius": p["radius"]}, PoseTrack(translations=[p["center"]]))
    return _flow_scene(p, 3, s, 2 * p["radius"])


def cylinder_flow(p) -> SceneSetup:
    s = SolidShape("cylinder", {"radius": p["radius"], "half_height": p["half_height"]},
                   PoseTrack(translations=[p["center"]]))
    return _flow_scene(p, 3, s, 2 * p["radius"])


def disk_flow(p) -> SceneSetup:
    s = SolidShape("disk", {"radius": p["radius"]}, PoseTrack(translations=[p["center"]]))
    return _flow_scene(p, 2, s, 2 * p["radius"])


def plate_flow(p) -> SceneSetup:
    s = SolidShape("plate", {"half_extents": [0.5 * p["thickness"], 0.5 * p["length"]]},
                   PoseTrack(translations=[p["center"]]))
    return _flow_scene(p, 2, s, p["length"])


SCENE_DEFAULTS: dict[str, dict] = {
    "taylor_green": {"resolution": 64, "amplitude": 1.0, "nu": 0.005, "cfl": 0.4},
    "leapfrog2d": {
        "cells": [256, 256], "extent": 1.0, "pair_x": [0.1, 0.23125], "center_y": 0.5,
        "half_gap": 0.09, "strength": 0.01, "core": 0.02,
    },
    "leapfrog3d": {
        "cells": [64, 64, 64], "extent": 1.0, "ring_x": [0.1, 0.23125], "center": [0.5, 0.5],
        "radius": 0.15, "sigma": 0.04, "strength": 0.02,
    },
    "hopf_link": {
        "cells": [64, 64, 64], "extent": 1.0, "centers": [[0.35, 0.5, 0.5], [0.65, 0.5, 0.5]],
        "radius": 0.18, "sigma": 0.0168, "strength": 0.02,
    },
    "headon": {
        "cells": [64, 64, 64], "extent": 1.0, "ring_x": [0.4, 0.6], "axis_center": [0.5, 0.5],
        "radius": 0.06, "sigma": 0.016, "strength": 0.02,
    },
    "trefoil": {
        "cells": [64, 64, 64], "extent": 1.0, "center": [0.5, 0.5, 0.5], "scale": 0.1,
        "sigma": 0.03, "strength": 0.02,
    },
    "cavity": {"resolution": 128, "re": 100.0, "lid_velocity": 1.0},
    "sphere_flow": {
        "cells": [64, 64, 64], "extent": 1.0, "center": [0.35, 0.5, 0.5], "radius": 0.1,
        "inflow": 0.1, "re": None,
    },
    "cylinder_flow": {
        "cells": [64, 64, 64], "extent": 1.0, "center": [0.35, 0.5, 0.5], "radius": 0.08,
        "half_height": 0.3, "inflow": 0.1, "re": None,
    },
    "disk_flow": {
        "cells": [256, 128], "extent": 4.0, "center": [1.0, 1.0], "radius": 0.25,
        "inflow": 0.1, "re": 9500.0,
    },
    "plate_flow": {
        "cells": [256, 256], "extent": 1.0, "center": [0.3, 0.5], "thickness": 0.02,
        "length": 0.2, "inflow": 0.1, "re": 1000.0,
    },
}

SCENES: dict[str, Callable[[dict], SceneSetup]] = {
    "taylor_green": taylor_green,
    "leapfrog2d": leapfrog2d,
    "leapfrog3d": leapfrog3d,
    "hopf_link": hopf_link,
    "headon": headon,
    "trefoil": trefoil,
    "cavity": cavity,
    "sphere_flow": sphere_flow,
    "cylinder_flow": cylinder_flow,
    "disk_flow": disk_flow,
    "plate_flow": plate_flow,
}


def resolve_params(name: str, params: dict | None = None) -> dict:
    """Scene defaults overlaid with ``params``; unknown keys are rejected."""
    if name not in SCENES:
        raise SceneError(f"unknown scene {name!r}; choose from {sorted(SCENES)}")
    out = dict(SCENE_DEFAULTS[name])
    for k, v in (params or {}).items():
        if k not in out:
            raise SceneError(f"scene {name!r} has no parameter {k!r}")
        out[k] = v
    return out


def build_scene(name: str, params: dict | None = None) -> SceneSetup:
    return SCENES[name](resolve_params(name, params))


def solenoidal_vorticity(desc: GridDesc, u) -> list[np.ndarray]:
    """Curl of a reconstructed velocity (used to clean initial 3D vorticity)."""
    return curl(desc, u)
