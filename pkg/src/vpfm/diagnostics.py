"""
Diagnostics: kinetic energy, enstrophy and vorticity moments, energy-based
failure detection, observed convergence orders, and lid-driven cavity probes
checked against the Ghia et al. (1982) centreline tables.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .grid import FieldSampler, GridDesc, boundary_weights, divergence

DISSIPATION_THRESHOLD = 0.94
EXPLOSION_THRESHOLD = 1.04


def kinetic_energy(desc: GridDesc, u: list[np.ndarray], alpha: list[np.ndarray] | None = None) -> float:
    """Half the integral of |u|^2 (trapezoid weights on wall faces, fluid-fraction weighted)."""
    total = 0.0
    for a in range(desc.dim):
        w = boundary_weights(desc, "face", a)
        if alpha is not None:
            w = w * alpha[a]
        total += float(np.sum(w * u[a] ** 2))
    return 0.5 * total * desc.cell_volume


def vorticity_magnitude(desc: GridDesc, omega: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """|omega| samples and their quadrature weights.

    2D uses the node values directly; 3D averages the four edges of each
    component around every cell centre.
    """
    if desc.dim == 2:
        return np.abs(omega[0]), boundary_weights(desc, "node")
    comps = []
    for a, w in enumerate(omega):
        b, c = (a + 1) % 3, (a + 2) % 3
        lo_b = [slice(None)] * 3
        hi_b = [slice(None)] * 3
        lo_b[b] = slice(0, -1)
        hi_b[b] = slice(1, None)
        avg = 0.5 * (w[tuple(lo_b)] + w[tuple(hi_b)])
        lo_c = [slice(None)] * 3
        hi_c = [slice(None)] * 3
        lo_c[c] = slice(0, -1)
        hi_c[c] = slice(1, None)
        comps.append(0.5 * (avg[tuple(lo_c)] + avg[tuple(hi_c)]))
    mag = np.sqrt(sum(cmp ** 2 for cmp in comps))
    return mag, np.ones(desc.cells)


def vorticity_moment(desc: GridDesc, omega: list[np.ndarray], k: int) -> float:
    mag, w = vorticity_magnitude(desc, omega)
    return float(np.sum(w * mag ** k)) * desc.cell_volume


def enstrophy(desc: GridDesc, omega: list[np.ndarray]) -> float:
    return 0.5 * vorticity_moment(desc, omega, 2)


def max_abs_divergence(desc: GridDesc, u: list[np.ndarray], mask: np.ndarray | None = None) -> float:
    d = np.abs(divergence(desc, u))
    if mask is not None:
        d = d[mask]
    return float(d.max()) if d.size else 0.0


@dataclass
class DiagnosticsRecord:
    frame: int
    time: float
    dt: float
    kinetic_energy: float
    normalized_energy: float
    enstrophy: float
    vorticity_moment_2: float
    vorticity_moment_4: float
    max_abs_div: float
    solver_iterations: int = 0
    solver_residual: float = 0.0
    solver_converged: bool = True
    clamped_particles: int = 0
    unstable_particles: int = 0
    dissipation_failed: bool = False
    explosion_failed: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class FailureTracker:
    """Latching energy-threshold flags."""

    e0: float | None = None
    dissipation_frame: int | None = None
    explosion_frame: int | None = None

    def update(self, frame: int, energy: float) -> tuple[float, bool, bool]:
        if self.e0 is None:
            self.e0 = energy
        ne = energy / self.e0 if self.e0 > 0.0 else 1.0
        if not np.isfinite(ne):
            ne = np.inf
        if self.dissipation_frame is None and ne <= DISSIPATION_THRESHOLD:
            self.dissipation_frame = frame
        if self.explosion_frame is None and ne >= EXPLOSION_THRESHOLD:
            self.explosion_frame = frame
        return ne, self.dissipation_frame is not None, self.explosion_frame is not None


@dataclass
class FailureSummary:
    dissipation_frame: int | None
    explosion_frame: int | None

    @property
    def reported(self) -> tuple[str, int] | None:
        """The failure shown in a summary: explosion wins over dissipation."""
        if self.explosion_frame is not None:
            return ("explosion", self.explosion_frame)
        if self.dissipation_frame is not None:
            return ("dissipation", self.dissipation_frame)
        return None


def failure_scan(energy, normalize: bool = False) -> FailureSummary:
    """First frames where normalized energy reaches 0.94 (dissipation) or 1.04 (explosion)."""
    e = np.asarray(energy, dtype=float)
    if normalize and e.size and e[0] > 0:
        e = e / e[0]
    e = np.where(np.isfinite(e), e, np.inf)
    diss = np.flatnonzero(e <= DISSIPATION_THRESHOLD)
    expl = np.flatnonzero(e >= EXPLOSION_THRESHOLD)
    return FailureSummary(
        int(diss[0]) if diss.size else None,
        int(expl[0]) if expl.size else None,
    )


def energy_rate(records, window: float) -> float | None:
    """Relative energy change per unit time over the trailing ``window``.

    Returns None until the history spans the window.  Averaging over a window
    filters the step-to-step jitter of particle reinitialization.
    """
    if not records:
        return None
    t1 = records[-1].time
    for r in reversed(records):
        if t1 - r.time >= window:
            e1 = records[-1].kinetic_energy
            if e1 <= 0.0:
                return None
            return abs(e1 - r.kinetic_energy) / ((t1 - r.time) * e1)
    return None


# ---------------------------------------------------------------------------
# convergence studies


def rms_difference(a, b) -> float:
    """Root-mean-square of the difference over flattened arrays."""
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def observed_orders(resolutions, errors) -> list[float]:
    """Pairwise orders log(e_h / e_{h/2}) / log(n_{h/2} / n_h)."""
    res = np.asarray(resolutions, dtype=float)
    err = np.asarray(errors, dtype=float)
    return [
        float(np.log(err[i] / err[i + 1]) / np.log(res[i + 1] / res[i]))
        for i in range(len(res) - 1)
    ]


@dataclass
class ConvergenceTable:
    resolutions: list[int]
    l2: list[float]
    linf: list[float]
    extra: dict = field(default_factory=dict)

    @property
    def l2_orders(self) -> list[float]:
        return observed_orders(self.resolutions, self.l2)

    @property
    def linf_orders(self) -> list[float]:
        return observed_orders(self.resolutions, self.linf)

    def order_between(self, n0: int, n1: int, norm: str = "l2") -> float:
        i0 = self.resolutions.index(n0)
        i1 = self.resolutions.index(n1)
        e = self.l2 if norm == "l2" else self.linf
        return float(np.log(e[i0] / e[i1]) / np.log(n1 / n0))

    def format(self) -> str:
        lines = ["n        L2            Linf          order(L2)  order(Linf)"]
        o2 = [None] + self.l2_orders
        oi = [None] + self.linf_orders
        for k, n in enumerate(self.resolutions):
            a = "" if o2[k] is None else f"{o2[k]:.3f}"
            b = "" if oi[k] is None else f"{oi[k]:.3f}"
            lines.append(f"{n:<8d} {self.l2[k]:.6e}  {self.linf[k]:.6e}  {a:>9}  {b:>11}")
        return "\n".join(lines)


def convergence_study(run, resolutions) -> ConvergenceTable:
    """``run(n) -> (l2_error, linf_error)`` evaluated at each resolution."""
    l2, linf = [], []
    for n in resolutions:
        e2, ei = run(n)
        l2.append(float(e2))
        linf.append(float(ei))
    return ConvergenceTable(list(resolutions), l2, linf)


# ---------------------------------------------------------------------------
# lid-driven cavity


def load_ghia() -> dict:
    """Ghia centreline tables keyed by Reynolds number.

    Each entry holds ``u_y, u`` (u along x = 0.5) and ``v_x, v`` (v along
    y = 0.5), sorted by coordinate.
    """
    out: dict = {}
    text = resources.files("vpfm").joinpath("data/ghia1982.csv").read_text()
    rows = [r for r in text.splitlines() if r and not r.startswith("#")]
    for row in csv.DictReader(rows):
        re = int(row["re"])
        d = out.setdefault(re, {"u_y": [], "u": [], "v_x": [], "v": []})
        c, v = float(row["coord"]), float(row["value"])
        if row["profile"] == "u":
            d["u_y"].append(c)
            d["u"].append(v)
        else:
            d["v_x"].append(c)
            d["v"].append(v)
    for d in out.values():
        for cname, vname in (("u_y", "u"), ("v_x", "v")):
            order = np.argsort(d[cname])
            d[cname] = np.asarray(d[cname])[order]
            d[vname] = np.asarray(d[vname])[order]
    return out


def ghia_lid_vorticity(table: dict, npoints: int = 5) -> float:
    """Lid-midpoint vorticity implied by the tabulated u profile.

    Evaluates ``-du/dy`` at y = 1 from the polynomial interpolating the
    ``npoints`` samples nearest the lid.
    """
    y = table["u_y"][-npoints:]
    u = table["u"][-npoints:]
    coef = np.polyfit(y - 1.0, u, npoints - 1)
    return -float(coef[-2])


@dataclass
class CavityProbe:
    re: float
    midpoint_top_vorticity: float
    u_min_vertical: float
    v_max_horizontal: float
    v_min_horizontal: float

    def reference(self) -> "CavityProbe":
        tables = load_ghia()
        t = tables[int(round(self.re))]
        return CavityProbe(
            self.re, ghia_lid_vorticity(t), float(t["u"].min()),
            float(t["v"].max()), float(t["v"].min()),
        )

    def relative_errors(self) -> dict:
        ref = self.reference()
        out = {}
        for k in ("midpoint_top_vorticity", "u_min_vertical", "v_max_horizontal", "v_min_horizontal"):
            r = getattr(ref, k)
            out[k] = abs(getattr(self, k) - r) / abs(r)
        return out


def cavity_probe(desc: GridDesc, u: list[np.ndarray], omega: list[np.ndarray], re: float,
                 samples: int = 1025) -> CavityProbe:
    """Probe values sampled with the solver's interpolation kernel on a unit cavity."""
    lo = np.asarray(desc.origin)
    ext = desc.extent
    s = np.linspace(0.0, 1.0, samples)
    vs = FieldSampler.velocity(desc, u)
    vert = np.stack([np.full(samples, lo[0] + 0.5 * ext[0]), lo[1] + s * ext[1]], axis=1)
    horiz = np.stack([lo[0] + s * ext[0], np.full(samples, lo[1] + 0.5 * ext[1])], axis=1)
    uu = vs.value(vert)[:, 0]
    vv = vs.value(horiz)[:, 1]
    ws = FieldSampler(desc, omega, desc.vort_specs())
    top = np.array([[lo[0] + 0.5 * ext[0], lo[1] + ext[1]]])
    w_top = float(ws.value(top)[0, 0])
    return CavityProbe(re, w_top, float(uu.min()), float(vv.max()), float(vv.min()))
