"""
Elliptic solves for velocity reconstruction.

* Vector potential: ``-lap Psi_d = omega_d`` per component with Psi = 0 on and
  outside the domain boundary (or an even ghost along cell-centred axes).
* Harmonic correction: an alpha-weighted finite-volume Laplace problem for Phi on
  every cell that is not deep inside a solid, with Neumann data from solid and
  domain-boundary velocities.  Final velocity is ``u = u_omega - grad Phi``.

Linear systems are solved with conjugate gradients preconditioned by a
geometric multigrid V-cycle (Galerkin coarse operators, multicolour
Gauss-Seidel).  A sine/cosine-transform solver is provided as a fast direct
path for the box-shaped vector-potential problem.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.fft
import scipy.sparse as sp

from .grid import GridDesc, check_shapes, curl_potential, divergence


class SolverError(RuntimeError):
    """Raised when a linear solve fails to reach its tolerance."""

    def __init__(self, msg, stats=None):
        super().__init__(msg)
        self.stats = stats


@dataclass
class SolverStats:
    iterations: int = 0
    final_relative_residual: float = 0.0
    converged: bool = True

    def merge(self, other: "SolverStats") -> "SolverStats":
        return SolverStats(
            max(self.iterations, other.iterations),
            max(self.final_relative_residual, other.final_relative_residual),
            self.converged and other.converged,
        )


# ---------------------------------------------------------------------------
# multigrid-preconditioned CG


def _prolong_1d(m: int) -> sp.csr_matrix:
    """Linear interpolation from (m+1)//2 coarse to m fine lattice points."""
    mc = (m + 1) // 2
    rows, cols, vals = [], [], []
    for i in range(m):
        if i % 2 == 0:
            rows.append(i)
            cols.append(i // 2)
            vals.append(1.0)
        else:
            for j in ((i - 1) // 2, (i + 1) // 2):
                if j < mc:
                    rows.append(i)
                    cols.append(j)
                    vals.append(0.5)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, mc))


def _prolongation(shape) -> sp.csr_matrix:
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), [_prolong_1d(m) for m in shape])


def _color_sets(shape) -> list[np.ndarray]:
    idx = np.indices(shape).reshape(len(shape), -1)
    code = sum((idx[a] % 2) << a for a in range(len(shape)))
    return [np.flatnonzero(code == c) for c in range(2 ** len(shape))]


class _Level:
    def __init__(self, A: sp.csr_matrix, shape):
        self.A = A
        self.shape = shape
        diag = A.diagonal()
        self.colors = []
        for idx in _color_sets(shape):
            if idx.size:
                self.colors.append((idx, A[idx], diag[idx]))

    def smooth(self, x, b, reverse=False):
        order = reversed(self.colors) if reverse else self.colors
        for idx, rows, d in order:
            x[idx] += (b[idx] - rows @ x) / d


class MGPCG:
    """CG with a symmetric multigrid V-cycle preconditioner.

    ``A`` acts on a box lattice of ``shape`` in C order.  ``nullspace=True``
    declares a constant null space over ``active`` (pure Neumann); rhs and
    iterates are then projected to zero mean on ``active``.
    """

    def __init__(self, A, shape, nullspace: bool = False, active: np.ndarray | None = None,
                 coarse_size: int = 400):
        A = sp.csr_matrix(A)
        if A.shape[0] != int(np.prod(shape)):
            raise ValueError("operator size does not match lattice shape")
        self.shape = tuple(shape)
        self.nullspace = nullspace
        self.active = (
            np.ones(A.shape[0], dtype=bool) if active is None else np.asarray(active).ravel()
        )
        self.levels: list[_Level] = []
        self.prolong: list[sp.csr_matrix] = []
        shp = self.shape
        while True:
            self.levels.append(_Level(A, shp))
            if np.prod(shp) <= coarse_size or min(shp) <= 2:
                break
            P = _prolongation(shp)
            self.prolong.append(P)
            A = sp.csr_matrix(P.T @ A @ P)
            shp = tuple((m + 1) // 2 for m in shp)
        Ac = self.levels[-1].A.toarray()
        self.coarse_inv = np.linalg.pinv(Ac) if nullspace else np.linalg.inv(Ac)
        self.A = self.levels[0].A

    def _project(self, v):
        if self.nullspace:
            v[self.active] -= v[self.active].mean()
            v[~self.active] = 0.0
        return v

    def vcycle(self, b, level=0):
        lv = self.levels[level]
        if level == len(self.levels) - 1:
            return self.coarse_inv @ b
        x = np.zeros_like(b)
        lv.smooth(x, b)
        r = b - lv.A @ x
        P = self.prolong[level]
        x += P @ self.vcycle(P.T @ r, level + 1)
        lv.smooth(x, b, reverse=True)
        return x

    def solve(self, b, x0=None, tol: float = 1e-6, max_iter: int = 200,
              precondition: bool = True) -> tuple[np.ndarray, SolverStats]:
        b = self._project(np.asarray(b, dtype=float).ravel().copy())
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b), SolverStats(0, 0.0, True)
        x = np.zeros_like(b) if x0 is None else self._project(np.asarray(x0, float).ravel().copy())
        r = b - self.A @ x
        self._project(r)
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, SolverStats(0, res, True)
        M = self.vcycle
        if not precondition:
            d = self.A.diagonal().copy()
            d[d == 0.0] = 1.0
            M = lambda v: v / d  # noqa: E731
        z = self._project(M(r))
        p = z.copy()
        rz = r @ z
        for it in range(1, max_iter + 1):
            Ap = self.A @ p
            pAp = p @ Ap
            if not pAp > 0.0 or not np.isfinite(pAp):
                if precondition:
                    return self.solve(b, x, tol, max_iter, precondition=False)
                raise SolverError("CG breakdown", SolverStats(it, res, False))
            a = rz / pAp
            x += a * p
            r -= a * Ap
            self._project(r)
            res = np.linalg.norm(r) / bnorm
            if res <= tol:
                return self._project(x), SolverStats(it, res, True)
            z = self._project(M(r))
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        return self._project(x), SolverStats(max_iter, res, False)


def laplacian_matrix_1d(m: int, ghost: str = "zero") -> sp.csr_matrix:
    """Negative second difference (times dx^2) on m unknowns."""
    main = np.full(m, 2.0)
    if ghost == "neumann":
        main[0] = main[-1] = 1.0
    elif ghost != "zero":
        raise ValueError(f"unknown ghost rule {ghost!r}")
    off = -np.ones(m - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def kron_laplacian(ops, dx: float) -> sp.csr_matrix:
    """SPD ``-lap`` on a tensor lattice from 1D negative second differences."""
    eyes = [sp.identity(op.shape[0], format="csr") for op in ops]
    total = None
    for a in range(len(ops)):
        mats = [ops[k] if k == a else eyes[k] for k in range(len(ops))]
        term = reduce(lambda x, y: sp.kron(x, y, format="csr"), mats)
        total = term if total is None else total + term
    return sp.csr_matrix(total / dx ** 2)


# ---------------------------------------------------------------------------
# vector potential


def _psi_axes(desc: GridDesc, layout, axis, ghost):
    """Per-axis (unknown slice, ghost rule, transform type) for one component."""
    off = desc.offset(layout, axis)
    out = []
    for a in range(desc.dim):
        if off[a] == 0.0:
            out.append((slice(1, -1), "zero", "node"))
        else:
            out.append((slice(None), ghost, "cell"))
    return out


class VectorPotentialSolver:
    """Solves ``-lap Psi = omega`` per vorticity component.

    ``method`` is ``"spectral"`` (exact transform solve) or ``"mgpcg"``.
    ``ghost`` sets the closure along cell-centred axes of 3D edge components:
    ``"zero"`` (Psi = 0 outside) or ``"neumann"`` (even ghost).
    """

    def __init__(self, desc: GridDesc, method: str = "spectral", ghost: str = "zero",
                 tol: float = 1e-8, max_iter: int = 200):
        if method not in ("spectral", "mgpcg"):
            raise ValueError(f"unknown vector potential method {method!r}")
        self.desc = desc
        self.method = method
        self.ghost = ghost
        self.tol = tol
        self.max_iter = max_iter
        self.specs = desc.vort_specs()
        self._axes = [_psi_axes(desc, *s, ghost) for s in self.specs]
        self._mg: list[MGPCG | None] = [None] * len(self.specs)
        self._eig: list[np.ndarray | None] = [None] * len(self.specs)
        self._prev: list[np.ndarray | None] = [None] * len(self.specs)

    def _unknown_shape(self, c):
        full = self.desc.shape(*self.specs[c])
        return tuple(len(range(*a[0].indices(n))) for a, n in zip(self._axes[c], full))

    def _eigenvalues(self, c):
        if self._eig[c] is None:
            shape = self._unknown_shape(c)
            lams = []
            for m, (_, ghost, kind) in zip(shape, self._axes[c]):
                if ghost == "neumann" and kind == "cell":
                    k = np.arange(m)
                    lam = 2.0 - 2.0 * np.cos(np.pi * k / m)
                else:
                    k = np.arange(1, m + 1)
                    lam = 2.0 - 2.0 * np.cos(np.pi * k / (m + 1))
                lams.append(lam)
            grids = np.meshgrid(*lams, indexing="ij")
            eig = sum(grids) / self.desc.dx ** 2
            self._eig[c] = eig
        return self._eig[c]

    def _spectral(self, c, rhs):
        kinds = [(2 if (g == "neumann" and k == "cell") else 1) for _, g, k in self._axes[c]]
        hat = rhs
        for a, t in enumerate(kinds):
            hat = scipy.fft.dst(hat, type=1, axis=a) if t == 1 else scipy.fft.dct(hat, type=2, axis=a)
        eig = self._eigenvalues(c)
        with np.errstate(divide="ignore", invalid="ignore"):
            hat = np.where(eig > 0.0, hat / eig, 0.0)
        for a, t in enumerate(kinds):
            hat = scipy.fft.idst(hat, type=1, axis=a) if t == 1 else scipy.fft.idct(hat, type=2, axis=a)
        return hat

    def matrix(self, c) -> sp.csr_matrix:
        shape = self._unknown_shape(c)
        ops = [laplacian_matrix_1d(m, g if k == "cell" else "zero")
               for m, (_, g, k) in zip(shape, self._axes[c])]
        return kron_laplacian(ops, self.desc.dx)

    def _nullspace(self, c):
        return all(g == "neumann" and k == "cell" for _, g, k in self._axes[c])

    def solve(self, omega: list[np.ndarray]) -> tuple[list[np.ndarray], SolverStats]:
        check_shapes(self.desc, omega, self.specs)
        psi = []
        stats = SolverStats()
        for c, w in enumerate(omega):
            if not np.all(np.isfinite(w)):
                raise SolverError("non-finite vorticity passed to vector potential solve")
            sl = tuple(a[0] for a in self._axes[c])
            rhs = w[sl]
            out = np.zeros_like(w)
            if self.method == "spectral":
                out[sl] = self._spectral(c, rhs)
            else:
                if self._mg[c] is None:
                    self._mg[c] = MGPCG(self.matrix(c), rhs.shape, nullspace=self._nullspace(c))
                x, st = self._mg[c].solve(rhs, self._prev[c], self.tol, self.max_iter)
                if not st.converged:
                    raise SolverError(f"vector potential solve did not converge: {st}", st)
                self._prev[c] = x
                stats = stats.merge(st)
                out[sl] = x.reshape(rhs.shape)
            psi.append(out)
        return psi, stats


def curl_psi(desc: GridDesc, psi: list[np.ndarray]) -> list[np.ndarray]:
    """Solenoidal velocity from the vector potential."""
    return curl_potential(desc, psi)


# ---------------------------------------------------------------------------
# cut-cell harmonic correction


@dataclass
class BoundaryFaces:
    """Face data describing solids for the harmonic solve.

    ``alpha`` are fluid fractions per face array; ``u_solid`` the solid normal
    velocity on faces; ``interior`` the cell mask of cells deep inside solids.
    """

    alpha: list[np.ndarray]
    u_solid: list[np.ndarray]
    interior: np.ndarray

    @classmethod
    def empty(cls, desc: GridDesc) -> "BoundaryFaces":
        return cls(
            [np.ones(desc.shape("face", a)) for a in range(desc.dim)],
            desc.zeros_faces(),
            np.zeros(desc.cells, dtype=bool),
        )


def _domain_face_slices(desc, a):
    lo = [slice(None)] * desc.dim
    hi = [slice(None)] * desc.dim
    lo[a] = 0
    hi[a] = -1
    return tuple(lo), tuple(hi)


def effective_fractions(desc: GridDesc, bf: BoundaryFaces, threshold: float = 0.1):
    """Fractions used by the solve: small fractions, faces touching interior
    cells and domain-boundary faces are closed (alpha = 0)."""
    out = []
    for a in range(desc.dim):
        al = np.asarray(bf.alpha[a], dtype=float)
        if al.min() < 0.0 or al.max() > 1.0:
            raise ValueError("face fractions must lie in [0, 1]")
        al = np.where(al > threshold, al, 0.0)
        inner = [slice(None)] * desc.dim
        inner[a] = slice(1, -1)
        lo = [slice(None)] * desc.dim
        hi = [slice(None)] * desc.dim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        blocked = bf.interior[tuple(lo)] | bf.interior[tuple(hi)]
        sub = al[tuple(inner)]
        sub[blocked] = 0.0
        s0, s1 = _domain_face_slices(desc, a)
        al[s0] = 0.0
        al[s1] = 0.0
        out.append(al)
    return out


class HarmonicSolver:
    """Cut-cell finite-volume solve for Phi and the no-through velocity."""

    def __init__(self, desc: GridDesc, threshold: float = 0.1, tol: float = 1e-10,
                 max_iter: int = 300):
        self.desc = desc
        self.threshold = threshold
        self.tol = tol
        self.max_iter = max_iter
        self._key = None
        self._mg: MGPCG | None = None
        self._prev = None
        self.last_alpha = None

    def assemble(self, alpha_eff: list[np.ndarray], interior: np.ndarray):
        """SPSD matrix on all cells; interior or isolated cells get identity rows."""
        desc = self.desc
        shape = desc.cells
        n = int(np.prod(shape))
        ids = np.arange(n).reshape(shape)
        inv = 1.0 / desc.dx ** 2
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        for a in range(desc.dim):
            lo = [slice(None)] * desc.dim
            hi = [slice(None)] * desc.dim
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            inner = [slice(None)] * desc.dim
            inner[a] = slice(1, -1)
            w = alpha_eff[a][tuple(inner)].ravel() * inv
            i0 = ids[tuple(lo)].ravel()
            i1 = ids[tuple(hi)].ravel()
            keep = w > 0.0
            w, i0, i1 = w[keep], i0[keep], i1[keep]
            rows += [i0, i1]
            cols += [i1, i0]
            vals += [-w, -w]
            np.add.at(diag, i0, w)
            np.add.at(diag, i1, w)
        active = diag > 0.0
        diag[~active] = 1.0
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(diag)
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        return A, active.reshape(shape)

    def rhs(self, u_omega, alpha_eff, u_solid, boundary_normal):
        """-(1/dx) sum_f [alpha u_omega + (1 - alpha) u_solid] . n per cell."""
        desc = self.desc
        flux = np.zeros(desc.cells)
        for a in range(desc.dim):
            us = np.asarray(u_solid[a], dtype=float).copy()
            s0, s1 = _domain_face_slices(desc, a)
            us[s0] = boundary_normal[a][s0]
            us[s1] = boundary_normal[a][s1]
            f = alpha_eff[a] * u_omega[a] + (1.0 - alpha_eff[a]) * us
            flux += np.diff(f, axis=a)
        return -flux / desc.dx

    def solve(
        self,
        u_omega: list[np.ndarray],
        bf: BoundaryFaces,
        boundary_normal: list[np.ndarray] | None = None,
    ) -> tuple[np.ndarray, list[np.ndarray], SolverStats]:
        desc = self.desc
        check_shapes(desc, u_omega, desc.face_specs())
        if boundary_normal is None:
            boundary_normal = desc.zeros_faces()
        alpha = effective_fractions(desc, bf, self.threshold)
        self.last_alpha = alpha
        key = tuple(hash(a.tobytes()) for a in alpha)
        if key != self._key:
            A, active = self.assemble(alpha, bf.interior)
            self._mg = MGPCG(A, desc.cells, nullspace=True, active=active)
            self._active = active
            self._key = key
            self._prev = None
        b = self.rhs(u_omega, alpha, bf.u_solid, boundary_normal)
        b[~self._active] = 0.0
        x, stats = self._mg.solve(b.ravel(), self._prev, self.tol, self.max_iter)
        if not stats.converged:
            raise SolverError(f"harmonic solve did not converge: {stats}", stats)
        self._prev = x
        phi = x.reshape(desc.cells)
        u = self.correct(u_omega, phi, alpha, bf.u_solid, boundary_normal)
        return phi, u, stats

    def correct(self, u_omega, phi, alpha, u_solid, boundary_normal):
        """u = u_omega - grad Phi on open faces, solid/boundary velocity elsewhere."""
        desc = self.desc
        out = []
        for a in range(desc.dim):
            inner = [slice(None)] * desc.dim
            inner[a] = slice(1, -1)
            inner = tuple(inner)
            u = np.asarray(u_solid[a], dtype=float).copy()
            grad = np.diff(phi, axis=a) / desc.dx
            opened = alpha[a][inner] > 0.0
            ui = u[inner]
            ui[opened] = u_omega[a][inner][opened] - grad[opened]
            u[inner] = ui
            s0, s1 = _domain_face_slices(desc, a)
            u[s0] = boundary_normal[a][s0]
            u[s1] = boundary_normal[a][s1]
            out.append(u)
        return out


def cell_flux_residual(desc: GridDesc, u, alpha_eff, u_solid, boundary_normal=None):
    """Per-cell net outward flux of the blended face velocity (times 1/dx)."""
    if boundary_normal is None:
        boundary_normal = desc.zeros_faces()
    div = np.zeros(desc.cells)
    for a in range(desc.dim):
        us = np.asarray(u_solid[a], dtype=float).copy()
        s0, s1 = _domain_face_slices(desc, a)
        us[s0] = boundary_normal[a][s0]
        us[s1] = boundary_normal[a][s1]
        f = alpha_eff[a] * u[a] + (1.0 - alpha_eff[a]) * us
        div += np.diff(f, axis=a)
    return div / desc.dx


@dataclass
class Reconstruction:
    psi: list[np.ndarray]
    u_omega: list[np.ndarray]
    phi: np.ndarray
    u: list[np.ndarray]
    stats: SolverStats = field(default_factory=SolverStats)


class VelocityReconstructor:
    """Vorticity -> velocity: vector potential, curl, cut-cell harmonic correction."""

    def __init__(self, desc: GridDesc, psi_method: str = "spectral", psi_ghost: str = "zero",
                 tol: float = 1e-8, harmonic_tol: float = 1e-10, max_iter: int = 300):
        self.desc = desc
        self.psi_solver = VectorPotentialSolver(desc, psi_method, psi_ghost, tol, max_iter)
        self.harmonic = HarmonicSolver(desc, tol=harmonic_tol, max_iter=max_iter)

    def __call__(self, omega, bf: BoundaryFaces | None = None, boundary_normal=None,
                 skip_harmonic_if_trivial: bool = True) -> Reconstruction:
        desc = self.desc
        psi, st = self.psi_solver.solve(omega)
        u_omega = curl_psi(desc, psi)
        trivial = bf is None and (boundary_normal is None or all(
            not np.any(b) for b in boundary_normal))
        if trivial and skip_harmonic_if_trivial:
            # Psi = 0 on the walls already gives zero normal flux there
            return Reconstruction(psi, u_omega, np.zeros(desc.cells),
                                  [c.copy() for c in u_omega], st)
        phi, u, st2 = self.harmonic.solve(u_omega, bf or BoundaryFaces.empty(desc), boundary_normal)
        return Reconstruction(psi, u_omega, phi, u, st.merge(st2))


def max_divergence(desc: GridDesc, u, mask: np.ndarray | None = None) -> float:
    d = np.abs(divergence(desc, u))
    if mask is not None:
        d = d[mask]
    return float(d.max()) if d.size else 0.0
