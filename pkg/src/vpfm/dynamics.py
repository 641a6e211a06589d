"""
Time integration.

One step runs, in order: long/short map reinitialization, time-step
selection, solid update, midpoint velocity, RK4 march of particles and maps,
push-forward and P2G, grid viscosity and forcing, velocity reconstruction,
and back-accumulation of the step's vorticity sources onto the particles'
initial vorticity.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import diagnostics as dg
from .elliptic import BoundaryFaces, Reconstruction, SolverError, VelocityReconstructor
from .flowmap import (
    ParticleSet,
    SegmentClock,
    connect_jacobians,
    push_forward_gradient,
    push_forward_vorticity,
    rk4_march,
)
from .grid import FieldSampler, GridDesc, curl, laplacian
from .solids import (
    SolidMasks,
    SolidScene,
    penalization_velocity,
    penalization_vorticity,
    voxelize,
)
from .transfer import g2p, g2p_value, p2g, reinit_long, reinit_short

log = logging.getLogger(__name__)


class InstabilityError(RuntimeError):
    """Raised when the simulation state becomes non-finite."""


@dataclass
class SimConfig:
    """Numerical parameters of a run.

    ``lam`` is either a number (1/time) or ``"auto"`` for 1/dt; in both cases
    lam*dt is clamped to at most 1.  ``inflow`` is a uniform far-field velocity
    imposed as the normal velocity on the domain boundary.
    """

    cells: tuple
    dx: float
    origin: tuple | None = None
    n_long: int = 20
    n_short: int = 1
    cfl: float | None = None
    nu: float = 0.0
    penalization: bool = False
    lam: float | str = "auto"
    particles_per_cell: int | None = None
    jitter: float = 0.0
    seed: int = 0
    use_hessian: bool = True
    psi_method: str = "spectral"
    psi_ghost: str = "zero"
    tol: float = 1e-8
    harmonic_tol: float = 1e-10
    max_iter: int = 300
    viscous_dt_cap: bool = True
    dt_max: float | None = None
    fixed_dt: float | None = None
    inflow: tuple | None = None
    fractions: str = "cut"
    midpoint: str = "semi_lagrangian"
    max_steps: int | None = None
    max_time: float | None = None
    clean_initial_vorticity: bool = True

    def __post_init__(self):
        self.cells = tuple(int(c) for c in self.cells)
        dim = len(self.cells)
        if self.cfl is None:
            self.cfl = 1.0 if dim == 2 else 0.5
        if self.particles_per_cell is None:
            self.particles_per_cell = 4 if dim == 2 else 8
        if not self.cfl > 0:
            raise ValueError("cfl must be positive")
        if not (1 <= self.n_short <= self.n_long):
            raise ValueError("need 1 <= n_short <= n_long")
        if self.nu < 0:
            raise ValueError("viscosity must be non-negative")
        if self.midpoint not in ("semi_lagrangian", "none"):
            raise ValueError(f"unknown midpoint estimator {self.midpoint!r}")
        if self.fractions not in ("cut", "voxel"):
            raise ValueError(f"unknown fraction mode {self.fractions!r}")

    @property
    def dim(self) -> int:
        return len(self.cells)

    def grid(self) -> GridDesc:
        return GridDesc(self.cells, self.dx, self.origin)


WallRule = Callable[[GridDesc, list, list], None]


@dataclass
class StepInfo:
    dt: float
    clamped: int
    unstable: int
    stats: object
    phases: list = field(default_factory=list)


class Simulation:
    """Grid fields plus particles advanced by :meth:`step`.

    ``wall_vorticity`` is an optional hook ``rule(desc, omega, psi)`` that
    overwrites wall vorticity in place (used for no-slip walls).
    ``force`` is an optional ``f(desc, t) -> face field`` body force.
    """

    def __init__(
        self,
        config: SimConfig,
        omega0: list[np.ndarray],
        scene: SolidScene | None = None,
        wall_vorticity: WallRule | None = None,
        force: Callable | None = None,
    ):
        self.config = config
        self.desc = config.grid()
        self.scene = scene if scene else None
        self.wall_vorticity = wall_vorticity
        self.force = force
        self.recon = VelocityReconstructor(
            self.desc, config.psi_method, config.psi_ghost, config.tol,
            config.harmonic_tol, config.max_iter,
        )
        self.clock = SegmentClock(config.n_long, config.n_short)
        self.time = 0.0
        self.omega = [np.array(w, dtype=float) for w in omega0]
        self.masks: SolidMasks | None = None
        self._static_masks: SolidMasks | None = None
        if self.scene is not None:
            self.masks = voxelize(self.desc, self.scene, 0.0, 1.0, config.fractions)
        self.boundary_normal = self._boundary_normal()
        self.particles: ParticleSet | None = None
        self.alive: np.ndarray | None = None
        self.last_dt = 0.0
        self.phase_log: list[str] = []
        rec = self._reconstruct(self.omega)
        if config.clean_initial_vorticity and self.desc.dim == 3:
            # drop the non-solenoidal part of sampled 3D vorticity; the harmonic
            # part is left out so solids do not seed surface vorticity
            self.omega = curl(self.desc, rec.u_omega)
            rec = self._reconstruct(self.omega)
        self._accept(rec)
        if self.wall_vorticity is not None:
            self.wall_vorticity(self.desc, self.omega, self.psi)
        self.failures = dg.FailureTracker()
        self.records: list[dg.DiagnosticsRecord] = []
        self.records.append(self._record(0.0, rec.stats, 0, 0))

    # -- helpers --------------------------------------------------------

    def _boundary_normal(self):
        if self.config.inflow is None:
            return None
        U = np.asarray(self.config.inflow, dtype=float)
        return [np.full(self.desc.shape("face", a), U[a]) for a in range(self.desc.dim)]

    def _bf(self) -> BoundaryFaces | None:
        return self.masks.boundary_faces() if self.masks is not None else None

    def _reconstruct(self, omega) -> Reconstruction:
        return self.recon(omega, self._bf(), self.boundary_normal)

    def _accept(self, rec: Reconstruction):
        self.psi = rec.psi
        self.phi = rec.phi
        self.u = rec.u

    @property
    def fluid_alpha(self):
        return self.masks.alpha if self.masks is not None else None

    def energy(self) -> float:
        return dg.kinetic_energy(self.desc, self.u, self.fluid_alpha)

    def _record(self, dt, stats, clamped, unstable) -> dg.DiagnosticsRecord:
        e = self.energy()
        ne, diss, expl = self.failures.update(self.clock.step, e)
        mask = None
        if self.masks is not None:
            mask = ~self.masks.chi_S
        return dg.DiagnosticsRecord(
            frame=self.clock.step,
            time=self.time,
            dt=dt,
            kinetic_energy=e,
            normalized_energy=ne,
            enstrophy=dg.enstrophy(self.desc, self.omega),
            vorticity_moment_2=dg.vorticity_moment(self.desc, self.omega, 2),
            vorticity_moment_4=dg.vorticity_moment(self.desc, self.omega, 4),
            max_abs_div=dg.max_abs_divergence(self.desc, self.u, mask),
            solver_iterations=int(stats.iterations),
            solver_residual=float(stats.final_relative_residual),
            solver_converged=bool(stats.converged),
            clamped_particles=int(clamped),
            unstable_particles=int(unstable),
            dissipation_failed=diss,
            explosion_failed=expl,
        )

    def choose_dt(self) -> float:
        cfg = self.config
        if cfg.fixed_dt is not None:
            dt = float(cfg.fixed_dt)
        else:
            umax = max(float(np.abs(c).max()) for c in self.u)
            dt = cfg.cfl * self.desc.dx / max(umax, 1e-6 * self.desc.dx)
        if cfg.viscous_dt_cap and cfg.nu > 0:
            dt = min(dt, self.desc.dx ** 2 / (2 * self.desc.dim * cfg.nu))
        elif cfg.nu * dt / self.desc.dx ** 2 > 1.0 / (2 * self.desc.dim):
            log.warning("explicit viscosity step exceeds the stability bound")
        if cfg.dt_max is not None:
            dt = min(dt, cfg.dt_max)
        if cfg.max_time is not None:
            remaining = cfg.max_time - self.time
            if remaining > 0:
                dt = min(dt, remaining)
        return dt

    def lam(self, dt: float) -> float:
        lam = 1.0 / dt if self.config.lam == "auto" else float(self.config.lam)
        return min(lam, 1.0 / dt)

    # -- phases ---------------------------------------------------------

    def reinitialize(self):
        cfg = self.config
        if self.clock.long_due() or self.particles is None:
            self.phase_log.append("reinit_long")
            self.particles = reinit_long(self.desc, self.omega, cfg.particles_per_cell,
                                         cfg.jitter, cfg.seed + self.clock.step)
            self.alive = np.ones(len(self.particles), dtype=bool)
        if self.clock.short_due() or self.clock.long_due():
            self.phase_log.append("reinit_short")
            reinit_short(self.desc, self.omega, self.particles)

    def midpoint_velocity(self, dt: float) -> list[np.ndarray]:
        """Velocity half a step ahead from a semi-Lagrangian half-step of omega."""
        if self.config.midpoint == "none":
            return self.u
        desc = self.desc
        us = FieldSampler.velocity(desc, self.u)
        ws = FieldSampler(desc, self.omega, desc.vort_specs())
        half = 0.5 * dt
        out = []
        for c, spec in enumerate(desc.vort_specs()):
            x = desc.positions(*spec).reshape(-1, desc.dim)
            u0, g = us.value_and_gradient(x)
            # second-order backtrace, x - h u(x - h u / 2) expanded with the sampled gradient
            xb = x - half * u0 + 0.5 * half * half * np.einsum("nik,nk->ni", g, u0)
            w = ws.value(xb)
            # the B-spline sampler smooths at grid samples, so only its increment
            # along the backtrace is used; dt -> 0 then returns omega exactly
            k = c if desc.dim == 3 else 0
            w_c = self.omega[c].ravel() + (w[:, k] - ws.value(x)[:, k])
            if desc.dim == 3:
                # vortex stretching over the half step
                w_c = w_c + half * np.einsum("nk,nk->n", g[:, c, :], w)
            out.append(w_c.reshape(desc.shape(*spec)))
        return self._reconstruct(out).u

    def march(self, u_mid, dt) -> tuple[int, int]:
        p = self.particles
        # the Hessian term of the gradient push-forward vanishes in 2D
        use_hess = self.config.use_hessian and self.desc.dim == 3
        rep = rk4_march(p, self.desc, u_mid, dt, use_hess)
        if rep.unstable.size:
            self._reinit_particles(rep.unstable)
        lo = np.asarray(self.desc.origin) - 0.5 * self.desc.dx
        hi = np.asarray(self.desc.origin) + self.desc.extent + 0.5 * self.desc.dx
        inside = np.all((p.pos >= lo) & (p.pos <= hi), axis=1)
        self.alive &= inside
        return rep.clamped, int(rep.unstable.size)

    def _reinit_particles(self, idx):
        """Early restart of the maps of individual particles from the grid."""
        p = self.particles
        bad_pos = ~np.isfinite(p.pos[idx]).all(axis=1)
        self.alive[idx[bad_pos]] = False
        p.pos[idx[bad_pos]] = np.asarray(self.desc.origin)
        eye = np.eye(self.desc.dim)
        for m in (p.F_ab, p.T_ab, p.F_bc, p.T_bc):
            m[idx] = eye
        p.gradF_bc[idx] = 0.0
        w, gw = g2p(self.desc, self.omega, p.pos[idx])
        p.omega_a[idx] = w
        p.omega_b[idx] = w
        p.grad_omega_b[idx] = gw
        log.info("restarted flow maps of %d particles", idx.size)

    def advect_and_p2g(self):
        p = self.particles
        F_ac, T_ac = connect_jacobians(p)
        w = push_forward_vorticity(p, F_ac)
        gw = push_forward_gradient(p, self.config.use_hessian)
        a = self.alive
        self.omega = p2g(self.desc, p.pos[a], w[a], gw[a])
        return T_ac

    def viscosity_increment(self, dt) -> list[np.ndarray] | None:
        nu = self.config.nu
        if nu == 0.0:
            return None
        return [
            dt * nu * laplacian(self.desc, w, *spec, ghost="neumann")
            for w, spec in zip(self.omega, self.desc.vort_specs())
        ]

    def force_increment(self, dt) -> list[np.ndarray] | None:
        if self.force is None:
            return None
        f = self.force(self.desc, self.time)
        return [dt * c for c in curl(self.desc, f)]

    def accumulate_path_integral(self, dt, T_ac, d_force, d_visc):
        """Refresh grid vorticity from u and push the step's sources to particles."""
        desc = self.desc
        self.omega = curl(desc, self.u)
        if self.wall_vorticity is not None:
            self.wall_vorticity(desc, self.omega, self.psi)
        delta = None

        def add(a, b):
            return b if a is None else [x + y for x, y in zip(a, b)]

        if self.config.penalization and self.masks is not None:
            u_pen = penalization_velocity(desc, self.u, self.masks)
            w_pen = penalization_vorticity(desc, u_pen, self.lam(dt))
            delta = add(delta, [dt * w for w in w_pen])
        if d_force is not None:
            delta = add(delta, d_force)
        if d_visc is not None:
            delta = add(delta, d_visc)
        if delta is None:
            return
        p = self.particles
        a = self.alive
        inc = g2p_value(desc, delta, p.pos[a])
        if desc.dim == 3:
            inc = np.einsum("nij,nj->ni", T_ac[a], inc)
        p.omega_a[a] += inc

    # -- driver ---------------------------------------------------------

    def step(self) -> StepInfo:
        cfg = self.config
        self.phase_log = []
        self.reinitialize()
        dt = self.choose_dt()
        if self.scene is not None and not self.scene.is_static():
            self.masks = voxelize(self.desc, self.scene, self.time + dt, dt, cfg.fractions)
        self.phase_log.append("midpoint")
        u_mid = self.midpoint_velocity(dt)
        self.phase_log.append("march")
        clamped, unstable = self.march(u_mid, dt)
        self.phase_log.append("p2g")
        T_ac = self.advect_and_p2g()
        if self.wall_vorticity is not None:
            self.wall_vorticity(self.desc, self.omega, self.psi)
        self.phase_log.append("forces")
        d_visc = self.viscosity_increment(dt)
        d_force = self.force_increment(dt)
        for d in (d_visc, d_force):
            if d is not None:
                self.omega = [w + x for w, x in zip(self.omega, d)]
        self.phase_log.append("reconstruct")
        rec = self._reconstruct(self.omega)
        self._accept(rec)
        self.phase_log.append("path_integral")
        self.accumulate_path_integral(dt, T_ac, d_force, d_visc)
        if not all(np.all(np.isfinite(c)) for c in self.u):
            raise InstabilityError(f"non-finite velocity at step {self.clock.step}")
        self.time += dt
        self.last_dt = dt
        self.clock.advance()
        self.records.append(self._record(dt, rec.stats, clamped, unstable))
        return StepInfo(dt, clamped, unstable, rec.stats, list(self.phase_log))

    def run(self, max_steps: int | None = None, max_time: float | None = None,
            callback: Callable | None = None, stop_on_explosion: bool = False):
        max_steps = max_steps if max_steps is not None else self.config.max_steps
        max_time = max_time if max_time is not None else self.config.max_time
        if max_time is not None:
            self.config.max_time = max_time
        n = 0
        while True:
            if max_steps is not None and n >= max_steps:
                break
            if max_time is not None and self.time >= max_time * (1 - 1e-12):
                break
            self.step()
            n += 1
            if callback is not None and callback(self) is False:
                break
            if stop_on_explosion and self.records[-1].explosion_failed:
                break
        return self.records


__all__ = [
    "InstabilityError",
    "SimConfig",
    "Simulation",
    "SolverError",
]
