"""
Command-line driver.

    vpfm run CONFIG [--strict] [--output-dir D] [--max-steps N] [--workers K]
    vpfm bench SCENE --sweep nL=10,20,40,60 [--hessian on|off|both] [--max-steps N]
    vpfm scenes

Exit codes: 0 ok, 2 config error, 3 solver failure, 4 explosion (with --strict).

Config files are YAML with the sections ``scene`` (name), ``scene_params``,
``sim`` (numerical parameters), ``force``, ``run`` and ``output``.  See the
README for the full schema.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import diagnostics as dg
from .dynamics import InstabilityError, SimConfig, Simulation
from .elliptic import SolverError
from .io import DiagnosticsWriter, dump_fields, write_config, write_vtk
from .scenes import SCENES, SceneError, build_scene, make_force, resolve_params

log = logging.getLogger("vpfm")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_EXPLOSION = 4

SECTIONS = {"scene", "seed", "scene_params", "sim", "force", "run", "output", "grid"}
RUN_DEFAULTS = {"max_steps": 100, "max_time": None, "steady_tol": None, "steady_window": 1.0,
                "workers": None}
OUTPUT_DEFAULTS = {"diagnostics": True, "dump_every": 0, "vtk_every": 0, "final_dump": True}
# grid geometry comes from the scene
SIM_FIELDS = {f.name for f in dataclasses.fields(SimConfig)} - {"cells", "dx", "origin"}


class ConfigError(ValueError):
    """Config problem, with the offending field or line in the message."""


def _mark(err: yaml.YAMLError) -> str:
    m = getattr(err, "problem_mark", None)
    return f" (line {m.line + 1}, column {m.column + 1})" if m is not None else ""


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: YAML syntax error{_mark(e)}: {getattr(e, 'problem', e)}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return raw


def _section(raw, name, allowed=None) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"field '{name}' must be a mapping")
    if allowed is not None:
        for k in sec:
            if k not in allowed:
                raise ConfigError(f"field '{name}.{k}' is not recognised; allowed: {sorted(allowed)}")
    return dict(sec)


def resolve_config(raw: dict) -> dict:
    """Fill defaults and validate; the result is the effective config."""
    for k in raw:
        if k not in SECTIONS:
            raise ConfigError(f"unknown top-level field '{k}'; allowed: {sorted(SECTIONS)}")
    name = raw.get("scene")
    if not isinstance(name, str):
        raise ConfigError("field 'scene' is required and must be a scene name")
    if name not in SCENES:
        raise ConfigError(f"field 'scene': unknown scene {name!r}; choose from {sorted(SCENES)}")
    try:
        params = resolve_params(name, _section(raw, "scene_params"))
    except SceneError as e:
        raise ConfigError(f"field 'scene_params': {e}") from e
    sim = _section(raw, "sim", SIM_FIELDS)
    run = {**RUN_DEFAULTS, **_section(raw, "run", set(RUN_DEFAULTS))}
    out = {**OUTPUT_DEFAULTS, **_section(raw, "output", set(OUTPUT_DEFAULTS))}
    force = raw.get("force")
    if force is not None and not isinstance(force, dict):
        raise ConfigError("field 'force' must be a mapping")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("field 'seed' must be an integer")
    return {"scene": name, "seed": seed, "scene_params": params, "sim": sim,
            "force": force, "run": run, "output": out}


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def init_scene(cfg: dict) -> tuple[Simulation, object]:
    """Build the scene and its simulation from a resolved config.

    Scene defaults for numerical parameters are overridden by ``cfg["sim"]``;
    the merged values are written back so the effective config is complete.
    """
    try:
        setup = build_scene(cfg["scene"], cfg["scene_params"])
    except (SceneError, KeyError, TypeError) as e:
        raise ConfigError(f"field 'scene_params': {e}") from e
    sim_fields = {**setup.sim_defaults, **cfg["sim"]}
    sim_fields.setdefault("seed", cfg["seed"])
    try:
        sc = SimConfig(cells=setup.desc.cells, dx=setup.desc.dx, origin=setup.desc.origin,
                       **sim_fields)
        force = make_force(cfg["force"], setup.desc.dim) if cfg["force"] else setup.force
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"field 'sim': {e}") from e
    cfg["sim"] = _plain({k: v for k, v in dataclasses.asdict(sc).items()
                         if k not in ("cells", "dx", "origin")})
    cfg["grid"] = {"cells": list(sc.cells), "dx": sc.dx, "origin": list(setup.desc.origin)}
    return Simulation(sc, setup.omega0, setup.solids, setup.wall_vorticity, force), setup


def _summary(sim: Simulation, setup, cfg, status: str, elapsed: float) -> dict:
    energies = [r.normalized_energy for r in sim.records]
    fs = dg.failure_scan(energies)
    out = {
        "status": status,
        "scene": cfg["scene"],
        "steps": sim.clock.step,
        "time": sim.time,
        "wall_seconds": round(elapsed, 3),
        "final_normalized_energy": energies[-1],
        "dissipation_frame": fs.dissipation_frame,
        "explosion_frame": fs.explosion_frame,
        "reported_failure": fs.reported,
        "max_abs_div": sim.records[-1].max_abs_div,
    }
    if cfg["scene"] == "cavity":
        re = cfg["scene_params"]["re"]
        probe = dg.cavity_probe(sim.desc, sim.u, sim.omega, re)
        out["cavity_probe"] = dataclasses.asdict(probe)
        if int(round(re)) in dg.load_ghia():
            out["cavity_relative_errors"] = probe.relative_errors()
    if setup.exact_velocity is not None:
        exact = setup.exact_velocity(sim.desc, sim.time)
        err = np.concatenate([(a - b).ravel() for a, b in zip(sim.u, exact)])
        out["velocity_error_l2"] = float(np.sqrt(np.mean(err ** 2)))
        out["velocity_error_linf"] = float(np.abs(err).max())
    return _plain(out)


def steady(sim: Simulation, tol: float, window: float = 1.0) -> bool:
    """Relative energy rate over the trailing time window below ``tol``."""
    rate = dg.energy_rate(sim.records, window)
    return rate is not None and rate < tol


def execute(cfg: dict, output_dir, strict: bool = False) -> int:
    """Run a resolved config, writing outputs to ``output_dir``; returns the exit code."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg["run"].get("workers"):
        import numba
        numba.set_num_threads(int(cfg["run"]["workers"]))
    sim, setup = init_scene(cfg)
    write_config(out_dir / "effective_config.yaml", cfg)
    run = cfg["run"]
    output = cfg["output"]
    writer = DiagnosticsWriter(out_dir / "diagnostics.csv") if output["diagnostics"] else None
    if writer:
        writer.write(sim.records[0])
    status = "ok"
    code = EXIT_OK
    t0 = time.time()
    try:
        while True:
            if run["max_steps"] is not None and sim.clock.step >= run["max_steps"]:
                break
            if run["max_time"] is not None and sim.time >= run["max_time"] * (1 - 1e-12):
                break
            if run["max_time"] is not None:
                sim.config.max_time = run["max_time"]
            sim.step()
            rec = sim.records[-1]
            if writer:
                writer.write(rec)
            m = sim.clock.step
            if output["dump_every"] and m % output["dump_every"] == 0:
                dump_fields(out_dir / "fields", sim.desc, m, sim.omega, sim.u, sim.psi)
            if output["vtk_every"] and m % output["vtk_every"] == 0:
                write_vtk(out_dir / f"frame_{m:06d}.vtk", sim.desc, sim.u)
            if rec.explosion_failed and strict:
                status, code = "explosion", EXIT_EXPLOSION
                break
            if run["steady_tol"] and steady(sim, float(run["steady_tol"]), float(run["steady_window"])):
                status = "steady"
                break
    except (SolverError, InstabilityError) as e:
        log.error("solver failure at step %d: %s", sim.clock.step, e)
        status, code = "solver_failure", EXIT_SOLVER
    finally:
        if writer:
            writer.close()
    if output["final_dump"]:
        dump_fields(out_dir / "fields", sim.desc, sim.clock.step, sim.omega, sim.u, sim.psi)
    summary = _summary(sim, setup, cfg, status, time.time() - t0)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    if "cavity_probe" in summary:
        (out_dir / "cavity_probe.json").write_text(json.dumps(
            {k: summary[k] for k in ("cavity_probe", "cavity_relative_errors") if k in summary},
            indent=2))
    log.info("finished: %s", json.dumps(summary))
    return code


def run_bench(scene: str, sweep: list[int], hessian: str, max_steps: int, output_dir,
              scene_params: dict | None = None, sim: dict | None = None) -> list[dict]:
    """Failure frames of ``scene`` across flow-map lengths (and Hessian on/off)."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    variants = {"on": [True], "off": [False], "both": [True, False]}[hessian]
    rows = []
    for n_long in sweep:
        for use_h in variants:
            raw = {"scene": scene, "scene_params": scene_params or {},
                   "sim": {**(sim or {}), "n_long": n_long, "use_hessian": use_h},
                   "run": {"max_steps": max_steps}, "output": {"final_dump": False}}
            cfg = resolve_config(raw)
            sub = out_dir / f"nL{n_long}_{'hess' if use_h else 'nohess'}"
            sim_obj, _ = init_scene(cfg)
            write_config(sub.with_suffix(".yaml"), cfg)
            try:
                sim_obj.run(max_steps=max_steps, stop_on_explosion=True)
            except (SolverError, InstabilityError) as e:
                log.error("n_long=%d: solver failure: %s", n_long, e)
            frames = [r.normalized_energy for r in sim_obj.records]
            fs = dg.failure_scan(frames)
            row = {"n_long": n_long, "hessian": use_h, "frames": len(frames) - 1,
                   "dissipation_frame": fs.dissipation_frame,
                   "explosion_frame": fs.explosion_frame,
                   "final_energy": frames[-1]}
            rows.append(row)
            log.info("bench %s", row)
    with open(out_dir / "bench.csv", "w") as f:
        keys = list(rows[0])
        f.write(",".join(keys) + "\n")
        for r in rows:
            f.write(",".join("" if r[k] is None else str(r[k]) for k in keys) + "\n")
    return rows


def _parse_sweep(text: str) -> list[int]:
    key, _, vals = text.partition("=")
    if key.strip() not in ("nL", "n_long") or not vals:
        raise ConfigError("--sweep expects nL=10,20,...")
    try:
        return [int(v) for v in vals.split(",") if v]
    except ValueError as e:
        raise ConfigError(f"--sweep: {e}") from e


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vpfm", description="Vortex particle flow-map simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a config file")
    r.add_argument("config")
    r.add_argument("--strict", action="store_true", help="exit 4 on explosion failure")
    r.add_argument("--output-dir", default=None)
    r.add_argument("--max-steps", type=int, default=None)
    r.add_argument("--workers", type=int, default=None)
    b = sub.add_parser("bench", help="failure-frame sweep over flow-map lengths")
    b.add_argument("scene")
    b.add_argument("--sweep", default="nL=10,20,40,60")
    b.add_argument("--hessian", choices=("on", "off", "both"), default="on")
    b.add_argument("--max-steps", type=int, default=500)
    b.add_argument("--output-dir", default="bench_out")
    b.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a sim or scene parameter (YAML value)")
    sub.add_parser("scenes", help="list bundled scenes and their parameters")
    return p


def _overrides(items, scene):
    sim, params = {}, {}
    for it in items:
        k, sep, v = it.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {it!r}")
        val = yaml.safe_load(v)
        if k in SIM_FIELDS:
            sim[k] = val
        else:
            params[k] = val
    resolve_params(scene, params)
    return sim, params


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "scenes":
            for name in sorted(SCENES):
                print(name, json.dumps(resolve_params(name)))
            return EXIT_OK
        if args.command == "bench":
            if args.scene not in SCENES:
                raise ConfigError(f"unknown scene {args.scene!r}")
            sim, params = _overrides(args.set, args.scene)
            rows = run_bench(args.scene, _parse_sweep(args.sweep), args.hessian,
                             args.max_steps, args.output_dir, params, sim)
            for r in rows:
                print(json.dumps(r))
            return EXIT_OK
        cfg = resolve_config(load_config(args.config))
        if args.max_steps is not None:
            cfg["run"]["max_steps"] = args.max_steps
        if args.workers is not None:
            cfg["run"]["workers"] = args.workers
        out = args.output_dir or str(Path(args.config).with_suffix("")) + "_out"
        return execute(cfg, out, strict=args.strict)
    except (ConfigError, SceneError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
