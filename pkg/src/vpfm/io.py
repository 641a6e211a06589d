"""
Output writers: grid dumps, legacy VTK, diagnostics CSV, and config files.

A grid dump (``.grid``) is a one-line JSON header followed by the field's
float64 values in row-major order::

    {"dim": 2, "cells": [64, 64], "dx": ..., "origin": [...],
     "field": "omega", "layout": "node", "axis": null, "shape": [65, 65]}\\n
    <raw little-endian float64 data>
"""
from __future__ import annotations

import csv
import json
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import DiagnosticsRecord
from .grid import GridDesc


def write_grid(path, desc: GridDesc, name: str, data: np.ndarray, layout: str,
               axis: int | None = None) -> Path:
    path = Path(path)
    data = np.ascontiguousarray(data, dtype="<f8")
    expected = desc.shape(layout, axis)
    if data.shape != expected:
        raise ValueError(f"{name}: shape {data.shape} does not match {layout} layout {expected}")
    header = {
        "dim": desc.dim, "cells": list(desc.cells), "dx": desc.dx,
        "origin": [float(o) for o in desc.origin], "field": name,
        "layout": layout, "axis": axis, "shape": list(data.shape),
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode())
        f.write(data.tobytes())
    return path


def read_grid(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        data = np.frombuffer(f.read(), dtype="<f8")
    return header, data.reshape(header["shape"]).copy()


def dump_fields(directory, desc: GridDesc, frame: int, omega, u, psi=None) -> list[Path]:
    """Write vorticity, velocity and (optionally) potential components for one frame."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for c, (w, spec) in enumerate(zip(omega, desc.vort_specs())):
        out.append(write_grid(directory / f"omega{c}_{frame:06d}.grid", desc, f"omega{c}", w, *spec))
    for a, comp in enumerate(u):
        out.append(write_grid(directory / f"u{a}_{frame:06d}.grid", desc, f"u{a}", comp, "face", a))
    if psi is not None:
        for c, (p, spec) in enumerate(zip(psi, desc.vort_specs())):
            out.append(write_grid(directory / f"psi{c}_{frame:06d}.grid", desc, f"psi{c}", p, *spec))
    return out


def cell_centered_velocity(desc: GridDesc, u) -> np.ndarray:
    comps = []
    for a, c in enumerate(u):
        lo = [slice(None)] * desc.dim
        hi = [slice(None)] * desc.dim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        comps.append(0.5 * (c[tuple(lo)] + c[tuple(hi)]))
    return np.stack(comps, axis=-1)


def write_vtk(path, desc: GridDesc, u, scalars: dict | None = None) -> Path:
    """Legacy ASCII VTK structured points with cell-centred velocity and scalars."""
    path = Path(path)
    vel = cell_centered_velocity(desc, u)
    cells = list(desc.cells) + [1] * (3 - desc.dim)
    origin = [o + 0.5 * desc.dx for o in desc.origin] + [0.0] * (3 - desc.dim)
    n = int(np.prod(desc.cells))
    lines = [
        "# vtk DataFile Version 3.0", "vpfm output", "ASCII", "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {cells[0]} {cells[1]} {cells[2]}",
        f"ORIGIN {origin[0]} {origin[1]} {origin[2]}",
        f"SPACING {desc.dx} {desc.dx} {desc.dx}",
        f"POINT_DATA {n}",
        "VECTORS velocity double",
    ]
    # VTK orders points with x fastest
    v = np.moveaxis(vel, range(desc.dim), range(desc.dim)[::-1]).reshape(n, desc.dim)
    if desc.dim == 2:
        v = np.concatenate([v, np.zeros((n, 1))], axis=1)
    lines.extend(" ".join(f"{x:.9g}" for x in row) for row in v)
    for name, arr in (scalars or {}).items():
        arr = np.asarray(arr, float)
        if arr.shape != desc.cells:
            raise ValueError(f"scalar {name} must be cell-centred")
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{x:.9g}" for x in arr.transpose().ravel())
    path.write_text("\n".join(lines) + "\n")
    return path


DIAGNOSTIC_COLUMNS = [f.name for f in fields(DiagnosticsRecord)]


class DiagnosticsWriter:
    """Append-as-you-go CSV of :class:`DiagnosticsRecord` rows."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.DictWriter(self._fh, fieldnames=DIAGNOSTIC_COLUMNS)
        self._w.writeheader()

    def write(self, rec: DiagnosticsRecord):
        row = rec.as_dict()
        for k, v in row.items():
            if isinstance(v, float):
                row[k] = repr(v)
        self._w.writerow(row)
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_config(path, config: dict) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(config, sort_keys=False))
    return path
