"""Run outputs: field/monitor CSV files, run metadata, legacy VTK dumps.

All text output uses LF line endings and repr() floats (shortest exact
round-trip), so identical runs produce bit-identical files.  CSV values never
contain commas or quotes, so no RFC 4180 quoting is ever needed.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import __version__
from .solver import MonitorRecord


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_fields_csv(path, mesh, state):
    """Per-cell snapshot: header cell_id,x,y[,z],p,s."""
    coords = ["x", "y", "z"][:mesh.dim]
    lines = ["cell_id," + ",".join(coords) + ",p,s"]
    for k in range(mesh.n_cells):
        row = [str(k)]
        row += [_fmt(mesh.cell_centers[k, a]) for a in range(mesh.dim)]
        row += [_fmt(state.p[k]), _fmt(state.s[k])]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_monitors_csv(path, monitors):
    """Per-step monitor series with the fixed header."""
    lines = [MonitorRecord.HEADER]
    for rec in monitors:
        lines.append(",".join(_fmt(v) for v in rec.values()))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_run_metadata(path, model, config_text=None, extra=None):
    """Constants needed to interpret the monitor columns, as JSON."""
    meta = {
        "version": __version__,
        "m0": model.total_mobility_floor,
        "rho_min": model.density.rho_min,
        "rho_max": model.density.rho_max,
        "c1": model.total_mobility_floor * model.density.rho_min,
        "monitor_header": MonitorRecord.HEADER,
    }
    if config_text is not None:
        meta["config"] = config_text
    if extra:
        meta.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_vtk(path, mesh, state):
    """Legacy ASCII VTK unstructured grid with cell data p and s.

    Needs the lattice structure to rebuild cell corner points, so this only
    works for meshes from :func:`build_rect_mesh`.
    """
    info = mesh.structure
    if info is None:
        raise ValueError("vtk output needs a structured mesh")
    shape = tuple(info.shape)
    dim = mesh.dim
    npts = [n + 1 for n in shape]
    axes = [info.lows[a] + info.spacing[a] * np.arange(npts[a])
            for a in range(dim)]
    if dim == 2:
        axes.append(np.zeros(1))
        npts.append(1)
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    points = np.stack([gx.ravel(order="F"), gy.ravel(order="F"),
                       gz.ravel(order="F")], axis=1)

    def pid(i, j, k):
        return i + npts[0] * (j + npts[1] * k)

    cells = []
    if dim == 2:
        for j in range(shape[1]):
            for i in range(shape[0]):
                cells.append([pid(i, j, 0), pid(i + 1, j, 0),
                              pid(i + 1, j + 1, 0), pid(i, j + 1, 0)])
        cell_type = 9  # VTK_QUAD
    else:
        for k in range(shape[2]):
            for j in range(shape[1]):
                for i in range(shape[0]):
                    cells.append([
                        pid(i, j, k), pid(i + 1, j, k),
                        pid(i + 1, j + 1, k), pid(i, j + 1, k),
                        pid(i, j, k + 1), pid(i + 1, j, k + 1),
                        pid(i + 1, j + 1, k + 1), pid(i, j + 1, k + 1)])
        cell_type = 12  # VTK_HEXAHEDRON

    lines = ["# vtk DataFile Version 3.0", "two-phase flow snapshot",
             "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    for pt in points:
        lines.append(" ".join(_fmt(c) for c in pt))
    lines.append(f"CELLS {len(cells)} {len(cells) * (len(cells[0]) + 1)}")
    for c in cells:
        lines.append(str(len(c)) + " " + " ".join(str(i) for i in c))
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend(str(cell_type) for _ in cells)
    lines.append(f"CELL_DATA {len(cells)}")
    for name, values in (("pressure", state.p), ("saturation", state.s)):
        lines.append(f"SCALARS {name} double")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in values)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_snapshots(directory, mesh, times, states, formats=("csv",)):
    """Write one fields file per snapshot; returns the file names."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for idx, (t, st) in enumerate(zip(times, states)):
        base = f"fields_{idx:04d}"
        if "csv" in formats:
            write_fields_csv(os.path.join(directory, base + ".csv"), mesh, st)
            names.append(base + ".csv")
        if "vtk" in formats:
            write_vtk(os.path.join(directory, base + ".vtk"), mesh, st)
            names.append(base + ".vtk")
    return names
