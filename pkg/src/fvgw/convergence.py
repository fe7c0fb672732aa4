"""Mesh refinement study against a fine-grid reference solution.

References come from injecting the finest-level solution down to each coarse
mesh by cell-containment volume averaging (exact for nested rectangular
refinement), not from manufactured solutions: the sources enter the equations
multiplied by state-dependent factors, so standard forcing-based manufactured
solutions do not take the form the scheme discretizes.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, build_simulation
from .solver import run_simulation


@dataclass
class ErrorLevel:
    h: float
    dt: float
    err_p: float
    err_s: float
    order_p: float = None   # vs previous (coarser) level; None on the first
    order_s: float = None


@dataclass
class ErrorTable:
    levels: list

    CSV_HEADER = "level,h,dt,err_p,err_s,order_p,order_s"

    def __post_init__(self):
        hs = [lv.h for lv in self.levels]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("levels must be strictly decreasing in h")

    def rows(self):
        out = []
        for i, lv in enumerate(self.levels):
            out.append([i, lv.h, lv.dt, lv.err_p, lv.err_s,
                        lv.order_p, lv.order_s])
        return out

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for row in self.rows():
            lines.append(",".join("" if v is None
                                  else (str(v) if isinstance(v, int)
                                        else repr(float(v)))
                                  for v in row))
        return "\n".join(lines) + "\n"

    def __str__(self):
        head = f"{'level':>5} {'h':>12} {'dt':>12} {'err_p':>12} " \
               f"{'err_s':>12} {'ord_p':>7} {'ord_s':>7}"
        lines = [head]
        for row in self.rows():
            i, h, dt, ep, es, op, os_ = row
            fmt = lambda v, w: f"{'-':>{w}}" if v is None else f"{v:>{w}.3g}"
            lines.append(f"{i:>5} {h:>12.5g} {dt:>12.5g} {ep:>12.5g} "
                         f"{es:>12.5g} {fmt(op, 7)} {fmt(os_, 7)}")
        return "\n".join(lines)


def refine_config(cfg: dict, factor: int) -> dict:
    """Nested refinement: cell counts times ``factor``, dt divided by it."""
    out = copy.deepcopy(cfg)
    mesh = out["mesh"]
    if "file" in mesh:
        raise ConfigError("convergence studies need an inline rectangular "
                          "mesh; file meshes cannot be refined nestedly")
    for key in ("nx", "ny", "nz"):
        if key in mesh:
            mesh[key] = int(mesh[key]) * factor
    out["time"]["dt"] = float(out["time"]["dt"]) / factor
    out["time"].pop("save_every", None)
    return out


def inject_fine_to_coarse(fine_mesh, coarse_mesh, values):
    """Volume-weighted average of fine-cell values over each coarse cell.

    Exact containment requires the fine mesh to be a nested refinement of
    the coarse one (same box, integer cell-count ratio per axis).
    """
    fi, ci = fine_mesh.structure, coarse_mesh.structure
    if fi is None or ci is None:
        raise ValueError("injection needs structured meshes")
    ratios = []
    for a in range(fine_mesh.dim):
        r, rem = divmod(fi.shape[a], ci.shape[a])
        if rem or r < 1:
            raise ValueError("fine mesh is not a nested refinement")
        if abs(fi.lows[a] - ci.lows[a]) > 1e-12 or \
           abs(fi.spacing[a] * r - ci.spacing[a]) > 1e-12 * ci.spacing[a]:
            raise ValueError("meshes do not cover the same box")
        ratios.append(r)

    idx = np.arange(fine_mesh.n_cells)
    multi = []
    rest = idx
    for a in range(fine_mesh.dim):
        multi.append(rest % fi.shape[a])
        rest = rest // fi.shape[a]
    coarse_id = np.zeros(fine_mesh.n_cells, dtype=int)
    stride = 1
    for a in range(fine_mesh.dim):
        coarse_id += (multi[a] // ratios[a]) * stride
        stride *= ci.shape[a]

    values = np.asarray(values, dtype=float)
    acc = np.zeros(coarse_mesh.n_cells)
    np.add.at(acc, coarse_id, values * fine_mesh.cell_volumes)
    return acc / coarse_mesh.cell_volumes


def _l2_error(mesh, values, reference):
    diff = np.asarray(values) - np.asarray(reference)
    return float(np.sqrt(np.sum(mesh.cell_volumes * diff ** 2)))


def run_convergence(cfg: dict, levels: int = 3,
                    reference_extra: int = 1) -> ErrorTable:
    """Solve on ``levels`` nested meshes plus a finer reference level.

    Level k uses cell counts scaled by 2^k and dt scaled by 2^-k; the
    reference is 2^(levels - 1 + reference_extra) times the base resolution.
    Errors are final-time L2 norms of p and s against the injected reference;
    observed orders are reported descriptively (no rate is asserted).
    """
    if levels < 2:
        raise ConfigError("need at least 2 levels")
    if reference_extra < 1:
        raise ConfigError("the reference must be finer than the last level")

    runs = []
    for k in range(levels):
        setup = build_simulation(refine_config(cfg, 2 ** k))
        result = run_simulation(setup.scheme, setup.initial, setup.solver)
        runs.append((setup, result))

    ref_setup = build_simulation(
        refine_config(cfg, 2 ** (levels - 1 + reference_extra)))
    ref_result = run_simulation(ref_setup.scheme, ref_setup.initial,
                                ref_setup.solver)
    ref_state = ref_result.final_state

    rows = []
    for setup, result in runs:
        mesh = setup.mesh
        ref_p = inject_fine_to_coarse(ref_setup.mesh, mesh, ref_state.p)
        ref_s = inject_fine_to_coarse(ref_setup.mesh, mesh, ref_state.s)
        rows.append(ErrorLevel(
            h=mesh.h, dt=setup.solver.dt,
            err_p=_l2_error(mesh, result.final_state.p, ref_p),
            err_s=_l2_error(mesh, result.final_state.s, ref_s)))
    for prev, cur in zip(rows, rows[1:]):
        ratio = prev.h / cur.h
        if cur.err_p > 0 and prev.err_p > 0:
            cur.order_p = float(np.log(prev.err_p / cur.err_p)
                                / np.log(ratio))
        if cur.err_s > 0 and prev.err_s > 0:
            cur.order_s = float(np.log(prev.err_s / cur.err_s)
                                / np.log(ratio))
    return ErrorTable(levels=rows)
