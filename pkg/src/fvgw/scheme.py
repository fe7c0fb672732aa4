"""Fully implicit finite-volume discretization of the coupled system.

Unknowns are interleaved per cell, ``u = [p_0, s_0, p_1, s_1, ...]``, and the
residual rows follow the same layout: row 2K is the gas mass balance of cell
K, row 2K+1 the water balance.  For cell K with neighbors L the residuals are

  gas:    |K| phi_K (rho(p_K) s_K - rho(p_K^old) s_K^old) / dt
          + sum_faces d* [ -tau rho_KL (beta(s_L) - beta(s_K))
                           + rho_KL G1(s_K, s_L; dp_KL) + F1_KL ]
          + |K| rho(p_K) s_K fP_K

  water:  |K| phi_K (s_K - s_K^old) / dt
          + sum_faces d* [ -tau (beta(s_L) - beta(s_K))
                           + G2(s_K, s_L; dp_KL) + F2_KL ]
          + |K| (s_K - 1) fP_K + |K| fI_K

with dp_KL = tau (p_L - p_K), rho_KL the interface density, d* the harmonic
face permeability, and G/F from :mod:`fvgw.fluxes`.  Faces on the Dirichlet
boundary enter every sum as ghost faces with fixed boundary values
(p_w, s_w); impervious faces contribute nothing.  Residuals are scaled by
1/|K| by default so the Newton tolerance is resolution-independent.

The Jacobian comes in two flavors that must agree: a colored finite-difference
one (reference) and a hand-derived analytic one (fast path for large runs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fluxes import FluxKernel, face_gravity, harmonic_transmissibility
from .physics import ModelValidationError


class AssemblyError(ValueError):
    """Raised when residual assembly receives unusable inputs."""


class SourceSignError(ModelValidationError):
    """Raised when a sampled source value is negative (sources must be >= 0)."""


@dataclass
class State:
    """Per-cell pressure and gas saturation."""

    p: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        if self.p.shape != self.s.shape:
            raise AssemblyError("pressure and saturation shapes differ")

    @property
    def n_cells(self):
        return len(self.p)

    def vector(self):
        u = np.empty(2 * self.n_cells)
        u[0::2] = self.p
        u[1::2] = self.s
        return u

    @classmethod
    def from_vector(cls, u):
        u = np.asarray(u, dtype=float)
        return cls(p=u[0::2].copy(), s=u[1::2].copy())

    def copy(self):
        return State(p=self.p.copy(), s=self.s.copy())


@dataclass
class SchemeResidual:
    """Gas and water residuals; ``scaled_by_volume`` records the 1/|K| scaling."""

    gas: np.ndarray
    water: np.ndarray
    scaled_by_volume: bool

    def vector(self):
        r = np.empty(2 * len(self.gas))
        r[0::2] = self.gas
        r[1::2] = self.water
        return r

    def inf_norm(self):
        return max(float(np.max(np.abs(self.gas))),
                   float(np.max(np.abs(self.water))))


@dataclass
class BoundaryData:
    """Dirichlet values on the water-injection boundary."""

    pressure: float = 0.0
    saturation: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.saturation <= 1.0):
            raise ModelValidationError(
                "boundary saturation must lie in [0, 1]")


class SourceModel:
    """Production and injection source fields f_P, f_I >= 0.

    Each field is a constant or a callable ``f(t, x)`` with ``x`` of shape
    (n, dim) returning (n,) values.  Negative sampled values raise
    :class:`SourceSignError`; zero sources are the default.
    """

    def __init__(self, production=0.0, injection=0.0):
        self.production = production
        self.injection = injection

    @staticmethod
    def _sample(field, t, points):
        if callable(field):
            vals = np.asarray(field(t, points), dtype=float)
            vals = np.broadcast_to(vals, (len(points),)).astype(float)
        else:
            vals = np.full(len(points), float(field))
        return vals

    def cell_averages(self, mesh, t0, t1):
        """Midpoint-rule space-time averages of (f_P, f_I) on each cell."""
        tm = 0.5 * (t0 + t1)
        fp = self._sample(self.production, tm, mesh.cell_centers)
        fi = self._sample(self.injection, tm, mesh.cell_centers)
        for name, vals in (("production", fp), ("injection", fi)):
            if not np.all(np.isfinite(vals)):
                raise AssemblyError(f"{name} source is non-finite")
            if np.min(vals) < 0.0:
                k = int(np.argmin(vals))
                raise SourceSignError(
                    f"{name} source is negative ({vals[k]:g}) at cell {k}")
        return fp, fi


def cell_source_avg(field, mesh, t0, t1):
    """Space-time midpoint average of one source field over each cell."""
    return SourceModel._sample(field, 0.5 * (t0 + t1), mesh.cell_centers)


def project_initial(mesh, p0, s0) -> State:
    """Cell averages of the initial data by the midpoint rule (exact for
    affine data on rectangles).  Initial saturations must lie in [0, 1]."""
    def evaluate(f):
        if callable(f):
            vals = np.asarray(f(mesh.cell_centers), dtype=float)
            return np.broadcast_to(vals, (mesh.n_cells,)).astype(float)
        return np.full(mesh.n_cells, float(f))

    p = evaluate(p0)
    s = evaluate(s0)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(s))):
        raise AssemblyError("initial data evaluated to non-finite values")
    if np.min(s) < -1e-12 or np.max(s) > 1.0 + 1e-12:
        raise ModelValidationError(
            f"initial saturation outside [0, 1]: range "
            f"[{np.min(s):g}, {np.max(s):g}]")
    return State(p=p, s=np.clip(s, 0.0, 1.0))


class ImplicitScheme:
    """Residual and Jacobian assembly for one mesh + model + sources.

    ``boundary`` supplies the Dirichlet data on water-injection faces; it may
    be None only when the mesh has no such faces.
    """

    def __init__(self, mesh, model, kernel=None, sources=None, boundary=None):
        self.mesh = mesh
        self.model = model
        self.kernel = kernel if kernel is not None else FluxKernel(model)
        self.derived = model.derived()
        self.sources = sources if sources is not None else SourceModel()
        if boundary is None:
            if len(mesh.dirichlet_faces):
                raise ModelValidationError(
                    "mesh has water-injection faces but no boundary data given")
            boundary = BoundaryData()
        self.boundary = boundary

        self.phi = model.porosity_field(mesh.n_cells)
        perm = model.permeability_field(mesh.n_cells)
        self.gravity = model.gravity_vector(mesh.dim)
        fg = face_gravity(mesh, self.gravity)

        k_idx, l_idx = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
        self.f_left = k_idx
        self.f_right = l_idx
        self.tau = mesh.transmissibilities
        # One-sided distances are not part of the mesh data; admissible
        # orthogonal meshes are treated as center-split (exact on rectangles).
        half = 0.5 * mesh.face_dists
        self.dstar = harmonic_transmissibility(perm[k_idx], perm[l_idx],
                                               half, half, mesh.face_dists)
        self.g_plus = fg.plus
        self.g_minus = fg.minus

        dfaces = mesh.dirichlet_faces
        self.b_cell = mesh.bface_cells[dfaces]
        self.b_tau = mesh.bface_transmissibilities[dfaces]
        self.b_dstar = perm[self.b_cell]  # one-sided: only K exists
        self.b_gplus = fg.b_plus[dfaces]
        self.b_gminus = fg.b_minus[dfaces]

        self._adj = self._build_adjacency()
        self._colors, self._n_colors = self._distance2_coloring()
        self._stencil_rows = self._build_stencil_rows()

    # -- residual ----------------------------------------------------------------

    def _check_state(self, state: State, label: str):
        if state.n_cells != self.mesh.n_cells:
            raise AssemblyError(f"{label} state has {state.n_cells} cells, "
                                f"mesh has {self.mesh.n_cells}")
        for field, name in ((state.p, "pressure"), (state.s, "saturation")):
            bad = ~np.isfinite(field)
            if np.any(bad):
                k = int(np.argmax(bad))
                raise AssemblyError(
                    f"non-finite {name} in {label} state at cell {k}")

    def assemble_residual(self, state_old: State, state_new: State, dt,
                          t_old=0.0, scale_by_volume=True) -> SchemeResidual:
        """Residual of the implicit step from ``state_old`` over ``dt``."""
        if dt <= 0:
            raise AssemblyError("dt must be positive")
        self._check_state(state_old, "old")
        self._check_state(state_new, "new")
        mesh, der, kern = self.mesh, self.derived, self.kernel
        p, s = state_new.p, state_new.s
        vol = mesh.cell_volumes
        rho_new = np.asarray(kern.rho(p))
        rho_old = np.asarray(kern.rho(state_old.p))
        fp, fi = self.sources.cell_averages(mesh, t_old, t_old + dt)

        gas = vol * self.phi * (rho_new * s - rho_old * state_old.s) / dt \
            + vol * rho_new * s * fp
        water = vol * self.phi * (s - state_old.s) / dt \
            + vol * (s - 1.0) * fp + vol * fi

        if mesh.n_faces:
            k, l = self.f_left, self.f_right
            dp = self.tau * (p[l] - p[k])
            rkl = np.asarray(der.interface_density(p[k], p[l]))
            dbeta = np.asarray(der.beta(s[l])) - np.asarray(der.beta(s[k]))
            gas_flux = self.dstar * (
                -self.tau * rkl * dbeta
                + rkl * np.asarray(kern.g1(s[k], s[l], dp))
                + np.asarray(kern.gravity_gas(p[k], p[l], s[k], s[l],
                                              self.g_plus, self.g_minus)))
            water_flux = self.dstar * (
                -self.tau * dbeta
                + np.asarray(kern.g2(s[k], s[l], dp))
                + np.asarray(kern.gravity_water(s[k], s[l],
                                                self.g_plus, self.g_minus)))
            np.add.at(gas, k, gas_flux)
            np.add.at(gas, l, -gas_flux)
            np.add.at(water, k, water_flux)
            np.add.at(water, l, -water_flux)

        if len(self.b_cell):
            gas_b, water_b = self._boundary_fluxes(p, s)
            np.add.at(gas, self.b_cell, gas_b)
            np.add.at(water, self.b_cell, water_b)

        if scale_by_volume:
            gas = gas / vol
            water = water / vol
        return SchemeResidual(gas=gas, water=water,
                              scaled_by_volume=scale_by_volume)

    def _boundary_fluxes(self, p, s):
        """Ghost-face fluxes through the Dirichlet boundary, per face."""
        der, kern, bd = self.derived, self.kernel, self.boundary
        bc = self.b_cell
        dp = self.b_tau * (bd.pressure - p[bc])
        rks = np.asarray(der.interface_density(p[bc], bd.pressure))
        dbeta = float(der.beta(bd.saturation)) - np.asarray(der.beta(s[bc]))
        gas_b = self.b_dstar * (
            -self.b_tau * rks * dbeta
            + rks * np.asarray(kern.g1(s[bc], bd.saturation, dp))
            + np.asarray(kern.gravity_gas(p[bc], bd.pressure, s[bc],
                                          bd.saturation,
                                          self.b_gplus, self.b_gminus)))
        water_b = self.b_dstar * (
            -self.b_tau * dbeta
            + np.asarray(kern.g2(s[bc], bd.saturation, dp))
            + np.asarray(kern.gravity_water(s[bc], bd.saturation,
                                            self.b_gplus, self.b_gminus)))
        return gas_b, water_b

    def residual_vector(self, state_old: State, u_new, dt, t_old=0.0,
                        scale_by_volume=True):
        state_new = State.from_vector(u_new)
        return self.assemble_residual(state_old, state_new, dt, t_old,
                                      scale_by_volume).vector()

    def dissipation_terms(self, state: State):
        """Weighted gradient sums entering the energy monitors.

        Returns (sum d* tau |dp|^2, sum d* tau |dbeta|^2) over all faces,
        counted once each, including Dirichlet ghost faces.
        """
        p, s = state.p, state.s
        beta = self.derived.beta
        press = 0.0
        cap = 0.0
        if self.mesh.n_faces:
            k, l = self.f_left, self.f_right
            w = self.dstar * self.tau
            press += float(np.sum(w * (p[l] - p[k]) ** 2))
            dbeta = np.asarray(beta(s[l])) - np.asarray(beta(s[k]))
            cap += float(np.sum(w * dbeta ** 2))
        if len(self.b_cell):
            bd = self.boundary
            w = self.b_dstar * self.b_tau
            press += float(np.sum(w * (bd.pressure - p[self.b_cell]) ** 2))
            dbeta_b = float(beta(bd.saturation)) \
                - np.asarray(beta(s[self.b_cell]))
            cap += float(np.sum(w * dbeta_b ** 2))
        return press, cap

    # -- mass balance ------------------------------------------------------------

    def water_mass_balance(self, state_old: State, state_new: State, dt,
                           t_old=0.0) -> float:
        """|time change + boundary outflow + source terms| for water.

        Interior fluxes telescope exactly, so for an exact solution of the
        scheme this equals zero; for a Newton solution it is bounded by the
        solver tolerance times the total volume.
        """
        mesh = self.mesh
        vol = mesh.cell_volumes
        fp, fi = self.sources.cell_averages(mesh, t_old, t_old + dt)
        total = float(np.sum(vol * self.phi
                             * (state_new.s - state_old.s)) / dt)
        total += float(np.sum(vol * (state_new.s - 1.0) * fp))
        total += float(np.sum(vol * fi))
        if len(self.b_cell):
            _, water_b = self._boundary_fluxes(state_new.p, state_new.s)
            total += float(np.sum(water_b))
        return abs(total)

    # -- graph structure for FD coloring ----------------------------------------

    def _build_adjacency(self):
        adj = [[] for _ in range(self.mesh.n_cells)]
        for k, l in self.mesh.face_cells:
            adj[k].append(int(l))
            adj[l].append(int(k))
        return adj

    def _distance2_coloring(self):
        """Greedy coloring where same-color cells are at graph distance >= 3,
        so their residual stencils share no rows and one perturbed assembly
        yields exact FD columns for the whole color class."""
        n = self.mesh.n_cells
        colors = np.full(n, -1, dtype=int)
        for v in range(n):
            forbidden = set()
            for u in self._adj[v]:
                if colors[u] >= 0:
                    forbidden.add(colors[u])
                for w in self._adj[u]:
                    if colors[w] >= 0:
                        forbidden.add(colors[w])
            c = 0
            while c in forbidden:
                c += 1
            colors[v] = c
        return colors, int(colors.max()) + 1 if n else 0

    def _build_stencil_rows(self):
        rows = []
        for j in range(self.mesh.n_cells):
            cells = [j] + self._adj[j]
            r = np.empty(2 * len(cells), dtype=int)
            r[0::2] = np.asarray(cells) * 2
            r[1::2] = np.asarray(cells) * 2 + 1
            rows.append(r)
        return rows

    # -- Jacobians -----------------------------------------------------------------

    def assemble_jacobian_fd(self, state_old: State, state_new: State, dt,
                             t_old=0.0, scale_by_volume=True) -> sp.csr_matrix:
        """Finite-difference Jacobian (reference), colored for efficiency.

        Steps are h = max(1e-7, 1e-7 |u_j|); the coloring changes nothing in
        the values, only how many residual assemblies are needed.
        """
        n = self.mesh.n_cells
        u0 = state_new.vector()
        base = self.residual_vector(state_old, u0, dt, t_old, scale_by_volume)
        rows_list, cols_list, data_list = [], [], []
        for color in range(self._n_colors):
            group = np.flatnonzero(self._colors == color)
            for var in (0, 1):
                cols = 2 * group + var
                h = np.maximum(1e-7, 1e-7 * np.abs(u0[cols]))
                u = u0.copy()
                u[cols] += h
                r = self.residual_vector(state_old, u, dt, t_old,
                                         scale_by_volume)
                for j, hj, col in zip(group, h, cols):
                    rr = self._stencil_rows[j]
                    vals = (r[rr] - base[rr]) / hj
                    rows_list.append(rr)
                    cols_list.append(np.full(len(rr), col, dtype=int))
                    data_list.append(vals)
        rows = np.concatenate(rows_list)
        cols = np.concatenate(cols_list)
        data = np.concatenate(data_list)
        return sp.csr_matrix((data, (rows, cols)), shape=(2 * n, 2 * n))

    def assemble_jacobian_analytic(self, state_old: State, state_new: State,
                                   dt, t_old=0.0,
                                   scale_by_volume=True) -> sp.csr_matrix:
        """Hand-derived Jacobian with the same sparsity as the FD one."""
        self._check_state(state_new, "new")
        mesh, der, kern = self.mesh, self.derived, self.kernel
        n = mesh.n_cells
        p, s = state_new.p, state_new.s
        vol = mesh.cell_volumes
        rho = np.asarray(kern.rho(p))
        drho = np.asarray(kern.rho.derivative(p))
        fp, _ = self.sources.cell_averages(mesh, t_old, t_old + dt)

        rows, cols, data = [], [], []

        def add(r, c, v):
            rows.append(r)
            cols.append(c)
            data.append(v)

        cells = np.arange(n)
        scale = 1.0 / vol if scale_by_volume else np.ones(n)
        # Cell (accumulation + source) blocks.
        gas_p = vol * self.phi * drho * s / dt + vol * drho * s * fp
        gas_s = vol * self.phi * rho / dt + vol * rho * fp
        water_s = vol * self.phi / dt + vol * fp
        add(2 * cells, 2 * cells, gas_p * scale)
        add(2 * cells, 2 * cells + 1, gas_s * scale)
        add(2 * cells + 1, 2 * cells + 1, water_s * scale)

        if mesh.n_faces:
            k, l = self.f_left, self.f_right
            tau, dstar = self.tau, self.dstar
            dp = tau * (p[l] - p[k])
            rkl = np.asarray(der.interface_density(p[k], p[l]))
            drho_k, drho_l = self._interface_density_partials(p[k], p[l], rkl)
            beta_k = np.asarray(der.beta(s[k]))
            beta_l = np.asarray(der.beta(s[l]))
            dbeta = beta_l - beta_k
            alpha_k = np.asarray(der.alpha(s[k]))
            alpha_l = np.asarray(der.alpha(s[l]))
            g1 = np.asarray(kern.g1(s[k], s[l], dp))
            da1, db1, dc1 = kern.dg1(s[k], s[l], dp)
            da2, db2, dc2 = kern.dg2(s[k], s[l], dp)
            f1_pk, f1_sk, f1_pl, f1_sl = kern.dgravity_gas(
                p[k], p[l], s[k], s[l], self.g_plus, self.g_minus)
            f2_sk, f2_sl = kern.dgravity_water(s[k], s[l],
                                               self.g_plus, self.g_minus)

            gas_pk = dstar * (-tau * drho_k * dbeta + drho_k * g1
                              - rkl * dc1 * tau + f1_pk)
            gas_pl = dstar * (-tau * drho_l * dbeta + drho_l * g1
                              + rkl * dc1 * tau + f1_pl)
            gas_sk = dstar * (tau * rkl * alpha_k + rkl * da1 + f1_sk)
            gas_sl = dstar * (-tau * rkl * alpha_l + rkl * db1 + f1_sl)
            wat_pk = dstar * (-dc2 * tau)
            wat_pl = dstar * (dc2 * tau)
            wat_sk = dstar * (tau * alpha_k + da2 + f2_sk)
            wat_sl = dstar * (-tau * alpha_l + db2 + f2_sl)

            for row_cell, sgn in ((k, 1.0), (l, -1.0)):
                sc = sgn * scale[row_cell]
                add(2 * row_cell, 2 * k, gas_pk * sc)
                add(2 * row_cell, 2 * k + 1, gas_sk * sc)
                add(2 * row_cell, 2 * l, gas_pl * sc)
                add(2 * row_cell, 2 * l + 1, gas_sl * sc)
                add(2 * row_cell + 1, 2 * k, wat_pk * sc)
                add(2 * row_cell + 1, 2 * k + 1, wat_sk * sc)
                add(2 * row_cell + 1, 2 * l, wat_pl * sc)
                add(2 * row_cell + 1, 2 * l + 1, wat_sl * sc)

        if len(self.b_cell):
            bd = self.boundary
            bc = self.b_cell
            tau, dstar = self.b_tau, self.b_dstar
            dp = tau * (bd.pressure - p[bc])
            rks = np.asarray(der.interface_density(p[bc], bd.pressure))
            drho_k, _ = self._interface_density_partials(
                p[bc], np.full(len(bc), bd.pressure), rks)
            dbeta = float(der.beta(bd.saturation)) - np.asarray(der.beta(s[bc]))
            alpha_k = np.asarray(der.alpha(s[bc]))
            g1 = np.asarray(kern.g1(s[bc], bd.saturation, dp))
            da1, _, dc1 = kern.dg1(s[bc], bd.saturation, dp)
            da2, _, dc2 = kern.dg2(s[bc], bd.saturation, dp)
            f1_pk, f1_sk, _, _ = kern.dgravity_gas(
                p[bc], bd.pressure, s[bc], bd.saturation,
                self.b_gplus, self.b_gminus)
            f2_sk, _ = kern.dgravity_water(s[bc], bd.saturation,
                                           self.b_gplus, self.b_gminus)
            gas_pk = dstar * (-tau * drho_k * dbeta + drho_k * g1
                              - rks * dc1 * tau + f1_pk)
            gas_sk = dstar * (tau * rks * alpha_k + rks * da1 + f1_sk)
            wat_pk = dstar * (-dc2 * tau)
            wat_sk = dstar * (tau * alpha_k + da2 + f2_sk)
            sc = scale[bc]
            add(2 * bc, 2 * bc, gas_pk * sc)
            add(2 * bc, 2 * bc + 1, gas_sk * sc)
            add(2 * bc + 1, 2 * bc, wat_pk * sc)
            add(2 * bc + 1, 2 * bc + 1, wat_sk * sc)

        rows = np.concatenate([np.atleast_1d(r) for r in rows])
        cols = np.concatenate([np.atleast_1d(c) for c in cols])
        data = np.concatenate([np.atleast_1d(d) for d in data])
        return sp.csr_matrix((data, (rows, cols)), shape=(2 * n, 2 * n))

    def _interface_density_partials(self, pk, pl, rkl):
        """(d/dp_K, d/dp_L) of the interface density.

        For the mean-value form: d/dp_K = (rho_KL - rho(p_K)) / (p_L - p_K),
        with the symmetric limit rho'(p_K)/2 on degenerate intervals.
        """
        rho = self.kernel.rho
        pk = np.asarray(pk, dtype=float)
        pl = np.asarray(pl, dtype=float)
        dp = pl - pk
        scale = np.maximum(1.0, np.maximum(np.abs(pk), np.abs(pl)))
        tiny = np.abs(dp) <= 1e-8 * scale
        safe = np.where(tiny, 1.0, dp)
        dk = np.where(tiny, 0.5 * np.asarray(rho.derivative(pk)),
                      (rkl - np.asarray(rho(pk))) / safe)
        dl = np.where(tiny, 0.5 * np.asarray(rho.derivative(pl)),
                      (np.asarray(rho(pl)) - rkl) / safe)
        return dk, dl
