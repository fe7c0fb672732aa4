"""Acceptance gate: one test per release criterion, one printed line each.

Each test measures the quantity its criterion bounds, prints a single
``criterion NN <label>: PASS/FAIL (...)`` line (visible with ``pytest -s``;
the pytest verdict itself carries the same information), and then asserts.
Criteria with a wall-time budget assert their own elapsed time.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from fvgw.config import build_simulation, load_config
from fvgw.convergence import refine_config, run_convergence
from fvgw.fluxes import FluxKernel
from fvgw.mesh import (
    build_rect_mesh,
    diamond_l2_norm,
    discrete_divergence,
    discrete_gradient,
    duality_defect,
    h_norm,
)
from fvgw.physics import (
    ConstantDensity,
    FluidModel,
    LogisticDensity,
    PolynomialCapillary,
    PolynomialMobility,
    PowerMobility,
)
from fvgw.scheme import ImplicitScheme, State
from fvgw.solver import run_simulation, translate_diagnostics

from conftest import BASE_SEED

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
SCENARIOS = ("injection", "gravity_segregation", "heterogeneous_k")
MESH_SHAPES = ((2, 2), (8, 8), (16, 16))


def standard_model(**overrides):
    kw = dict(
        density=LogisticDensity(1.0, 2.0, 0.5),
        mobility_gas=PowerMobility(2),
        mobility_water=PowerMobility(2, decreasing=True),
        capillary=PolynomialCapillary([0.0, 3.0, -2.0]),
        water_density=2.0,
        total_mobility_floor=0.5,
    )
    kw.update(overrides)
    return FluidModel(**kw)


def bump_model():
    """Non-monotone mobilities so the variation-split flux path is covered."""
    return standard_model(
        mobility_gas=PolynomialMobility([0.0, 0.0, 13.0, -24.0, 12.0]),
        mobility_water=PolynomialMobility([1.0, -2.0, 13.0, -24.0, 12.0]),
        total_mobility_floor=0.4)


def report(num, label, ok, detail):
    print(f"criterion {num:02d} {label}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num:02d} {label}: {detail}"


@pytest.fixture(scope="module")
def scenario_runs():
    """All shipped scenario runs, shared across criteria 5 and 8."""
    runs = {}
    for path in sorted(CONFIG_DIR.glob("*.toml")):
        setup = build_simulation(load_config(path))
        start = time.perf_counter()
        result = run_simulation(setup.scheme, setup.initial, setup.solver,
                                save_every=setup.save_every)
        runs[path.stem] = (setup, result, time.perf_counter() - start)
    return runs


def test_01_discrete_duality():
    rng = np.random.default_rng(BASE_SEED)
    start = time.perf_counter()
    worst = 0.0
    for shape in MESH_SHAPES:
        mesh = build_rect_mesh(shape)
        for _ in range(100):
            w = rng.normal(size=mesh.n_cells)
            flux = rng.normal(size=(mesh.n_faces, mesh.dim))
            div = discrete_divergence(mesh, flux)
            scale = (float(np.sum(mesh.cell_volumes * np.abs(w)
                                  * np.abs(div)))
                     + float(np.sum(mesh.diamond_measures
                                    * np.linalg.norm(flux, axis=1) ** 2))
                     + 1.0)
            worst = max(worst, duality_defect(mesh, w, flux) / scale)
    elapsed = time.perf_counter() - start
    report(1, "discrete duality", worst <= 1e-12 and elapsed < 5.0,
           f"max defect/scale {worst:.2e}, {elapsed:.2f}s")


def test_02_norm_identity():
    rng = np.random.default_rng(BASE_SEED)
    worst = 0.0
    for shape in MESH_SHAPES:
        for tags in (None, {"left": "water_injection"}):
            mesh = build_rect_mesh(shape, boundary_tags=tags)
            for _ in range(100):
                u = rng.normal(size=mesh.n_cells)
                lhs = diamond_l2_norm(mesh, discrete_gradient(mesh, u))
                rhs = h_norm(mesh, u)
                worst = max(worst, abs(lhs - rhs) / max(rhs, 1e-30))
    report(2, "gradient/h-norm identity", worst <= 1e-13,
           f"max relative error {worst:.2e}")


def test_03_flux_hypotheses():
    rng = np.random.default_rng(BASE_SEED)
    start = time.perf_counter()
    n = 10000
    a = rng.uniform(-0.5, 1.5, size=n)
    b = rng.uniform(-0.5, 1.5, size=n)
    c = rng.uniform(-3.0, 3.0, size=n)
    s = np.clip(a, 0.0, 1.0)
    d = 1e-3
    problems = []
    for model in (standard_model(), bump_model()):
        k = FluxKernel(model)
        exact = 0.0 if k.upwind_path else 1e-13
        for g, target in ((k.g1, -np.asarray(k.m1(s)) * c),
                          (k.g2, np.asarray(k.m2(s)) * c)):
            dev = np.abs(np.asarray(g(s, s, c)) - target)
            if np.any(dev > exact * (np.abs(target) + 1.0)):
                problems.append("consistency")
            if not np.array_equal(np.asarray(g(a, b, c)),
                                  -np.asarray(g(b, a, -c))):
                problems.append("conservativity")
            base = np.asarray(g(a, b, c))
            if np.any(np.asarray(g(a + d, b, c)) < base - 1e-12):
                problems.append("monotonicity in a")
            if np.any(np.asarray(g(a, b + d, c)) > base + 1e-12):
                problems.append("monotonicity in b")
        sa, sb = np.clip(a, 0.0, 1.0), np.clip(b, 0.0, 1.0)
        gap = (np.asarray(k.g2(sa, sb, c)) - np.asarray(k.g1(sa, sb, c))) * c \
            - k.m0 * c * c
        if np.any(gap < -1e-12 * np.maximum(c * c, 1.0)):
            problems.append("coercivity")
    elapsed = time.perf_counter() - start
    report(3, "flux hypotheses (a)-(d)",
           not problems and elapsed < 5.0,
           f"{n} samples, both flux paths, {elapsed:.2f}s"
           + (f"; failed: {', '.join(problems)}" if problems else ""))


def test_04_energy_estimate_mechanism():
    rng = np.random.default_rng(BASE_SEED)
    der = standard_model().derived()
    n = 10000
    p1 = rng.normal(scale=2.0, size=n)
    p2 = rng.normal(scale=2.0, size=n)
    rkl = np.asarray(der.interface_density(p1, p2))
    cancel = rkl * (p2 - p1) + np.asarray(der.g_aux(p2)) \
        - np.asarray(der.g_aux(p1))
    scale = np.abs(rkl * (p2 - p1)) + np.abs(np.asarray(der.g_aux(p2))) \
        + np.abs(np.asarray(der.g_aux(p1)))
    worst_cancel = float(np.max(np.abs(cancel) / np.maximum(scale, 1e-30)))

    rho = der.model.density
    p, ps = rng.normal(scale=2.0, size=n), rng.normal(scale=2.0, size=n)
    s, ss = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
    g = lambda q: np.asarray(der.big_H(q)) - np.asarray(rho(q)) * q
    lhs = (np.asarray(rho(p)) * s - np.asarray(rho(ps)) * ss) * p \
        + (s - ss) * g(p)
    rhs = np.asarray(der.big_H(p)) * s - np.asarray(der.big_H(ps)) * ss
    slack = np.abs(lhs) + np.abs(rhs) + 1.0
    worst_gap = float(np.min((lhs - rhs) / slack))

    report(4, "energy cancellation + convexity",
           worst_cancel <= 1e-10 and worst_gap >= -1e-10,
           f"cancellation {worst_cancel:.2e}, convexity gap {worst_gap:.2e}")


def test_05_maximum_principle(scenario_runs):
    lines = []
    ok = True
    total = 0.0
    for name in SCENARIOS:
        setup, result, elapsed = scenario_runs[name]
        total += elapsed
        lo = min(rec.min_s for rec in result.monitors)
        hi = max(rec.max_s for rec in result.monitors)
        this = (lo >= -1e-10 and hi <= 1.0 + 1e-10
                and result.n_steps >= 100)
        ok = ok and this
        lines.append(f"{name} s in [{lo:.3e}, {hi:.6f}] over "
                     f"{result.n_steps} steps")
    ok = ok and total < 300.0
    report(5, "maximum principle", ok,
           "; ".join(lines) + f"; {total:.1f}s")


def test_06_two_cell_residual_oracle():
    mesh = build_rect_mesh((2, 1), (0.0, 2.0, 0.0, 1.0))
    model = FluidModel(
        density=ConstantDensity(1.0),
        mobility_gas=PowerMobility(2),
        mobility_water=PowerMobility(2, decreasing=True),
        capillary=PolynomialCapillary([0.0, 2.0, -2.0]),
        water_density=1.0,
        total_mobility_floor=0.5)
    scheme = ImplicitScheme(mesh, model)
    old = State(p=np.zeros(2), s=np.array([0.5, 0.5]))
    new = State(p=np.array([1.0, 0.0]), s=np.array([0.2, 0.8]))
    res = scheme.assemble_residual(old, new, dt=1.0, scale_by_volume=False)
    hand = {"gas": (-0.524, 0.524), "water": (-1.204, 1.204)}
    worst = max(abs(res.gas[0] - hand["gas"][0]),
                abs(res.gas[1] - hand["gas"][1]),
                abs(res.water[0] - hand["water"][0]),
                abs(res.water[1] - hand["water"][1]))
    report(6, "two-cell residual oracle", worst <= 1e-14,
           f"max deviation from hand values {worst:.2e}")


def test_07_jacobian_cross_check():
    rng = np.random.default_rng(BASE_SEED)
    mesh = build_rect_mesh((3, 3), boundary_tags={"left": "water_injection"})
    from fvgw.scheme import BoundaryData
    scheme = ImplicitScheme(mesh, standard_model(gravity=(0.0, -1.7)),
                            boundary=BoundaryData(0.0, 0.0))
    worst = 0.0
    for _ in range(10):
        old = State(p=rng.normal(size=9), s=rng.uniform(0, 1, 9))
        new = State(p=rng.normal(size=9), s=rng.uniform(0, 1, 9))
        ja = scheme.assemble_jacobian_analytic(old, new, 0.05).toarray()
        jf = scheme.assemble_jacobian_fd(old, new, 0.05).toarray()
        denom = max(float(np.max(np.abs(ja))), 1.0)
        worst = max(worst, float(np.max(np.abs(ja - jf))) / denom)
    report(7, "jacobian cross-check", worst < 1e-5,
           f"10 random states, max relative mismatch {worst:.2e}")


def test_08_water_mass_balance(scenario_runs):
    lines = []
    ok = True
    for name, (setup, result, _) in sorted(scenario_runs.items()):
        tol = setup.solver.newton_tol
        n_cells = setup.mesh.n_cells
        cell_scale = setup.mesh.domain_volume / n_cells
        bound = 10.0 * tol * n_cells * cell_scale
        worst = max(rec.water_mass_defect for rec in result.monitors)
        ok = ok and worst <= bound
        lines.append(f"{name} {worst:.2e} <= {bound:.2e}")
    report(8, "water-mass balance", ok, "; ".join(lines))


def test_09_monitor_boundedness():
    cfg = load_config(CONFIG_DIR / "injection.toml")
    cfg["mesh"]["nx"] = cfg["mesh"]["ny"] = 8
    cfg["time"] = {"dt": 0.02, "t_end": 0.2}
    energies = []
    for _ in range(4):
        setup = build_simulation(cfg)
        result = run_simulation(setup.scheme, setup.initial, setup.solver)
        last = result.monitors[-1]
        energies.append((last.gas_energy, last.water_energy))
        cfg = refine_config(cfg, 2)
    g0, w0 = energies[0]
    ratios = [(g / g0, w / w0) for g, w in energies]
    flat = [r for pair in ratios for r in pair]
    ok = all(0.5 <= r <= 2.0 for r in flat)
    report(9, "monitor boundedness under refinement", ok,
           "gas/water energy ratios to coarsest: "
           + ", ".join(f"{g:.3f}/{w:.3f}" for g, w in ratios))


def test_10_experimental_convergence():
    start = time.perf_counter()
    table = run_convergence(load_config(CONFIG_DIR / "smooth_testmode.toml"),
                            levels=3)
    elapsed = time.perf_counter() - start
    err_p = [lv.err_p for lv in table.levels]
    err_s = [lv.err_s for lv in table.levels]
    decreasing = all(b < a for a, b in zip(err_p, err_p[1:])) and \
        all(b < a for a, b in zip(err_s, err_s[1:]))
    report(10, "experimental convergence", decreasing and elapsed < 600.0,
           f"err_p {', '.join(f'{e:.3e}' for e in err_p)}; "
           f"err_s {', '.join(f'{e:.3e}' for e in err_s)}; {elapsed:.1f}s")


def test_11_translate_diagnostics(scenario_runs):
    setup, result, _ = scenario_runs["smooth_testmode"]
    dx = float(setup.mesh.structure.spacing[0])
    norms = []
    for cells in (4, 2, 1):
        space, _ = translate_diagnostics(setup.scheme, result,
                                         y=(cells * dx, 0.0))
        norms.append(space)
    ok = norms[0] >= norms[1] >= norms[2] > 0
    report(11, "translate norms nonincreasing", ok,
           "norms at y, y/2, y/4: " + ", ".join(f"{v:.4e}" for v in norms))
