"""Self-contained property suites behind ``fvgw verify``.

Each check re-derives its expectation independently of the library code under
test (hand values, brute-force sampling, finite differences) and raises
:class:`CheckFailure` on violation.  The ``defect`` hook deliberately breaks
one flux branch so the harness can demonstrate it catches real bugs:
``g2-sign`` flips the sign of the upstream branch of G2, which destroys the
conservativity identity (a global sign flip would not, since that identity
is odd-symmetric).
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .fluxes import FluxKernel, harmonic_transmissibility
from .mesh import (
    build_rect_mesh,
    check_admissibility,
    diamond_l2_norm,
    discrete_divergence,
    discrete_gradient,
    duality_defect,
    h_norm,
    l2_norm,
)
from .physics import (
    ConstantDensity,
    FluidModel,
    LogisticDensity,
    PolynomialCapillary,
    PolynomialMobility,
    PowerMobility,
    mobility_split,
    validate_hypotheses,
)
from .scheme import BoundaryData, ImplicitScheme, State
from .solver import SolverConfig, run_simulation, solve_timestep

DEFAULT_SEED = 20260813


class CheckFailure(AssertionError):
    """One verification check found a violated invariant."""


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        msg = f" : {self.detail}" if self.detail and not self.passed else ""
        return f"{status}  {self.suite}.{self.name} ({self.seconds:.2f}s){msg}"


@dataclass
class VerificationReport:
    results: list = field(default_factory=list)
    seed: int = None
    level: str = "quick"

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def __str__(self):
        lines = [r.line() for r in self.results]
        n_fail = sum(not r.passed for r in self.results)
        lines.append(f"{len(self.results)} checks, {n_fail} failed "
                     f"(level {self.level}, seed {self.seed})")
        return "\n".join(lines)


@dataclass
class Context:
    rng: np.random.Generator
    n: int               # sample count for property checks
    level: str
    defect: str = None

    def make_kernel(self, model, path="auto"):
        kernel = FluxKernel(model, path=path)
        if self.defect is None:
            return kernel
        if self.defect == "g2-sign":
            m2 = kernel.m2

            def bad_g2(a, b, c):
                c = np.asarray(c, dtype=float)
                cp = np.maximum(c, 0.0)
                cm = np.maximum(-c, 0.0)
                out = np.asarray(m2(b)) * cp + np.asarray(m2(a)) * cm
                return float(out) if out.ndim == 0 else out

            kernel.g2 = bad_g2
            return kernel
        raise ValueError(f"unknown defect {self.defect!r}")


_REGISTRY = {}


def _register(suite, name):
    def deco(fn):
        _REGISTRY.setdefault(suite, []).append((name, fn))
        return fn
    return deco


def available_suites():
    return list(_REGISTRY)


def _require(cond, message):
    if not cond:
        raise CheckFailure(message)


def _standard_model(**overrides):
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


def _bump_model():
    return _standard_model(
        mobility_gas=PolynomialMobility([0.0, 0.0, 13.0, -24.0, 12.0]),
        mobility_water=PolynomialMobility([1.0, -2.0, 13.0, -24.0, 12.0]),
        total_mobility_floor=0.4)


def _sample_abc(ctx):
    a = ctx.rng.uniform(-0.5, 1.5, size=ctx.n)
    b = ctx.rng.uniform(-0.5, 1.5, size=ctx.n)
    c = ctx.rng.uniform(-3.0, 3.0, size=ctx.n)
    return a, b, c


# -- mesh suite --------------------------------------------------------------------


_MESH_SHAPES = ((2, 2), (8, 8), (16, 16))


@_register("mesh", "admissibility")
def _check_admissibility(ctx):
    for shape in _MESH_SHAPES:
        mesh = build_rect_mesh(shape)
        report = check_admissibility(mesh)
        _require(report.passed, f"rect mesh {shape} flagged inadmissible")
        _require(report.orthogonality_defect == 0.0,
                 "rect mesh has nonzero orthogonality defect")


@_register("mesh", "duality")
def _check_duality(ctx):
    n_pairs = 30 if ctx.level == "quick" else 100
    for shape in _MESH_SHAPES:
        mesh = build_rect_mesh(shape)
        for _ in range(n_pairs):
            w = ctx.rng.normal(size=mesh.n_cells)
            flux = ctx.rng.normal(size=(mesh.n_faces, mesh.dim))
            div = discrete_divergence(mesh, flux)
            scale = (float(np.sum(mesh.cell_volumes * np.abs(w)
                                  * np.abs(div)))
                     + float(np.sum(mesh.diamond_measures
                                    * np.linalg.norm(flux, axis=1) ** 2))
                     + 1.0)
            defect = duality_defect(mesh, w, flux)
            _require(defect <= 1e-12 * scale,
                     f"duality defect {defect:.2e} > 1e-12 * {scale:.2e} "
                     f"on {shape}")


@_register("mesh", "norm_identity")
def _check_norm_identity(ctx):
    n_samples = 10 if ctx.level == "quick" else 100
    for shape in _MESH_SHAPES:
        mesh = build_rect_mesh(shape,
                               boundary_tags={"left": "water_injection"})
        for _ in range(n_samples):
            u = ctx.rng.normal(size=mesh.n_cells)
            lhs = diamond_l2_norm(mesh, discrete_gradient(mesh, u))
            rhs = h_norm(mesh, u)
            _require(abs(lhs - rhs) <= 1e-13 * max(rhs, 1e-30),
                     f"norm identity off by {abs(lhs - rhs):.2e} on {shape}")


@_register("mesh", "poincare")
def _check_poincare(ctx):
    diam = np.sqrt(2.0)
    for shape in _MESH_SHAPES:
        mesh = build_rect_mesh(shape,
                               boundary_tags={"left": "water_injection"})
        for _ in range(20):
            u = ctx.rng.normal(size=mesh.n_cells)
            _require(l2_norm(mesh, u) <= diam * h_norm(mesh, u) + 1e-12,
                     f"Poincare inequality violated on {shape}")


@_register("mesh", "diamond_partition")
def _check_diamond_partition(ctx):
    for shape in _MESH_SHAPES:
        mesh = build_rect_mesh(shape)
        total = float(np.sum(mesh.diamond_measures)
                      + np.sum(mesh.bface_diamond_measures))
        _require(abs(total - mesh.domain_volume) <= 1e-12,
                 f"diamond measures sum to {total}, not |domain| on {shape}")


# -- physics suite -----------------------------------------------------------------


@_register("physics", "interface_density_bounds")
def _check_interface_density(ctx):
    der = _standard_model().derived()
    rho = der.model.density
    p1 = ctx.rng.normal(scale=2.0, size=ctx.n)
    p2 = ctx.rng.normal(scale=2.0, size=ctx.n)
    r12 = np.asarray(der.interface_density(p1, p2))
    r21 = np.asarray(der.interface_density(p2, p1))
    _require(np.array_equal(r12, r21), "interface density is not symmetric")
    _require(np.all((r12 >= rho.rho_min) & (r12 <= rho.rho_max)),
             "interface density leaves the density bounds")
    req = np.asarray(der.interface_density(p1, p1))
    _require(np.allclose(req, np.asarray(rho(p1)), rtol=1e-12),
             "interface density at equal arguments is not rho(p)")


@_register("physics", "energy_cancellation")
def _check_energy_cancellation(ctx):
    der = _standard_model().derived()
    p1 = ctx.rng.normal(scale=2.0, size=ctx.n)
    p2 = ctx.rng.normal(scale=2.0, size=ctx.n)
    lhs = np.asarray(der.interface_density(p1, p2)) * (p2 - p1) \
        + np.asarray(der.g_aux(p2)) - np.asarray(der.g_aux(p1))
    scale = np.abs(np.asarray(der.interface_density(p1, p2)) * (p2 - p1)) \
        + np.abs(np.asarray(der.g_aux(p2))) + np.abs(np.asarray(der.g_aux(p1)))
    _require(np.all(np.abs(lhs) <= 1e-10 * np.maximum(scale, 1e-30)),
             "interface-density/g cancellation identity violated")


@_register("physics", "magic_inequality")
def _check_magic_inequality(ctx):
    der = _standard_model().derived()
    rho = der.model.density
    p = ctx.rng.normal(scale=2.0, size=ctx.n)
    ps = ctx.rng.normal(scale=2.0, size=ctx.n)
    s = ctx.rng.uniform(0.0, 1.0, size=ctx.n)
    ss = ctx.rng.uniform(0.0, 1.0, size=ctx.n)
    big_h = lambda q: np.asarray(der.big_H(q))
    g = lambda q: big_h(q) - np.asarray(rho(q)) * q
    lhs = (np.asarray(rho(p)) * s - np.asarray(rho(ps)) * ss) * p \
        + (s - ss) * g(p)
    rhs = big_h(p) * s - big_h(ps) * ss
    scale = np.abs(lhs) + np.abs(rhs) + 1.0
    _require(np.all(lhs - rhs >= -1e-10 * scale),
             "time-term convexity inequality violated")


@_register("physics", "beta_inverse_round_trip")
def _check_beta_inverse(ctx):
    der = _standard_model().derived()
    s = ctx.rng.uniform(0.0, 1.0, size=ctx.n)
    back = np.asarray(der.beta_inverse(np.asarray(der.beta(s))))
    _require(np.max(np.abs(back - s)) <= 1e-9,
             "beta inverse round trip error above 1e-9")


@_register("physics", "mobility_split")
def _check_mobility_split(ctx):
    for mob in (_bump_model().mobility_gas, _bump_model().mobility_water):
        up, down = mobility_split(mob)
        s = np.linspace(0.0, 1.0, 2001)
        recon = np.asarray(up(s)) + np.asarray(down(s)) + float(mob(0.0))
        _require(np.max(np.abs(recon - np.asarray(mob(s)))) <= 1e-12,
                 "variation split does not reconstruct the mobility")
        du = np.diff(np.asarray(up(s)))
        dd = np.diff(np.asarray(down(s)))
        _require(np.all(du >= -1e-12) and np.all(dd <= 1e-12),
                 "variation split parts are not monotone")


@_register("physics", "hypotheses")
def _check_hypotheses(ctx):
    report = validate_hypotheses(_standard_model())
    _require(not report.failed_hard(),
             f"standard model violates hypotheses: {report.failed_hard()}")


# -- fluxes suite ------------------------------------------------------------------


@_register("fluxes", "consistency")
def _check_consistency(ctx):
    s = ctx.rng.uniform(0.0, 1.0, size=ctx.n)
    c = ctx.rng.uniform(-3.0, 3.0, size=ctx.n)
    for model, tol in ((_standard_model(), 0.0), (_bump_model(), 1e-13)):
        k = ctx.make_kernel(model)
        g1 = np.asarray(k.g1(s, s, c))
        g2 = np.asarray(k.g2(s, s, c))
        t1 = -np.asarray(k.m1(s)) * c
        t2 = np.asarray(k.m2(s)) * c
        scale = np.abs(t1) + np.abs(t2) + 1.0
        _require(np.all(np.abs(g1 - t1) <= tol * scale),
                 "G1 is not consistent with -M1(s) c")
        _require(np.all(np.abs(g2 - t2) <= tol * scale),
                 "G2 is not consistent with M2(s) c")


@_register("fluxes", "conservativity")
def _check_conservativity(ctx):
    a, b, c = _sample_abc(ctx)
    for model in (_standard_model(), _bump_model()):
        k = ctx.make_kernel(model)
        for g in (k.g1, k.g2):
            lhs = np.asarray(g(a, b, c))
            rhs = -np.asarray(g(b, a, -c))
            _require(np.array_equal(lhs, rhs),
                     "conservativity G(a,b,c) = -G(b,a,-c) violated")


@_register("fluxes", "monotonicity")
def _check_monotonicity(ctx):
    a, b, c = _sample_abc(ctx)
    d = 1e-3
    for model in (_standard_model(), _bump_model()):
        k = ctx.make_kernel(model)
        for g in (k.g1, k.g2):
            base = np.asarray(g(a, b, c))
            _require(np.all(np.asarray(g(a + d, b, c)) >= base - 1e-12),
                     "numerical flux not nondecreasing in a")
            _require(np.all(np.asarray(g(a, b + d, c)) <= base + 1e-12),
                     "numerical flux not nonincreasing in b")


@_register("fluxes", "coercivity")
def _check_coercivity(ctx):
    a, b, c = _sample_abc(ctx)
    for model in (_standard_model(), _bump_model()):
        k = ctx.make_kernel(model)
        gap = (np.asarray(k.g2(np.clip(a, 0, 1), np.clip(b, 0, 1), c))
               - np.asarray(k.g1(np.clip(a, 0, 1), np.clip(b, 0, 1), c))) * c \
            - k.m0 * c * c
        _require(np.all(gap >= -1e-12 * np.maximum(c * c, 1.0)),
                 "coercivity (G2 - G1) c >= m0 c^2 violated")


@_register("fluxes", "growth_bound")
def _check_growth(ctx):
    a, b, c = _sample_abc(ctx)
    grid = np.linspace(0.0, 1.0, 20001)
    for model in (_standard_model(), _bump_model()):
        k = ctx.make_kernel(model)
        for g, mob in ((k.g1, k.m1), (k.g2, k.m2)):
            lip = float(np.max(np.abs(np.asarray(mob.derivative(grid)))))
            dev = np.abs(np.asarray(g(a, b, c)) - np.asarray(g(0.0, 0.0, c)))
            bound = lip * (np.abs(a) + np.abs(b)) * np.abs(c)
            _require(np.all(dev <= bound + 1e-12),
                     "centered growth bound violated")


@_register("fluxes", "gravity_antisymmetry")
def _check_gravity(ctx):
    k = ctx.make_kernel(_standard_model(gravity=(0.0, -9.81)))
    n = ctx.n
    pk, pl = ctx.rng.normal(size=n), ctx.rng.normal(size=n)
    sk, sl = ctx.rng.uniform(0, 1, n), ctx.rng.uniform(0, 1, n)
    gp, gm = np.abs(ctx.rng.normal(size=n)), np.abs(ctx.rng.normal(size=n))
    f1 = np.asarray(k.gravity_gas(pk, pl, sk, sl, gp, gm))
    f1_swapped = np.asarray(k.gravity_gas(pl, pk, sl, sk, gm, gp))
    _require(np.array_equal(f1, -f1_swapped), "F1 is not antisymmetric")
    f2 = np.asarray(k.gravity_water(sk, sl, gp, gm))
    f2_swapped = np.asarray(k.gravity_water(sl, sk, gm, gp))
    _require(np.array_equal(f2, -f2_swapped), "F2 is not antisymmetric")


@_register("fluxes", "harmonic_transmissibility")
def _check_harmonic(ctx):
    k1 = ctx.rng.uniform(0.1, 10.0, size=ctx.n)
    k2 = ctx.rng.uniform(0.1, 10.0, size=ctx.n)
    d = ctx.rng.uniform(0.1, 2.0, size=ctx.n)
    ds = harmonic_transmissibility(k1, k2, d / 2, d / 2, d)
    _require(np.all(ds > 0), "face permeability not positive")
    _require(np.all(ds <= np.maximum(k1, k2) + 1e-14),
             "face permeability above both cell values")
    uniform = harmonic_transmissibility(k1, k1, d / 2, d / 2, d)
    _require(np.allclose(uniform, k1, rtol=1e-14),
             "uniform permeability not reproduced")


# -- scheme suite ------------------------------------------------------------------


def _hand_model():
    return FluidModel(
        density=ConstantDensity(1.0),
        mobility_gas=PowerMobility(2),
        mobility_water=PowerMobility(2, decreasing=True),
        capillary=PolynomialCapillary([0.0, 2.0, -2.0]),
        water_density=1.0,
        total_mobility_floor=0.5)


@_register("scheme", "two_cell_hand_residual")
def _check_two_cell(ctx):
    mesh = build_rect_mesh((2, 1), extent=(0.0, 2.0, 0.0, 1.0))
    model = _hand_model()
    scheme = ImplicitScheme(mesh, model,
                            kernel=ctx.make_kernel(model))
    old = State(p=np.zeros(2), s=np.array([0.5, 0.5]))
    new = State(p=np.array([1.0, 0.0]), s=np.array([0.2, 0.8]))
    res = scheme.assemble_residual(old, new, dt=1.0, scale_by_volume=False)
    expect = {"gas": (-0.524, 0.524), "water": (-1.204, 1.204)}
    for name, (e0, e1) in expect.items():
        got = getattr(res, name)
        _require(abs(got[0] - e0) <= 1e-14 and abs(got[1] - e1) <= 1e-14,
                 f"{name} residual {got} differs from hand value {(e0, e1)}")


@_register("scheme", "uniform_zero_residual")
def _check_uniform_zero(ctx):
    model = _standard_model(gravity=None)
    mesh = build_rect_mesh((4, 4))
    scheme = ImplicitScheme(mesh, model, kernel=ctx.make_kernel(model))
    st = State(p=np.full(16, 1.1), s=np.full(16, 0.6))
    res = scheme.assemble_residual(st, st, dt=0.1)
    _require(np.all(res.vector() == 0.0),
             "uniform equilibrium has nonzero residual")


@_register("scheme", "flux_telescoping")
def _check_telescoping(ctx):
    model = _standard_model()
    mesh = build_rect_mesh((5, 4))
    scheme = ImplicitScheme(mesh, model, kernel=ctx.make_kernel(model))
    n = mesh.n_cells
    old = State(p=ctx.rng.normal(size=n), s=ctx.rng.uniform(0, 1, n))
    new = State(p=ctx.rng.normal(size=n), s=ctx.rng.uniform(0, 1, n))
    res = scheme.assemble_residual(old, new, 0.25, scale_by_volume=False)
    vol = mesh.cell_volumes
    rho = scheme.kernel.rho
    acc_gas = float(np.sum(vol * (np.asarray(rho(new.p)) * new.s
                                  - np.asarray(rho(old.p)) * old.s) / 0.25))
    acc_wat = float(np.sum(vol * (new.s - old.s) / 0.25))
    scale = float(np.sum(np.abs(res.gas))) + 1.0
    _require(abs(float(np.sum(res.gas)) - acc_gas) <= 1e-12 * scale,
             "gas fluxes do not telescope")
    _require(abs(float(np.sum(res.water)) - acc_wat) <= 1e-12 * scale,
             "water fluxes do not telescope")


@_register("scheme", "jacobian_cross_check")
def _check_jacobian(ctx):
    n_states = 3 if ctx.level == "quick" else 10
    mesh = build_rect_mesh((3, 3), boundary_tags={"left": "water_injection"})
    model = _standard_model(gravity=(0.0, -1.0))
    scheme = ImplicitScheme(mesh, model, kernel=ctx.make_kernel(model),
                            boundary=BoundaryData(pressure=0.3,
                                                  saturation=0.1))
    for _ in range(n_states):
        old = State(p=ctx.rng.normal(size=9),
                    s=ctx.rng.uniform(0.05, 0.95, 9))
        new = State(p=ctx.rng.normal(size=9),
                    s=ctx.rng.uniform(0.05, 0.95, 9))
        jfd = scheme.assemble_jacobian_fd(old, new, 0.1).toarray()
        jan = scheme.assemble_jacobian_analytic(old, new, 0.1).toarray()
        mismatch = np.max(np.abs(jfd - jan) / (1.0 + np.abs(jan)))
        _require(mismatch < 1e-5,
                 f"analytic/FD Jacobian mismatch {mismatch:.2e}")


# -- solver suite ------------------------------------------------------------------


@_register("solver", "equilibrium_no_iterations")
def _check_equilibrium(ctx):
    model = _standard_model(gravity=None)
    mesh = build_rect_mesh((4, 4))
    scheme = ImplicitScheme(mesh, model, kernel=ctx.make_kernel(model))
    st = State(p=np.full(16, 0.9), s=np.full(16, 0.4))
    _, stats = solve_timestep(scheme, st, 0.5)
    _require(stats.iterations == 0 and stats.converged,
             "equilibrium step took Newton iterations")


@_register("solver", "newton_contraction")
def _check_contraction(ctx):
    mesh = build_rect_mesh((2, 1), extent=(0.0, 2.0, 0.0, 1.0))
    model = _standard_model()
    scheme = ImplicitScheme(mesh, model, kernel=ctx.make_kernel(model))
    old = State(p=np.array([1.0, 0.0]), s=np.array([0.7, 0.3]))
    cfg = SolverConfig(dt=0.5, t_end=0.5, newton_tol=1e-13)
    _, stats = solve_timestep(scheme, old, 0.5, config=cfg)
    hist = stats.history
    _require(stats.converged and len(hist) >= 4,
             "Newton did not produce a contraction history")
    for prev, nxt in zip(hist[1:-1], hist[2:]):
        _require(nxt <= 10.0 * prev ** 2,
                 "contraction is not quadratic-like")


@_register("solver", "injection_run_invariants")
def _check_injection_run(ctx):
    model = _standard_model()
    mesh = build_rect_mesh((8, 8), boundary_tags={"left": "water_injection"})
    scheme = ImplicitScheme(mesh, model, kernel=ctx.make_kernel(model),
                            boundary=BoundaryData(0.0, 0.0))
    init = State(p=np.full(64, 1.0), s=np.full(64, 0.9))
    n_steps = 10 if ctx.level == "quick" else 40
    cfg = SolverConfig(dt=0.01, t_end=0.01 * n_steps)
    res = run_simulation(scheme, init, cfg)
    _require(res.final_time == cfg.t_end, "run did not land on t_end")
    omega = mesh.domain_volume
    for m in res.monitors:
        _require(-1e-10 <= m.min_s and m.max_s <= 1.0 + 1e-10,
                 f"saturation bounds violated at step {m.step}")
        _require(m.water_mass_defect <= 10 * cfg.newton_tol * omega,
                 f"mass defect {m.water_mass_defect:.2e} too large "
                 f"at step {m.step}")


@_register("solver", "determinism")
def _check_determinism(ctx):
    model = _standard_model()
    mesh = build_rect_mesh((8, 8), boundary_tags={"left": "water_injection"})
    scheme = ImplicitScheme(mesh, model, kernel=ctx.make_kernel(model),
                            boundary=BoundaryData(0.0, 0.0))
    init = State(p=np.full(64, 1.0), s=np.full(64, 0.8))
    cfg = SolverConfig(dt=0.02, t_end=0.06)
    r1 = run_simulation(scheme, init, cfg)
    r2 = run_simulation(scheme, init, cfg)
    _require([m.values() for m in r1.monitors]
             == [m.values() for m in r2.monitors],
             "identical runs produced different monitors")


# -- driver ------------------------------------------------------------------------


def run_verification(level="quick", suites=None, seed=None,
                     defect=None) -> VerificationReport:
    """Run the property suites; FVGW_SEED overrides the sampling seed."""
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    if seed is None:
        seed = int(os.environ.get("FVGW_SEED", DEFAULT_SEED))
    if suites is None:
        selected = list(_REGISTRY)
    else:
        unknown = set(suites) - set(_REGISTRY)
        if unknown:
            raise ValueError(
                f"unknown suite(s): {', '.join(sorted(unknown))}; "
                f"available: {', '.join(_REGISTRY)}")
        selected = [s for s in _REGISTRY if s in set(suites)]

    n = 2000 if level == "quick" else 10000
    report = VerificationReport(seed=seed, level=level)
    for suite in selected:
        for name, fn in _REGISTRY[suite]:
            ctx = Context(rng=np.random.default_rng(seed), n=n, level=level,
                          defect=defect)
            start = time.perf_counter()
            try:
                fn(ctx)
                result = CheckResult(suite, name, True)
            except CheckFailure as exc:
                result = CheckResult(suite, name, False, str(exc))
            except Exception as exc:
                # A crash under an injected defect is still a finding.
                result = CheckResult(
                    suite, name, False,
                    f"{type(exc).__name__}: {exc}")
            result.seconds = time.perf_counter() - start
            report.results.append(result)
    return report
