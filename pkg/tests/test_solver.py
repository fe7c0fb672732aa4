"""Newton stepper, simulation loop, monitors, and translate diagnostics."""

import numpy as np
import pytest

import fvgw.solver as solver_mod
from fvgw.mesh import build_rect_mesh
from fvgw.physics import (
    FluidModel,
    LogisticDensity,
    PolynomialCapillary,
    PowerMobility,
)
from fvgw.scheme import BoundaryData, ImplicitScheme, SourceModel, State
from fvgw.solver import (
    MonitorRecord,
    NewtonStats,
    SimulationAbort,
    SolverConfig,
    StepFailure,
    compact_field,
    run_simulation,
    solve_timestep,
    translate_diagnostics,
)


def make_model(**overrides):
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


def closed_box_scheme(shape=(8, 8), **model_overrides):
    mesh = build_rect_mesh(shape)
    return ImplicitScheme(mesh, make_model(**model_overrides))


def injection_scheme(shape=(8, 8), p_w=0.0, s_w=0.0, **model_overrides):
    mesh = build_rect_mesh(shape, boundary_tags={"left": "water_injection"})
    return ImplicitScheme(mesh, make_model(**model_overrides),
                          boundary=BoundaryData(pressure=p_w, saturation=s_w))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=-1.0, t_end=1.0)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_end=1.0, dt_min=0.2)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_end=1.0, jacobian="symbolic")
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_end=1.0, linear_solver="magic")
    cfg = SolverConfig(dt=0.1, t_end=1.0)
    assert cfg.dt_min == pytest.approx(1e-7)


def test_equilibrium_converges_without_iterations():
    scheme = closed_box_scheme()
    st = State(p=np.full(64, 1.2), s=np.full(64, 0.4))
    new, stats = solve_timestep(scheme, st, dt=0.5)
    assert stats.iterations == 0 and stats.converged
    assert np.array_equal(new.p, st.p) and np.array_equal(new.s, st.s)


def test_newton_contracts_quadratically_on_two_cell_problem():
    mesh = build_rect_mesh((2, 1), extent=(0.0, 2.0, 0.0, 1.0))
    scheme = ImplicitScheme(mesh, make_model())
    old = State(p=np.array([1.0, 0.0]), s=np.array([0.7, 0.3]))
    cfg = SolverConfig(dt=0.5, t_end=0.5, newton_tol=1e-13)
    _, stats = solve_timestep(scheme, old, 0.5, config=cfg)
    hist = stats.history
    assert stats.converged and len(hist) >= 4
    # Quadratic-like contraction in the final iterations: the observed
    # constant is ~0.11, so 10 is a generous cap.
    for prev, nxt in zip(hist[1:-1], hist[2:]):
        assert nxt <= 10.0 * prev ** 2


def test_step_satisfies_tolerance_and_saturation_bounds(rng):
    scheme = injection_scheme(p_w=0.2, s_w=0.0)
    old = State(p=rng.uniform(0, 1, 64), s=rng.uniform(0.2, 0.9, 64))
    new, stats = solve_timestep(scheme, old, dt=0.02)
    res = scheme.assemble_residual(old, new, dt=0.02)
    assert res.inf_norm() <= 1e-10
    assert np.min(new.s) >= -1e-10 and np.max(new.s) <= 1.0 + 1e-10


def test_budget_exhaustion_raises_step_failure(rng):
    scheme = injection_scheme(p_w=-1.0)
    old = State(p=2.0 * rng.uniform(size=64), s=np.full(64, 0.95))
    cfg = SolverConfig(dt=2.0, t_end=2.0, newton_max_iter=2)
    with pytest.raises(StepFailure):
        solve_timestep(scheme, old, 2.0, config=cfg)


def test_iterative_linear_solver_matches_direct(rng):
    scheme = injection_scheme()
    old = State(p=rng.uniform(0, 1, 64), s=rng.uniform(0.3, 0.7, 64))
    direct_cfg = SolverConfig(dt=0.02, t_end=0.02)
    iter_cfg = SolverConfig(dt=0.02, t_end=0.02, linear_solver="iterative")
    new_d, _ = solve_timestep(scheme, old, 0.02, config=direct_cfg)
    new_i, _ = solve_timestep(scheme, old, 0.02, config=iter_cfg)
    assert np.allclose(new_d.p, new_i.p, atol=1e-8)
    assert np.allclose(new_d.s, new_i.s, atol=1e-8)


def test_fd_jacobian_option_gives_same_step(rng):
    scheme = closed_box_scheme(shape=(4, 4))
    old = State(p=rng.uniform(0, 1, 16), s=rng.uniform(0.2, 0.8, 16))
    new_a, _ = solve_timestep(scheme, old, 0.05,
                              config=SolverConfig(dt=0.05, t_end=0.05))
    new_f, _ = solve_timestep(scheme, old, 0.05,
                              config=SolverConfig(dt=0.05, t_end=0.05,
                                                  jacobian="fd"))
    assert np.allclose(new_a.p, new_f.p, atol=1e-9)
    assert np.allclose(new_a.s, new_f.s, atol=1e-9)


def test_constant_scenario_has_flat_trajectory_and_monitors():
    scheme = closed_box_scheme()
    init = State(p=np.full(64, 0.7), s=np.full(64, 0.3))
    cfg = SolverConfig(dt=0.05, t_end=0.25)
    res = run_simulation(scheme, init, cfg)
    assert res.final_time == 0.25
    assert np.array_equal(res.final_state.p, init.p)
    assert np.array_equal(res.final_state.s, init.s)
    assert all(m.newton_iters == 0 for m in res.monitors)
    assert all(m.min_s == 0.3 and m.max_s == 0.3 for m in res.monitors)
    energies = {(m.gas_energy, m.water_energy) for m in res.monitors}
    assert len(energies) == 1
    assert all(m.water_mass_defect == 0.0 for m in res.monitors)


def test_run_lands_on_t_end_exactly():
    scheme = closed_box_scheme(shape=(2, 2))
    init = State(p=np.full(4, 0.5), s=np.full(4, 0.5))
    cfg = SolverConfig(dt=0.3, t_end=1.0)
    res = run_simulation(scheme, init, cfg)
    assert res.final_time == 1.0
    assert res.monitors[-1].time == 1.0
    assert res.monitors[-1].dt == pytest.approx(0.1, abs=1e-12)
    assert [m.dt for m in res.monitors[:-1]] == [0.3, 0.3, 0.3]


def test_monitor_record_field_order_matches_header():
    rec = MonitorRecord(step=1, time=0.1, dt=0.1, newton_iters=3,
                        min_s=0.0, max_s=1.0, gas_energy=0.5,
                        water_energy=0.25, water_mass_defect=1e-12)
    assert MonitorRecord.HEADER.split(",") == [
        "step", "time", "dt", "newton_iters", "min_s", "max_s",
        "gas_energy", "water_energy", "water_mass_defect"]
    assert rec.values() == [1, 0.1, 0.1, 3, 0.0, 1.0, 0.5, 0.25, 1e-12]


def test_dt_fallback_state_machine(monkeypatch):
    """Halving on failure, regrowth capped at the initial dt, T reached."""
    scheme = closed_box_scheme(shape=(2, 2))
    init = State(p=np.full(4, 0.5), s=np.full(4, 0.5))
    calls = []

    def fake_solve(scheme_, state_old, dt, t_old=0.0, config=None,
                   initial_guess=None):
        calls.append(dt)
        if dt > 0.03:
            raise StepFailure("forced")
        return state_old.copy(), NewtonStats(1, True, 0.0, 0, [0.0])

    monkeypatch.setattr(solver_mod, "solve_timestep", fake_solve)
    cfg = SolverConfig(dt=0.1, t_end=0.2, dt_min=1e-4, dt_growth=1.2)
    res = run_simulation(scheme, init, cfg)
    assert res.final_time == 0.2
    # 0.1 and 0.05 rejected, then 0.025 accepted and regrown by 1.2 without
    # ever exceeding the 0.03 ceiling again (growth is capped at 0.1 but the
    # fake solver pins acceptance below 0.03, re-triggering halving).
    assert calls[0] == pytest.approx(0.1) and calls[1] == pytest.approx(0.05)
    assert res.n_rejected >= 2
    accepted = [m.dt for m in res.monitors]
    assert all(dt <= 0.03 + 1e-12 for dt in accepted)
    assert max(accepted) <= cfg.dt


def test_dt_floor_aborts(rng):
    scheme = injection_scheme(p_w=-1.0)
    init = State(p=2.0 * rng.uniform(size=64), s=np.full(64, 0.95))
    cfg = SolverConfig(dt=0.1, t_end=1.0, newton_max_iter=1, dt_min=0.04)
    with pytest.raises(SimulationAbort):
        run_simulation(scheme, init, cfg)


def test_monitors_track_energy_and_defect():
    scheme = injection_scheme(p_w=0.0, s_w=0.0)
    init = State(p=np.full(64, 1.0), s=np.full(64, 0.9))
    cfg = SolverConfig(dt=0.01, t_end=0.1)
    res = run_simulation(scheme, init, cfg)
    assert len(res.monitors) == 10
    omega = scheme.mesh.domain_volume
    for m in res.monitors:
        assert -1e-10 <= m.min_s <= m.max_s <= 1.0 + 1e-10
        assert m.water_mass_defect <= 10 * cfg.newton_tol * omega
        assert np.isfinite(m.gas_energy) and np.isfinite(m.water_energy)
    # Water drive from the left boundary displaces gas: s_min decreases.
    assert res.monitors[-1].min_s < 0.9


def test_simulation_is_deterministic():
    scheme = injection_scheme()
    init = State(p=np.full(64, 1.0), s=np.full(64, 0.8))
    cfg = SolverConfig(dt=0.02, t_end=0.08)
    res1 = run_simulation(scheme, init, cfg, save_every=0.04)
    res2 = run_simulation(scheme, init, cfg, save_every=0.04)
    assert [m.values() for m in res1.monitors] == \
        [m.values() for m in res2.monitors]
    assert np.array_equal(res1.final_state.p, res2.final_state.p)
    assert np.array_equal(res1.final_state.s, res2.final_state.s)


def smooth_run(shape=(16, 16), t_end=0.04, save_every=0.01):
    mesh = build_rect_mesh(shape)
    scheme = ImplicitScheme(mesh, make_model())
    x = mesh.cell_centers[:, 0]
    init = State(p=1.0 - 0.2 * x,
                 s=0.5 + 0.3 * np.cos(np.pi * x))
    cfg = SolverConfig(dt=0.01, t_end=t_end)
    return scheme, run_simulation(scheme, init, cfg, save_every=save_every)


def test_trajectory_snapshots_include_endpoints():
    scheme, res = smooth_run()
    assert res.saved_times[0] == 0.0
    assert res.saved_times[-1] == res.final_time
    assert len(res.saved_times) == len(res.saved_states) == 5


def test_compact_field_formula():
    scheme, res = smooth_run(shape=(4, 4), t_end=0.01, save_every=0.01)
    st = res.final_state
    expect = (scheme.phi * np.asarray(scheme.kernel.rho(st.p)) * st.s
              * np.asarray(scheme.derived.big_B(st.s)))
    assert np.array_equal(compact_field(scheme, st), expect)


def test_space_translate_norm_shrinks_with_shift():
    scheme, res = smooth_run()
    h = 1.0 / 16
    norms = [translate_diagnostics(scheme, res, y=(k * h, 0.0))[0]
             for k in (4, 2, 1)]
    assert norms[0] >= norms[1] >= norms[2] > 0.0


def test_time_translate_norm_is_finite_and_positive():
    scheme, res = smooth_run()
    space, time = translate_diagnostics(scheme, res, y=(1.0 / 16, 0.0),
                                        tau=0.02)
    assert time is not None and np.isfinite(time) and time > 0.0
    assert space > 0.0


def test_translate_diagnostics_input_validation():
    scheme, res = smooth_run(shape=(8, 8), t_end=0.02, save_every=0.01)
    with pytest.raises(ValueError, match="integer"):
        translate_diagnostics(scheme, res, y=(0.3 / 8, 0.0))
    with pytest.raises(ValueError, match="multiple"):
        translate_diagnostics(scheme, res, y=(1.0 / 8, 0.0), tau=0.015)
    with pytest.raises(ValueError, match="components"):
        translate_diagnostics(scheme, res, y=(0.125, 0.0, 0.125))
    with pytest.raises(ValueError, match="span"):
        translate_diagnostics(scheme, res, y=(0.125, 0.0), tau=1.0)
