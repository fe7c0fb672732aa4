"""Time integration: damped Newton per implicit step, dt fallback, monitors.

Each accepted step appends one :class:`MonitorRecord` mirroring the discrete
energy estimates: the gas energy combines sum |K| s_K H(p_K) with the
accumulated pressure-gradient dissipation weighted by c1 = m0 * rho_min, the
water energy combines sum |K| B(s_K) with half the accumulated capillary
dissipation.  Saturation is never clipped inside Newton; the extended
mobilities and beta handle transient excursions outside [0, 1], and the
converged states are only checked by the tests, preserving the structure of
the discrete maximum principle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse.linalg as spla

from .scheme import AssemblyError, ImplicitScheme, State


class StepFailure(RuntimeError):
    """One implicit step could not be solved; the caller halves dt."""


class SimulationAbort(RuntimeError):
    """dt fell below the configured floor; the run cannot continue."""


@dataclass
class SolverConfig:
    """Time stepping and Newton parameters.

    dt is the initial (and maximal) step; after an easy step the step grows
    by ``dt_growth`` but never beyond dt, and on failure it halves down to
    ``dt_min`` before the run aborts.
    """

    dt: float
    t_end: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    max_backtracks: int = 8
    dt_min: float = None
    dt_growth: float = 1.2
    jacobian: str = "analytic"
    linear_solver: str = "direct"

    def __post_init__(self):
        if self.dt_min is None:
            self.dt_min = 1e-6 * self.dt
        if min(self.dt, self.t_end, self.newton_tol, self.dt_min,
               self.dt_growth) <= 0:
            raise ValueError("all solver parameters must be positive")
        if self.newton_max_iter < 1 or self.max_backtracks < 0:
            raise ValueError("iteration counts out of range")
        if self.dt_min > self.dt:
            raise ValueError("dt_min must not exceed the initial dt")
        if self.jacobian not in ("analytic", "fd"):
            raise ValueError(f"unknown jacobian option {self.jacobian!r}")
        if self.linear_solver not in ("direct", "iterative"):
            raise ValueError(
                f"unknown linear solver {self.linear_solver!r}")


@dataclass
class NewtonStats:
    iterations: int
    converged: bool
    residual_norm: float
    backtracks: int = 0
    history: list = field(default_factory=list)


@dataclass
class MonitorRecord:
    """One accepted step; field order matches the monitor CSV header."""

    step: int
    time: float
    dt: float
    newton_iters: int
    min_s: float
    max_s: float
    gas_energy: float
    water_energy: float
    water_mass_defect: float

    HEADER = "step,time,dt,newton_iters,min_s,max_s,gas_energy,water_energy,water_mass_defect"

    def values(self):
        return [getattr(self, f.name) for f in fields(self)]


@dataclass
class SimulationResult:
    final_state: State
    final_time: float
    monitors: list
    saved_times: list
    saved_states: list
    n_rejected: int

    @property
    def n_steps(self):
        return len(self.monitors)


def _solve_linear(jac, rhs, method):
    mat = jac.tocsc()
    if method == "direct":
        try:
            return spla.splu(mat).solve(rhs)
        except RuntimeError as exc:
            raise StepFailure(f"sparse factorization failed: {exc}") from exc
    try:
        ilu = spla.spilu(mat, drop_tol=1e-8, fill_factor=20.0)
    except RuntimeError as exc:
        raise StepFailure(f"incomplete factorization failed: {exc}") from exc
    precond = spla.LinearOperator(mat.shape, ilu.solve)
    x, info = spla.gmres(mat, rhs, M=precond, rtol=1e-12, atol=0.0,
                         restart=50, maxiter=200)
    if info != 0:
        raise StepFailure(f"gmres did not converge (info={info})")
    return x


def solve_timestep(scheme: ImplicitScheme, state_old: State, dt,
                   t_old=0.0, config: SolverConfig = None,
                   initial_guess: State = None):
    """One implicit step by damped Newton from ``state_old``.

    Returns (state_new, NewtonStats); raises :class:`StepFailure` when the
    line search stalls or the iteration budget is exhausted.  A stall with
    the residual already within ten times the tolerance counts as converged
    (the evaluation itself carries rounding noise at that level near
    pressure equilibria).
    """
    if config is None:
        config = SolverConfig(dt=dt, t_end=dt)
    assemble = scheme.assemble_residual
    jac_fn = (scheme.assemble_jacobian_analytic if config.jacobian == "analytic"
              else scheme.assemble_jacobian_fd)

    state = (initial_guess if initial_guess is not None else state_old).copy()
    res = assemble(state_old, state, dt, t_old)
    norm = res.inf_norm()
    history = [norm]
    backtracks = 0
    if norm <= config.newton_tol:
        return state, NewtonStats(0, True, norm, 0, history)

    for it in range(1, config.newton_max_iter + 1):
        jac = jac_fn(state_old, state, dt, t_old)
        delta = _solve_linear(jac, -res.vector(), config.linear_solver)
        if not np.all(np.isfinite(delta)):
            raise StepFailure("Newton update is non-finite")
        u = state.vector()
        lam = 1.0
        accepted = False
        for _ in range(config.max_backtracks + 1):
            trial = State.from_vector(u + lam * delta)
            try:
                tres = assemble(state_old, trial, dt, t_old)
            except AssemblyError:
                lam *= 0.5
                backtracks += 1
                continue
            tnorm = tres.inf_norm()
            if tnorm < norm or tnorm <= config.newton_tol:
                accepted = True
                break
            lam *= 0.5
            backtracks += 1
        if not accepted:
            if norm <= 10.0 * config.newton_tol:
                # The line search hit the rounding floor of the residual
                # evaluation; within a decade of tol that is converged.
                return state, NewtonStats(it - 1, True, norm, backtracks,
                                          history)
            raise StepFailure(
                f"line search stalled at Newton iteration {it} "
                f"(residual {norm:.3e})")
        state, res, norm = trial, tres, tnorm
        history.append(norm)
        if norm <= config.newton_tol:
            return state, NewtonStats(it, True, norm, backtracks, history)
    if norm <= 10.0 * config.newton_tol:
        return state, NewtonStats(config.newton_max_iter, True, norm,
                                  backtracks, history)
    raise StepFailure(
        f"Newton did not reach tol {config.newton_tol:g} in "
        f"{config.newton_max_iter} iterations (residual {norm:.3e})")


def run_simulation(scheme: ImplicitScheme, initial_state: State,
                   config: SolverConfig, save_every=None) -> SimulationResult:
    """Advance from t = 0 to t_end, collecting monitors every accepted step.

    The last step is clipped to land on t_end exactly.  On StepFailure the
    nominal dt halves (the step is rejected) and regrows by dt_growth after a
    success, capped at the initial dt.  ``save_every`` adds snapshots of the
    state to the trajectory at (multiples of) that time interval; the initial
    and final states are always included.
    """
    model = scheme.model
    c1 = model.total_mobility_floor * model.density.rho_min
    vol = scheme.mesh.cell_volumes
    derived = scheme.derived

    t = 0.0
    nominal_dt = config.dt
    state = initial_state.copy()
    monitors = []
    saved_times = [0.0]
    saved_states = [state.copy()]
    next_save = save_every if save_every is not None else None
    step = 0
    n_rejected = 0
    acc_press = 0.0
    acc_cap = 0.0
    eps = 1e-12 * max(1.0, config.t_end)

    while t < config.t_end - eps:
        clipped = nominal_dt >= config.t_end - t - eps
        dt_try = config.t_end - t if clipped else nominal_dt
        try:
            new_state, stats = solve_timestep(scheme, state, dt_try, t, config)
        except StepFailure:
            n_rejected += 1
            nominal_dt *= 0.5
            if nominal_dt < config.dt_min:
                raise SimulationAbort(
                    f"dt fell below dt_min = {config.dt_min:g} at t = {t:g} "
                    f"after {n_rejected} rejected steps")
            continue

        step += 1
        t_new = config.t_end if clipped else t + dt_try
        press, cap = scheme.dissipation_terms(new_state)
        acc_press += dt_try * press
        acc_cap += dt_try * cap
        gas_energy = float(np.sum(
            vol * new_state.s * np.asarray(derived.big_H(new_state.p)))) \
            + c1 * acc_press
        water_energy = float(np.sum(
            vol * np.asarray(derived.big_B(new_state.s)))) + 0.5 * acc_cap
        defect = scheme.water_mass_balance(state, new_state, dt_try, t)
        monitors.append(MonitorRecord(
            step=step, time=t_new, dt=dt_try,
            newton_iters=stats.iterations,
            min_s=float(np.min(new_state.s)),
            max_s=float(np.max(new_state.s)),
            gas_energy=gas_energy, water_energy=water_energy,
            water_mass_defect=defect))
        state = new_state
        t = t_new
        if not clipped:
            nominal_dt = min(nominal_dt * config.dt_growth, config.dt)
        if next_save is not None and t >= next_save - eps:
            saved_times.append(t)
            saved_states.append(state.copy())
            while next_save <= t + eps:
                next_save += save_every

    if saved_times[-1] != t:
        saved_times.append(t)
        saved_states.append(state.copy())
    return SimulationResult(final_state=state, final_time=t,
                            monitors=monitors, saved_times=saved_times,
                            saved_states=saved_states, n_rejected=n_rejected)


def compact_field(scheme: ImplicitScheme, state: State) -> np.ndarray:
    """The compactness quantity U = phi rho(p) s B(s), per cell."""
    rho = np.asarray(scheme.kernel.rho(state.p))
    big_b = np.asarray(scheme.derived.big_B(state.s))
    return scheme.phi * rho * state.s * big_b


def translate_diagnostics(scheme: ImplicitScheme, result: SimulationResult,
                          y, tau=None):
    """Squared-integral translate norms of U = phi rho(p) s B(s).

    ``y`` is a spatial shift (scalar = x axis, or one entry per axis) that
    must be an integer number of cells on the structured mesh; ``tau`` must
    be a multiple of the uniform snapshot interval.  Returns
    (space_norm, time_norm), each the square root of the integral of
    |U(t, x + shift) - U(t, x)|^2 over the overlapping cells and snapshots;
    the time norm is None when tau is None.
    """
    mesh = scheme.mesh
    info = mesh.structure
    if info is None:
        raise ValueError("translate diagnostics need a structured mesh")
    if len(result.saved_times) < 2:
        raise ValueError("need at least two snapshots")
    times = np.asarray(result.saved_times)
    steps = np.diff(times)
    dt_save = float(steps[0])
    if np.max(np.abs(steps - dt_save)) > 1e-9 * max(dt_save, 1.0):
        raise ValueError("snapshots are not uniformly spaced in time")

    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size == 1 and mesh.dim > 1:
        y = np.concatenate([y, np.zeros(mesh.dim - 1)])
    if y.shape != (mesh.dim,):
        raise ValueError(f"shift must have {mesh.dim} components")
    cells = y / info.spacing
    shift = np.rint(cells).astype(int)
    if np.max(np.abs(cells - shift)) > 1e-9:
        raise ValueError("shift is not an integer number of cells")

    shape = tuple(info.shape)
    vol = float(mesh.cell_volumes[0])

    def grid(values):
        return values.reshape(shape, order="F")

    src = tuple(slice(None, -k) if k > 0 else slice(-k, None)
                for k in shift)
    dst = tuple(slice(k, None) if k > 0 else slice(None, k or None)
                for k in shift)

    fields_u = [compact_field(scheme, st) for st in result.saved_states]
    space_sq = 0.0
    for u in fields_u:
        g = grid(u)
        diff = g[dst] - g[src]
        space_sq += dt_save * vol * float(np.sum(diff ** 2))
    space_norm = float(np.sqrt(space_sq))

    time_norm = None
    if tau is not None:
        m = tau / dt_save
        m_int = int(round(m))
        if abs(m - m_int) > 1e-9 or m_int < 1:
            raise ValueError("tau must be a positive multiple of the "
                             "snapshot interval")
        if m_int >= len(fields_u):
            raise ValueError("tau exceeds the trajectory span")
        time_sq = 0.0
        for n in range(len(fields_u) - m_int):
            diff = fields_u[n + m_int] - fields_u[n]
            time_sq += dt_save * vol * float(np.sum(diff ** 2))
        time_norm = float(np.sqrt(time_sq))
    return space_norm, time_norm
