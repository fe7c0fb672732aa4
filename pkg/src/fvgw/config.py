"""TOML run configuration: parsing, validation, canonical serialization.

Unknown keys are rejected everywhere so typos fail loudly instead of being
silently ignored.  Spatial fields (initial data, sources, porosity,
permeability) are structured specs, never evaluated expressions:

  constant: value
  linear:   base, gradient (one entry per axis); f = base + gradient . x
  box:      value, bounds (x0, x1, y0, y1[, z0, z1]), outside (default 0)
  cosine:   base, amplitude, axis (default 0), frequency (default 1);
            f = base + amplitude * cos(frequency * pi * x_axis)

Source specs accept the same kinds plus an optional [t_on, t_off] window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .mesh import build_rect_mesh, load_mesh
from .physics import (
    ConstantDensity,
    FluidModel,
    LinearDensity,
    LogisticDensity,
    PolynomialCapillary,
    PolynomialMobility,
    PowerMobility,
)
from .scheme import BoundaryData, ImplicitScheme, SourceModel, project_initial
from .solver import SolverConfig


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configurations."""


_SCHEMA = {
    "mesh": {"nx", "ny", "nz", "extent", "file", "tags"},
    "fluid": {"water_density", "total_mobility_floor", "porosity",
              "permeability", "density", "mobility_gas", "mobility_water",
              "capillary"},
    "initial": {"pressure", "saturation"},
    "time": {"dt", "t_end", "save_every"},
    "solver": {"newton_tol", "newton_max_iter", "max_backtracks", "dt_min",
               "dt_growth", "jacobian", "linear_solver"},
    "sources": {"production", "injection"},
    "gravity": {"vector"},
    "boundary": {"pressure", "saturation"},
    "output": {"directory", "formats"},
}

_LAW_KEYS = {
    ("density", "constant"): {"value"},
    ("density", "linear"): {"value_at_zero", "slope", "valid_range"},
    ("density", "logistic"): {"rho_min", "rho_max", "rate", "p_ref"},
    ("mobility", "power"): {"exponent", "scale", "decreasing"},
    ("mobility", "polynomial"): {"coeffs"},
    ("capillary", "polynomial"): {"coeffs", "epsilon"},
}

_FIELD_KEYS = {
    "constant": {"value"},
    "linear": {"base", "gradient"},
    "box": {"value", "bounds", "outside"},
    "cosine": {"base", "amplitude", "axis", "frequency"},
}


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")


def parse_config(text: str) -> dict:
    """Parse and structurally validate a TOML run configuration."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    _check_keys(raw, set(_SCHEMA), "")
    for section in ("mesh", "fluid", "time", "initial"):
        if section not in raw:
            raise ConfigError(f"missing required section [{section}]")
    for name, table in raw.items():
        _check_keys(table, _SCHEMA[name], name)
    for kind in ("pressure", "saturation"):
        if kind not in raw["initial"]:
            raise ConfigError(f"missing [initial.{kind}]")
    return raw


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- structured field specs --------------------------------------------------------


def _field_spec(spec, dim, where):
    """Turn a spec table (or bare number) into ``f(x) -> (n,)`` values."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        value = float(spec)
        return lambda x: np.full(len(x), value)
    _check_keys(spec, set().union(*_FIELD_KEYS.values()) | {"kind"}, where)
    kind = spec.get("kind")
    if kind not in _FIELD_KEYS:
        raise ConfigError(f"[{where}] has unknown kind {kind!r}")
    _check_keys(spec, _FIELD_KEYS[kind] | {"kind"}, where)

    if kind == "constant":
        value = float(spec["value"])
        return lambda x: np.full(len(x), value)
    if kind == "linear":
        base = float(spec["base"])
        grad = np.asarray(spec["gradient"], dtype=float)
        if grad.shape != (dim,):
            raise ConfigError(f"[{where}] gradient needs {dim} entries")
        return lambda x: base + x @ grad
    if kind == "box":
        value = float(spec["value"])
        outside = float(spec.get("outside", 0.0))
        bounds = np.asarray(spec["bounds"], dtype=float).reshape(dim, 2)

        def box(x):
            inside = np.ones(len(x), dtype=bool)
            for a in range(dim):
                inside &= (x[:, a] >= bounds[a, 0]) & (x[:, a] <= bounds[a, 1])
            return np.where(inside, value, outside)
        return box
    base = float(spec["base"])
    amp = float(spec["amplitude"])
    axis = int(spec.get("axis", 0))
    freq = float(spec.get("frequency", 1.0))
    if not (0 <= axis < dim):
        raise ConfigError(f"[{where}] axis out of range")
    return lambda x: base + amp * np.cos(freq * math.pi * x[:, axis])


def _source_spec(spec, dim, where):
    """Source spec: spatial field times an optional [t_on, t_off] window."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        if spec < 0:
            raise ConfigError(f"[{where}] must be nonnegative")
        return float(spec)
    if not isinstance(spec, dict):
        raise ConfigError(f"[{where}] must be a number or a table")
    spec = dict(spec)
    t_on = spec.pop("t_on", None)
    t_off = spec.pop("t_off", None)
    spatial = _field_spec(spec, dim, where)
    if t_on is None and t_off is None:
        return lambda t, x: spatial(x)
    lo = float(t_on) if t_on is not None else -math.inf
    hi = float(t_off) if t_off is not None else math.inf

    def timed(t, x):
        if lo <= t <= hi:
            return spatial(x)
        return np.zeros(len(x))
    return timed


# -- model/mesh construction --------------------------------------------------------


def _build_density(spec):
    _check_keys(spec, {"law"} | set().union(
        *(v for (g, _), v in _LAW_KEYS.items() if g == "density")),
        "fluid.density")
    law = spec.get("law")
    if law == "constant":
        _check_keys(spec, _LAW_KEYS[("density", "constant")] | {"law"},
                    "fluid.density")
        return ConstantDensity(spec["value"])
    if law == "linear":
        _check_keys(spec, _LAW_KEYS[("density", "linear")] | {"law"},
                    "fluid.density")
        rng = spec.get("valid_range", (0.0, 1.0))
        return LinearDensity(spec["value_at_zero"], spec["slope"],
                             tuple(rng))
    if law == "logistic":
        _check_keys(spec, _LAW_KEYS[("density", "logistic")] | {"law"},
                    "fluid.density")
        return LogisticDensity(spec["rho_min"], spec["rho_max"],
                               spec["rate"], spec.get("p_ref", 0.0))
    raise ConfigError(f"unknown density law {law!r}")


def _build_mobility(spec, where):
    law = spec.get("law")
    if law == "power":
        _check_keys(spec, _LAW_KEYS[("mobility", "power")] | {"law"}, where)
        return PowerMobility(spec["exponent"], spec.get("scale", 1.0),
                             spec.get("decreasing", False))
    if law == "polynomial":
        _check_keys(spec, _LAW_KEYS[("mobility", "polynomial")] | {"law"},
                    where)
        return PolynomialMobility(spec["coeffs"])
    raise ConfigError(f"unknown mobility law {law!r} in [{where}]")


def _build_capillary(spec):
    law = spec.get("law")
    if law == "polynomial":
        _check_keys(spec, _LAW_KEYS[("capillary", "polynomial")] | {"law"},
                    "fluid.capillary")
        return PolynomialCapillary(spec["coeffs"], spec.get("epsilon", 0.0))
    raise ConfigError(f"unknown capillary law {law!r}")


def build_mesh(cfg):
    section = cfg["mesh"]
    if "file" in section:
        if {"nx", "ny", "nz", "extent", "tags"} & set(section):
            raise ConfigError("[mesh] file excludes inline mesh keys")
        return load_mesh(section["file"])
    for key in ("nx", "ny"):
        if key not in section:
            raise ConfigError(f"[mesh] needs {key} (or file)")
    shape = [int(section["nx"]), int(section["ny"])]
    if "nz" in section:
        shape.append(int(section["nz"]))
    extent = section.get("extent")
    tags = section.get("tags")
    return build_rect_mesh(tuple(shape), extent, tags)


def build_model(cfg, mesh):
    section = cfg["fluid"]
    for key in ("density", "mobility_gas", "mobility_water", "capillary"):
        if key not in section:
            raise ConfigError(f"missing [fluid.{key}]")
    porosity = section.get("porosity", 1.0)
    if isinstance(porosity, dict):
        porosity = _field_spec(porosity, mesh.dim,
                               "fluid.porosity")(mesh.cell_centers)
    permeability = section.get("permeability", 1.0)
    if isinstance(permeability, dict):
        permeability = _field_spec(permeability, mesh.dim,
                                   "fluid.permeability")(mesh.cell_centers)
    gravity = None
    if "gravity" in cfg:
        gravity = np.asarray(cfg["gravity"]["vector"], dtype=float)
    return FluidModel(
        density=_build_density(section["density"]),
        mobility_gas=_build_mobility(section["mobility_gas"],
                                     "fluid.mobility_gas"),
        mobility_water=_build_mobility(section["mobility_water"],
                                       "fluid.mobility_water"),
        capillary=_build_capillary(section["capillary"]),
        water_density=section.get("water_density", 1.0),
        total_mobility_floor=section.get("total_mobility_floor", 1.0),
        porosity=porosity,
        permeability=permeability,
        gravity=gravity,
    )


@dataclass
class RunSetup:
    """Everything a run needs, built from one parsed config."""

    mesh: object
    model: object
    scheme: ImplicitScheme
    initial: object
    solver: SolverConfig
    save_every: float
    output_dir: str
    formats: tuple


def build_simulation(cfg) -> RunSetup:
    mesh = build_mesh(cfg)
    model = build_model(cfg, mesh)

    sources = SourceModel()
    if "sources" in cfg:
        sec = cfg["sources"]
        sources = SourceModel(
            production=_source_spec(sec["production"], mesh.dim,
                                    "sources.production")
            if "production" in sec else 0.0,
            injection=_source_spec(sec["injection"], mesh.dim,
                                   "sources.injection")
            if "injection" in sec else 0.0)

    boundary = None
    if "boundary" in cfg:
        sec = cfg["boundary"]
        boundary = BoundaryData(pressure=float(sec.get("pressure", 0.0)),
                                saturation=float(sec.get("saturation", 0.0)))
    if boundary is None and len(mesh.dirichlet_faces):
        raise ConfigError("mesh has water_injection sides: add a [boundary] "
                          "section with pressure and saturation")

    scheme = ImplicitScheme(mesh, model, sources=sources, boundary=boundary)

    init = cfg["initial"]
    initial = project_initial(
        mesh,
        _field_spec(init["pressure"], mesh.dim, "initial.pressure"),
        _field_spec(init["saturation"], mesh.dim, "initial.saturation"))

    time_sec = cfg["time"]
    for key in ("dt", "t_end"):
        if key not in time_sec:
            raise ConfigError(f"[time] needs {key}")
    solver_kwargs = dict(cfg.get("solver", {}))
    try:
        solver = SolverConfig(dt=float(time_sec["dt"]),
                              t_end=float(time_sec["t_end"]),
                              **solver_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [solver]/[time] settings: {exc}") from exc

    save_every = time_sec.get("save_every")
    if save_every is not None:
        save_every = float(save_every)
        if save_every <= 0:
            raise ConfigError("[time] save_every must be positive")

    out = cfg.get("output", {})
    formats = tuple(out.get("formats", ("csv",)))
    for fmt in formats:
        if fmt not in ("csv", "vtk"):
            raise ConfigError(f"unknown output format {fmt!r}")
    return RunSetup(mesh=mesh, model=model, scheme=scheme, initial=initial,
                    solver=solver, save_every=save_every,
                    output_dir=out.get("directory", "out"), formats=formats)


# -- canonical serialization --------------------------------------------------------


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize value of type {type(value).__name__}")


def serialize_config(cfg: dict) -> str:
    """Deterministic TOML for a parsed config: sorted keys, repr floats.

    ``parse_config(serialize_config(c)) == c`` for any valid parsed config.
    """
    lines = []

    def emit(table, prefix):
        plain = {k: v for k, v in sorted(table.items())
                 if not isinstance(v, dict)}
        nested = {k: v for k, v in sorted(table.items())
                  if isinstance(v, dict)}
        if prefix and (plain or not nested):
            lines.append(f"[{prefix}]")
        for key, value in plain.items():
            lines.append(f"{key} = {_format_value(value)}")
        if plain:
            lines.append("")
        for key, value in nested.items():
            emit(value, f"{prefix}.{key}" if prefix else key)
        if prefix and not plain and not nested:
            lines.append("")

    emit(cfg, "")
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines) + "\n"
