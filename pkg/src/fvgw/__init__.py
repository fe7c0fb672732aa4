"""Finite-volume simulator for coupled compressible-gas / incompressible-water
flow in porous media, with a verification harness for its discrete structure.

The pieces compose bottom-up:

* :mod:`fvgw.mesh`          admissible orthogonal meshes, discrete calculus
* :mod:`fvgw.physics`       fluid laws, derived functions, hypothesis checks
* :mod:`fvgw.fluxes`        monotone upwind and gravity face fluxes
* :mod:`fvgw.scheme`        implicit finite-volume residual and Jacobians
* :mod:`fvgw.solver`        Newton loop, adaptive time stepping, monitors
* :mod:`fvgw.config`        TOML run configuration
* :mod:`fvgw.convergence`   nested mesh refinement studies
* :mod:`fvgw.verification`  named property-check suites
* :mod:`fvgw.cli`           the ``fvgw`` command line tool
"""

__version__ = "0.1.0"

from .config import ConfigError, build_simulation, load_config, parse_config
from .fluxes import FluxKernel, harmonic_transmissibility
from .mesh import Mesh, build_rect_mesh, check_admissibility, load_mesh, save_mesh
from .physics import (
    ConstantDensity,
    FluidModel,
    LinearDensity,
    LogisticDensity,
    ModelValidationError,
    PolynomialCapillary,
    PolynomialMobility,
    PowerMobility,
    validate_hypotheses,
)
from .scheme import BoundaryData, ImplicitScheme, SourceModel, State, project_initial
from .solver import (
    SimulationAbort,
    SolverConfig,
    StepFailure,
    run_simulation,
    solve_timestep,
    translate_diagnostics,
)
from .verification import run_verification

__all__ = [
    "BoundaryData",
    "ConfigError",
    "ConstantDensity",
    "FluidModel",
    "FluxKernel",
    "ImplicitScheme",
    "LinearDensity",
    "LogisticDensity",
    "Mesh",
    "ModelValidationError",
    "PolynomialCapillary",
    "PolynomialMobility",
    "PowerMobility",
    "SimulationAbort",
    "SolverConfig",
    "SourceModel",
    "State",
    "StepFailure",
    "build_rect_mesh",
    "build_simulation",
    "check_admissibility",
    "harmonic_transmissibility",
    "load_config",
    "load_mesh",
    "parse_config",
    "project_initial",
    "run_simulation",
    "run_verification",
    "save_mesh",
    "solve_timestep",
    "translate_diagnostics",
    "validate_hypotheses",
    "__version__",
]
