"""Command line interface: simulate, verify, convergence, check-mesh.

Exit codes: 0 success, 1 violated invariant (verify) or inadmissible mesh,
2 configuration/input errors, 3 runtime aborts.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, build_simulation, load_config, serialize_config
from .convergence import run_convergence
from .mesh import MeshFormatError, check_admissibility, load_mesh
from .output import (
    write_monitors_csv,
    write_run_metadata,
    write_snapshots,
)
from .physics import ModelValidationError, validate_hypotheses
from .solver import SimulationAbort, run_simulation
from .verification import available_suites, run_verification

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_CONFIG_ERRORS = (ConfigError, ModelValidationError, MeshFormatError, OSError)


def _fail(message, code):
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_simulate(args):
    try:
        cfg = load_config(args.config)
        setup = build_simulation(cfg)
    except _CONFIG_ERRORS as exc:
        return _fail(exc, EXIT_CONFIG)

    hyp = validate_hypotheses(setup.model)
    for name in hyp.failed_hard():
        print(f"warning: fluid model violates {name}: "
              f"{hyp.checks[name].note}", file=sys.stderr)

    try:
        result = run_simulation(setup.scheme, setup.initial, setup.solver,
                                save_every=setup.save_every)
    except SimulationAbort as exc:
        return _fail(exc, EXIT_RUNTIME)

    outdir = args.output if args.output else setup.output_dir
    os.makedirs(outdir, exist_ok=True)
    write_monitors_csv(os.path.join(outdir, "monitors.csv"), result.monitors)
    names = write_snapshots(outdir, setup.mesh, result.saved_times,
                            result.saved_states, setup.formats)
    write_run_metadata(
        os.path.join(outdir, "run_meta.json"), setup.model,
        config_text=serialize_config(cfg),
        extra={"saved_times": result.saved_times, "snapshots": names,
               "n_steps": result.n_steps, "n_rejected": result.n_rejected,
               "final_time": result.final_time})

    final = result.final_state
    print(f"steps: {result.n_steps} (rejected {result.n_rejected}), "
          f"t = {result.final_time:g}")
    print(f"saturation range: [{float(final.s.min()):.6g}, "
          f"{float(final.s.max()):.6g}]")
    print(f"output: {outdir}")
    return EXIT_OK


def cmd_verify(args):
    level = "full" if args.full else "quick"
    suites = args.suite if args.suite else None
    try:
        report = run_verification(level=level, suites=suites,
                                  defect=args.inject_defect)
    except ValueError as exc:
        return _fail(exc, EXIT_CONFIG)
    print(report)
    return EXIT_OK if report.passed else EXIT_INVARIANT


def cmd_convergence(args):
    if args.levels < 2:
        return _fail("--levels must be at least 2", EXIT_CONFIG)
    try:
        cfg = load_config(args.config)
    except _CONFIG_ERRORS as exc:
        return _fail(exc, EXIT_CONFIG)
    try:
        table = run_convergence(cfg, levels=args.levels)
    except _CONFIG_ERRORS as exc:
        return _fail(exc, EXIT_CONFIG)
    except SimulationAbort as exc:
        return _fail(exc, EXIT_RUNTIME)
    print(table)
    out = args.output
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(table.to_csv())
    print(f"table written to {out}")
    return EXIT_OK


def cmd_check_mesh(args):
    try:
        mesh = load_mesh(args.file)
    except _CONFIG_ERRORS as exc:
        return _fail(exc, EXIT_CONFIG)
    report = check_admissibility(mesh)
    print(f"dim: {mesh.dim}")
    print(f"cells: {mesh.n_cells}, interior faces: {mesh.n_faces}, "
          f"boundary faces: {mesh.n_bfaces}")
    print(f"h: {mesh.h:g}, domain volume: {mesh.domain_volume:g}")
    print(f"orthogonality defect: {report.orthogonality_defect:.3e}")
    print(f"regularity: {report.regularity:.6g}")
    print("admissible: " + ("yes" if report.passed else "NO"))
    return EXIT_OK if report.passed else EXIT_INVARIANT


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fvgw",
        description="Finite-volume simulator for coupled compressible-gas / "
                    "incompressible-water flow in porous media.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a configured simulation")
    p_sim.add_argument("config", help="TOML configuration file")
    p_sim.add_argument("--output", help="override the output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="run the property suites")
    group = p_ver.add_mutually_exclusive_group()
    group.add_argument("--quick", action="store_true",
                       help="fixed seeds, small samples (default)")
    group.add_argument("--full", action="store_true",
                       help="extended sampling")
    p_ver.add_argument("--suite", action="append",
                       help="run only this suite (repeatable); one of: "
                            + ", ".join(available_suites()))
    p_ver.add_argument("--inject-defect", help=argparse.SUPPRESS)
    p_ver.set_defaults(func=cmd_verify)

    p_con = sub.add_parser("convergence", help="nested-refinement study")
    p_con.add_argument("config", help="TOML configuration file")
    p_con.add_argument("--levels", type=int, default=3,
                       help="number of refinement levels (default 3)")
    p_con.add_argument("--output", default="convergence.csv",
                       help="CSV path for the error table")
    p_con.set_defaults(func=cmd_convergence)

    p_mesh = sub.add_parser("check-mesh", help="validate a mesh file")
    p_mesh.add_argument("file", help="plain-text mesh file")
    p_mesh.set_defaults(func=cmd_check_mesh)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
