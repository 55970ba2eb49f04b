"""Command line entry point ``microfrac``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .assembly import Mode
from .config import ConfigError, parse_config
from .constitutive import ConstitutiveError
from .driver import run_case
from .local_pf import LocalSolveError
from .mesh import MeshError, generate_mesh, write_mesh
from .output import OutputError
from .solver import LinearSolveError, LinearSolver, NewtonDivergence, SimulationError

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MESH = 4
EXIT_NEWTON = 5
EXIT_LINEAR = 6
EXIT_LOCAL = 7
EXIT_IO = 8
EXIT_VERIFY = 9


def _build_parser():
    p = argparse.ArgumentParser(prog="microfrac", description="Micromorphic phase-field fracture solver")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a case from a JSON config")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    run.add_argument("--mode", choices=[m.value for m in Mode])
    run.add_argument("--beta", type=float)
    run.add_argument("--mesh-h", type=float, dest="mesh_h")
    run.add_argument("--direct", action="store_true", help="use the direct sparse solver")

    mesh = sub.add_parser("mesh", help="generate a benchmark mesh file")
    mesh.add_argument("case", choices=["SENT", "SENS", "LPanel", "TPB"])
    mesh.add_argument("--h", type=float, required=True)
    mesh.add_argument("--out", type=Path, required=True)

    sub.add_parser("verify", help="run the built-in oracle checks")
    return p


def _run(args) -> int:
    cfg = parse_config(args.config)
    solver = cfg.solver
    if args.mode:
        solver = dataclasses.replace(solver, mode=Mode(args.mode))
    if args.beta is not None:
        if not args.beta > 0:
            raise ConfigError(f"--beta must be positive, got {args.beta}")
        solver = dataclasses.replace(solver, beta=args.beta)
        cfg = dataclasses.replace(cfg, beta=args.beta)
    if args.direct:
        solver = dataclasses.replace(solver, linear_solver=LinearSolver.DIRECT)
    mesh_spec = cfg.mesh
    if args.mesh_h is not None:
        if mesh_spec.file is not None:
            raise ConfigError("--mesh-h cannot be combined with mesh.file")
        if not args.mesh_h > 0:
            raise ConfigError(f"--mesh-h must be positive, got {args.mesh_h}")
        mesh_spec = dataclasses.replace(mesh_spec, h=args.mesh_h)
    cfg = dataclasses.replace(cfg, solver=solver, mesh=mesh_spec)
    out = args.out if args.out is not None else Path(cfg.output.directory)
    echo = f"alpha={cfg.alpha:.6g}"
    if cfg.a1 is not None:
        echo += f" a1={cfg.a1:.4f}"
    print(echo, flush=True)
    result = run_case(cfg, out, base_dir=args.config.parent)
    print(f"done: {len(result.series)} steps, output in {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "mesh":
            mesh = generate_mesh(args.case, args.h)
            write_mesh(mesh, args.out)
            print(f"{args.case}: {mesh.n_nodes} nodes, {mesh.n_elements} elements -> {args.out}")
            return EXIT_OK
        from .verify import run_checks

        return EXIT_OK if run_checks(sys.stdout) else EXIT_VERIFY
    except (ConfigError, ConstitutiveError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except SimulationError as exc:
        cause = exc.cause
        print(f"simulation failed: {exc} ({len(exc.series)} steps saved)", file=sys.stderr)
        if isinstance(cause, LinearSolveError):
            return EXIT_LINEAR
        if isinstance(cause, LocalSolveError):
            return EXIT_LOCAL
        if isinstance(cause, NewtonDivergence):
            return EXIT_NEWTON
        return EXIT_UNEXPECTED
    except (OutputError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
