"""Run a configured case end to end and write its outputs."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

from .assembly import State
from .cases import build_problem
from .config import CaseConfig, dump_config
from .mesh import Mesh
from .output import write_field_snapshot, write_lodi_csv
from .solver import SimulationError, StepRecord, run_simulation

__all__ = ["RunResult", "run_case", "progress_line"]


@dataclass
class RunResult:
    series: list[StepRecord]
    state: State
    mesh: Mesh
    out_dir: Path | None


def progress_line(rec: StepRecord) -> str:
    return (f"step={rec.step} iters={rec.iterations} ratio={rec.residual_ratio:.3e} "
            f"u={rec.displacement:.6e} P={rec.load / 1000.0:.6e}")


def run_case(cfg: CaseConfig, out_dir=None, mesh: Mesh | None = None, stream=sys.stdout,
             base_dir=None) -> RunResult:
    """Execute ``cfg``.  With ``out_dir`` the config echo, ``lodi.csv`` and
    VTK snapshots are written there; the CSV is also written when a step
    fails, and the failure is re-raised.
    """
    problem = build_problem(cfg, mesh, base_dir)
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        dump_config(cfg, out / "config.json")
    every = cfg.output.snapshot_every

    def observer(rec, state):
        if stream is not None:
            print(progress_line(rec), file=stream, flush=True)
        if out is not None and every and rec.step % every == 0:
            write_field_snapshot(problem.mesh, state, out / f"field_{rec.step:05d}.vtk")

    try:
        series, state = run_simulation(problem, cfg.solver, observer)
    except SimulationError as exc:
        if out is not None and exc.series:
            write_lodi_csv(exc.series, out / "lodi.csv")
        raise
    if out is not None:
        write_lodi_csv(series, out / "lodi.csv")
        write_field_snapshot(problem.mesh, state, out / "field_final.vtk")
    return RunResult(series, state, problem.mesh, out)
