"""Monolithic Newton solver, load stepping and the linear-solve layer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    Assembler,
    ConstrainedSystem,
    Mode,
    State,
    apply_dirichlet,
    reaction_force,
)
from .constitutive import ElasticParams, FractureModel
from .local_pf import extrapolate_d
from .mesh import Mesh

__all__ = [
    "LinearSolver",
    "GmresConfig",
    "SolverConfig",
    "SolverError",
    "LinearSolveError",
    "NewtonDivergence",
    "SimulationError",
    "StepRecord",
    "NewtonLog",
    "Problem",
    "linear_solve",
    "newton_step",
    "run_simulation",
    "expand_schedule",
    "step_ratio",
]

# ||r_1|| at or below this counts as an already-converged step
RESIDUAL_FLOOR = 1e-10
SINGULAR_PIVOT = 1e-13


class SolverError(RuntimeError):
    pass


class LinearSolveError(SolverError):
    pass


class NewtonDivergence(SolverError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class SimulationError(SolverError):
    """A step failed; ``series`` holds the steps accepted before it."""

    def __init__(self, message, series, cause=None):
        super().__init__(message)
        self.series = series
        self.cause = cause


class LinearSolver(str, Enum):
    GMRES = "IterativeGMRES"
    DIRECT = "Direct"


@dataclass(frozen=True)
class GmresConfig:
    restart: int = 50
    maxiter: int = 200
    rtol: float = 1e-12
    drop_tol: float = 1e-6
    fill_factor: float = 20.0

    def __post_init__(self):
        if self.restart < 1 or self.maxiter < 1:
            raise ValueError("gmres restart and maxiter must be positive")
        if not 0 < self.rtol < 1:
            raise ValueError(f"gmres rtol must lie in (0, 1), got {self.rtol}")
        if self.drop_tol < 0 or self.fill_factor < 1:
            raise ValueError("invalid incomplete-LU fill policy")


def _check_schedule(schedule):
    out = []
    for entry in schedule:
        count, inc = entry
        if int(count) != count or count < 1:
            raise ValueError(f"schedule step count must be a positive integer, got {count}")
        if not math.isfinite(inc):
            raise ValueError(f"schedule increment must be finite, got {inc}")
        out.append((int(count), float(inc)))
    if not out:
        raise ValueError("schedule is empty")
    return tuple(out)


@dataclass(frozen=True)
class SolverConfig:
    """Newton and linear-solver settings plus the load schedule.

    ``schedule`` is a sequence of ``(count, increment)`` pairs.  Zero and
    negative increments are accepted (hold and unload phases).
    ``stop_load_fraction`` ends a run early once the load has dropped below
    that fraction of the peak reached so far.  ``residual_stiffness`` is a
    small constant added to the degradation function in the momentum
    balance so that fully broken elements keep the system nonsingular.
    """

    beta: float
    schedule: tuple = ((1, 1e-4),)
    tol: float = 1e-3
    max_newton_iters: int = 25
    mode: Mode = Mode.PROBLEM5
    linear_solver: LinearSolver = LinearSolver.GMRES
    gmres: GmresConfig = field(default_factory=GmresConfig)
    stop_load_fraction: float | None = None
    residual_stiffness: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "linear_solver", LinearSolver(self.linear_solver))
        object.__setattr__(self, "schedule", _check_schedule(self.schedule))
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")
        if self.stop_load_fraction is not None and not 0 <= self.stop_load_fraction < 1:
            raise ValueError("stop_load_fraction must lie in [0, 1)")
        if not 0 <= self.residual_stiffness < 1:
            raise ValueError("residual_stiffness must lie in [0, 1)")

    def alpha(self, model: FractureModel) -> float:
        return self.beta * model.Gc / model.l


def expand_schedule(schedule) -> np.ndarray:
    """Per-step increments of a ``(count, increment)`` schedule."""
    return np.concatenate([np.full(c, inc) for c, inc in _check_schedule(schedule)])


def step_ratio(previous: float, current: float) -> float:
    """Extrapolation ratio ``|du_{n+1}| / |du_n|``; zero without a usable previous step."""
    if previous == 0.0:
        return 0.0
    return abs(current) / abs(previous)


# -- linear solves --------------------------------------------------------


def _direct(A, b):
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise LinearSolveError(f"direct factorisation failed: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and (piv.min() <= SINGULAR_PIVOT * piv.max()):
        raise LinearSolveError(
            f"matrix is numerically singular (pivot ratio {piv.min() / piv.max():.2e}); "
            "check that the constraints remove all rigid-body modes"
        )
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("direct solve produced non-finite values")
    return x


def _gmres(A, b, cfg: GmresConfig):
    A = A.tocsc()
    try:
        ilu = spla.spilu(A, drop_tol=cfg.drop_tol, fill_factor=cfg.fill_factor)
    except RuntimeError as exc:
        raise LinearSolveError(f"incomplete LU failed: {exc}") from exc
    M = spla.LinearOperator(A.shape, ilu.solve)
    x, info = spla.gmres(A, b, M=M, rtol=cfg.rtol, atol=0.0, restart=cfg.restart, maxiter=cfg.maxiter)
    if info != 0 or not np.all(np.isfinite(x)):
        raise LinearSolveError(f"GMRES did not converge (info={info})")
    bn = np.linalg.norm(b)
    if bn > 0 and np.linalg.norm(A @ x - b) > max(cfg.rtol, 1e-8) * bn * 10:
        raise LinearSolveError("GMRES returned an inaccurate solution")
    return x


def linear_solve(system: ConstrainedSystem | sp.spmatrix, config: SolverConfig | None = None,
                 b=None, method: LinearSolver | None = None) -> np.ndarray:
    """Solve the constrained Newton system.

    GMRES with an incomplete-LU preconditioner is retried once with a
    direct factorisation when it fails.
    """
    if isinstance(system, ConstrainedSystem):
        A, rhs = system.A, system.b
    else:
        A, rhs = sp.csr_matrix(system), np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != rhs.shape[0]:
        raise LinearSolveError(f"shape mismatch: matrix {A.shape}, rhs {rhs.shape}")
    method = LinearSolver(method) if method is not None else (
        config.linear_solver if config is not None else LinearSolver.DIRECT
    )
    if not np.any(rhs):
        return np.zeros_like(rhs)
    if method is LinearSolver.DIRECT:
        return _direct(A, rhs)
    gcfg = config.gmres if config is not None else GmresConfig()
    try:
        return _gmres(A, rhs, gcfg)
    except LinearSolveError as first:
        try:
            return _direct(A, rhs)
        except LinearSolveError as second:
            raise LinearSolveError(f"{first}; direct retry failed: {second}") from second


# -- Newton ---------------------------------------------------------------


@dataclass
class Problem:
    """A discretised boundary-value problem ready for load stepping.

    ``constraints(increment)`` returns the ``(dof, value)`` list of one
    step; the reaction is measured on ``load_set`` along ``load_direction``.
    """

    mesh: Mesh
    elas: ElasticParams
    model: FractureModel
    constraints: Callable[[float], Sequence[tuple[int, float]]]
    load_set: str
    load_direction: tuple[float, float]

    def assembler(self, config: SolverConfig, threads=None) -> Assembler:
        return Assembler(self.mesh, self.elas, self.model, config.alpha(self.model), config.mode, threads,
                         config.residual_stiffness)


@dataclass
class NewtonLog:
    iterations: int
    residual_ratio: float
    history: list[float]


@dataclass(frozen=True)
class StepRecord:
    step: int
    displacement: float
    load: float
    iterations: int
    residual_ratio: float


def newton_step(state: State, assembler: Assembler, constraints, config: SolverConfig,
                increment: float = 0.0, d_hat=None):
    """Advance one load step.

    ``constraints`` holds the prescribed increments of this step; they are
    imposed in the first iteration only.  Returns the committed new state
    and a :class:`NewtonLog`.  The iteration count is the number of linear
    solves, reported as 1 for a step that is converged on entry: either its
    initial residual vanishes, or it prescribes no increment and the state
    still meets the criterion of the step that produced it.
    """
    state.check(assembler.mesh)
    n2 = 2 * assembler.mesh.n_nodes
    x = np.concatenate([state.u, state.d])
    zero = [(dof, 0.0) for dof, _ in constraints]
    hold = all(v == 0.0 for _, v in constraints)
    r1 = None
    history = []
    solves = 0
    while True:
        system = assembler.assemble(x[:n2], x[n2:], state.phi_old, d_hat)
        cs = apply_dirichlet(system, constraints if solves == 0 else zero)
        norm = cs.free_norm()
        if not math.isfinite(norm):
            raise NewtonDivergence("residual became non-finite", history)
        if r1 is None:
            r1 = norm
            ratio = 0.0 if norm <= RESIDUAL_FLOOR else 1.0
            if hold and state.reference_norm > 0 and norm < config.tol * state.reference_norm:
                r1 = state.reference_norm
                ratio = norm / r1
                history.append(ratio)
                break
        else:
            ratio = norm / r1
        history.append(ratio)
        if r1 <= RESIDUAL_FLOOR or (solves > 0 and ratio < config.tol):
            break
        if solves >= config.max_newton_iters:
            raise NewtonDivergence(
                f"no convergence after {solves} iterations "
                f"(ratio {ratio:.3e}, tol {config.tol:.1e}, ||r_1|| {r1:.3e})",
                history,
            )
        x += linear_solve(cs, config)
        solves += 1

    new = state.copy()
    new.u = x[:n2].copy()
    new.d = x[n2:].copy()
    new.d_prev = state.d.copy()
    new.phi_old = system.points.phi.copy()
    new.phi = system.points.phi.copy()
    new.psi_plus = system.points.psi_plus.copy()
    new.f_int = system.f_int
    new.time_step = state.time_step + 1
    new.du_applied = state.du_applied + increment
    new.last_increment = increment
    new.reference_norm = r1
    return new, NewtonLog(max(solves, 1), ratio, history)


def run_simulation(problem: Problem, config: SolverConfig, observer=None, state: State | None = None,
                   threads=None):
    """Run the full schedule.

    ``observer(record, state)`` is called after every accepted step.
    Returns ``(series, final_state)``.  A failing step raises
    :class:`SimulationError` carrying the partial series.
    """
    assembler = problem.assembler(config, threads)
    state = State.initial(problem.mesh) if state is None else state
    series: list[StepRecord] = []
    peak = 0.0
    for inc in expand_schedule(config.schedule):
        d_hat = None
        if config.mode is Mode.PROBLEM5:
            ratio = step_ratio(state.last_increment, inc)
            d_prev = state.d if state.d_prev is None else state.d_prev
            d_hat = extrapolate_d(d_prev, state.d, ratio)
        try:
            state, log = newton_step(state, assembler, problem.constraints(inc), config, inc, d_hat)
        except (SolverError, RuntimeError, ValueError) as exc:
            raise SimulationError(f"step {state.time_step + 1} failed: {exc}", series, exc) from exc
        load = reaction_force(problem.mesh, state, problem.load_set, problem.load_direction)
        rec = StepRecord(state.time_step, state.du_applied, load, log.iterations, log.residual_ratio)
        series.append(rec)
        if observer is not None:
            observer(rec, state)
        peak = max(peak, load)
        if config.stop_load_fraction is not None and peak > 0 and load < config.stop_load_fraction * peak:
            break
    return series, state


def with_overrides(config: SolverConfig, **kw) -> SolverConfig:
    return replace(config, **kw)
