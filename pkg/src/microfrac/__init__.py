"""Micromorphic phase-field fracture on linear triangles."""

from .assembly import Assembler, Mode, State, apply_dirichlet, assemble_global, reaction_force
from .config import CaseConfig, default_config, parse_config
from .constitutive import ElasticParams, FractureModel, ModelKind, Softening
from .driver import run_case
from .mesh import Mesh, generate_mesh, read_mesh, write_mesh
from .solver import LinearSolver, SolverConfig, linear_solve, newton_step, run_simulation

__all__ = [
    "Assembler",
    "Mode",
    "State",
    "apply_dirichlet",
    "assemble_global",
    "reaction_force",
    "CaseConfig",
    "default_config",
    "parse_config",
    "ElasticParams",
    "FractureModel",
    "ModelKind",
    "Softening",
    "run_case",
    "Mesh",
    "generate_mesh",
    "read_mesh",
    "write_mesh",
    "LinearSolver",
    "SolverConfig",
    "linear_solve",
    "newton_step",
    "run_simulation",
]

__version__ = "0.1.0"
