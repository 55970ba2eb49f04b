"""Benchmark boundary conditions and problem construction from a config."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import BoundarySpec, CaseConfig, CaseName, ConfigError, Constraint
from .mesh import Mesh, MeshError, generate_mesh, read_mesh
from .solver import Problem

__all__ = ["CASE_BCS", "boundary_spec", "apply_case_bcs", "build_mesh", "build_problem"]

CASE_BCS = {
    CaseName.SENT: BoundarySpec(
        (
            Constraint("bottom", "x", "fixed"),
            Constraint("bottom", "y", "fixed"),
            Constraint("top", "y", "load"),
        ),
        "top", (0.0, 1.0),
    ),
    CaseName.SENS: BoundarySpec(
        (
            Constraint("bottom", "x", "fixed"),
            Constraint("bottom", "y", "fixed"),
            Constraint("left", "y", "fixed"),
            Constraint("right", "y", "fixed"),
            Constraint("top", "y", "fixed"),
            Constraint("top", "x", "load"),
        ),
        "top", (1.0, 0.0),
    ),
    CaseName.LPANEL: BoundarySpec(
        (
            Constraint("fixed_bottom", "x", "fixed"),
            Constraint("fixed_bottom", "y", "fixed"),
            Constraint("load_edge", "y", "load"),
        ),
        "load_edge", (0.0, 1.0),
    ),
    CaseName.TPB: BoundarySpec(
        (
            Constraint("support_left", "x", "fixed"),
            Constraint("support_left", "y", "fixed"),
            Constraint("support_right", "y", "fixed"),
            Constraint("load_point", "y", "load", -1.0),
        ),
        "load_point", (0.0, -1.0),
    ),
}


def boundary_spec(case, bcs: BoundarySpec | None = None) -> BoundarySpec:
    if bcs is not None:
        return bcs
    case = CaseName(case)
    if case is CaseName.CUSTOM:
        raise ConfigError("Custom cases need an explicit bcs block")
    return CASE_BCS[case]


def apply_case_bcs(case, mesh: Mesh, increment: float, bcs: BoundarySpec | None = None):
    """Dirichlet ``(dof, value)`` list of one load step.

    Fixed components get 0, driven components ``scale * increment``.  Where
    a node carries both a fixed and a driven constraint on the same
    component (a corner shared by two edges), the driven one wins.
    """
    spec = boundary_spec(case, bcs)
    values: dict[int, float] = {}
    for c in sorted(spec.constraints, key=lambda c: c.kind == "load"):
        nodes = mesh.node_set(c.node_set)
        comp = 0 if c.component == "x" else 1
        val = 0.0 if c.kind == "fixed" else c.scale * increment
        for n in nodes.tolist():
            values[2 * n + comp] = val
    return sorted(values.items())


def build_mesh(cfg: CaseConfig, base_dir=None) -> Mesh:
    spec = cfg.mesh
    if spec.file is not None:
        path = Path(spec.file)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        mesh = read_mesh(path)
        return mesh.with_thickness(cfg.thickness)
    kwargs = dict(spec.options_dict)
    if spec.refine is not None:
        kwargs["refine"] = spec.refine
    if spec.band is not None:
        kwargs["band"] = spec.band
    kwargs["thickness"] = cfg.thickness
    try:
        return generate_mesh(cfg.case.value, spec.h, **kwargs)
    except TypeError as exc:
        raise ConfigError(f"mesh.options: {exc}") from None


def build_problem(cfg: CaseConfig, mesh: Mesh | None = None, base_dir=None) -> Problem:
    mesh = build_mesh(cfg, base_dir) if mesh is None else mesh
    spec = boundary_spec(cfg.case, cfg.bcs)
    for c in spec.constraints:
        mesh.node_set(c.node_set)
    if mesh.node_set(spec.load_set).size == 0:
        raise MeshError(f"load node set '{spec.load_set}' is empty")
    direction = np.asarray(spec.load_direction, dtype=float)
    if not np.any(direction):
        raise ConfigError("bcs.load_direction must be nonzero")
    # constraint DOFs are fixed for the whole run; only values change per step
    template = apply_case_bcs(cfg.case, mesh, 1.0, spec)
    dofs = np.array([d for d, _ in template], dtype=np.int64)
    unit = np.array([v for _, v in template])

    def constraints(increment: float):
        return list(zip(dofs.tolist(), (unit * increment).tolist()))

    return Problem(mesh, cfg.material.elastic, cfg.material.fracture, constraints,
                   spec.load_set, tuple(direction))
