"""Case configuration: JSON schema, validation and lossless round trip.

Example::

    {
      "case": "SENT",
      "mesh": {"h": 0.02, "refine": 4, "band": [0.4, 0.6]},
      "material": {"E0": 210000.0, "nu": 0.3, "Gc": 2.7, "l": 0.015, "model": "AT2"},
      "beta": 250.0,
      "thickness": 1.0,
      "schedule": [[55, 1e-4], [1000, 1e-6]],
      "solver": {"tol": 1e-3, "mode": "problem5", "linear_solver": "IterativeGMRES"},
      "output": {"directory": "out", "snapshot_every": 50}
    }

``mesh`` either names generator parameters (``h`` plus optional ``refine``,
``band`` and case-specific ``options``) or a mesh ``file``.  Custom cases
must give a mesh file and a ``bcs`` block.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .assembly import Mode
from .constitutive import ConstitutiveError, ElasticParams, FractureModel, ModelKind, Softening
from .solver import GmresConfig, LinearSolver, SolverConfig

__all__ = [
    "CaseName",
    "ConfigError",
    "MeshSpec",
    "MaterialSpec",
    "BoundarySpec",
    "OutputSpec",
    "CaseConfig",
    "parse_config",
    "config_from_dict",
    "config_to_dict",
    "default_config",
    "dump_config",
]


class ConfigError(ValueError):
    pass


class CaseName(str, Enum):
    SENT = "SENT"
    SENS = "SENS"
    LPANEL = "LPanel"
    TPB = "TPB"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class MeshSpec:
    h: float | None = None
    refine: int | None = None
    band: tuple[float, float] | None = None
    options: tuple = ()  # sorted (key, value) pairs forwarded to the generator
    file: str | None = None

    @property
    def options_dict(self) -> dict:
        return {k: (tuple(v) if isinstance(v, list) else v) for k, v in self.options}


@dataclass(frozen=True)
class MaterialSpec:
    E0: float
    nu: float
    Gc: float
    l: float
    model: ModelKind
    softening: Softening | None = None
    ft: float | None = None

    @property
    def elastic(self) -> ElasticParams:
        return ElasticParams(self.E0, self.nu)

    @property
    def fracture(self) -> FractureModel:
        if self.model is ModelKind.QUASI_BRITTLE:
            return FractureModel.quasi_brittle(self.Gc, self.l, self.ft, self.elastic, self.softening)
        return FractureModel.brittle(self.model, self.Gc, self.l)


@dataclass(frozen=True)
class Constraint:
    node_set: str
    component: str  # "x" or "y"
    kind: str  # "fixed" or "load"
    scale: float = 1.0


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet table: each entry fixes or drives one component of a node set.

    Driven components receive ``scale * increment``; the reaction is taken
    on ``load_set`` along ``load_direction``.
    """

    constraints: tuple[Constraint, ...]
    load_set: str
    load_direction: tuple[float, float]


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    snapshot_every: int = 0  # 0: final snapshot only


@dataclass(frozen=True)
class CaseConfig:
    case: CaseName
    mesh: MeshSpec
    material: MaterialSpec
    beta: float
    thickness: float
    schedule: tuple
    solver: SolverConfig
    output: OutputSpec = field(default_factory=OutputSpec)
    bcs: BoundarySpec | None = None

    @property
    def alpha(self) -> float:
        return self.beta * self.material.Gc / self.material.l

    @property
    def a1(self) -> float | None:
        if self.material.model is ModelKind.QUASI_BRITTLE:
            return self.material.fracture.a1
        return None


# -- parsing helpers -----------------------------------------------------


def _reject_unknown(obj: dict, allowed, path: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key {where}{extra[0]}")


def _get(obj: dict, key: str, path: str, default=..., kind=float, positive=False):
    full = f"{path}.{key}" if path else key
    if key not in obj or obj[key] is None:
        if default is ...:
            raise ConfigError(f"missing required key {full}")
        return default
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{full}: expected a finite number, got {value!r}")
        value = float(value)
        if positive and not value > 0:
            raise ConfigError(f"{full}: must be positive, got {value}")
    elif kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{full}: expected an integer, got {value!r}")
        if positive and value < 1:
            raise ConfigError(f"{full}: must be positive, got {value}")
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{full}: expected a string, got {value!r}")
    return value


def _enum(enum, value, path):
    try:
        return enum(value)
    except ValueError:
        choices = ", ".join(e.value for e in enum)
        raise ConfigError(f"{path}: invalid value {value!r} (choose from {choices})") from None


def _pair(value, path, kind=float):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{path}: expected a two-element list")
    try:
        return tuple(kind(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: invalid entries {value!r}") from None


def _parse_mesh(obj, case):
    _reject_unknown(obj, {"h", "refine", "band", "options", "file"}, "mesh")
    file = _get(obj, "file", "mesh", None, str)
    h = _get(obj, "h", "mesh", None, float, positive=True)
    if file is None and h is None:
        raise ConfigError("mesh: give either mesh.h or mesh.file")
    if case is CaseName.CUSTOM and file is None:
        raise ConfigError("mesh.file is required for a Custom case")
    refine = _get(obj, "refine", "mesh", None, int, positive=True)
    band = obj.get("band")
    band = None if band is None else _pair(band, "mesh.band")
    options = obj.get("options") or {}
    if not isinstance(options, dict):
        raise ConfigError("mesh.options: expected an object")
    opts = tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in options.items()))
    return MeshSpec(h, refine, band, opts, file)


def _parse_material(obj):
    _reject_unknown(obj, {"E0", "nu", "Gc", "l", "model", "softening", "ft"}, "material")
    model = _enum(ModelKind, _get(obj, "model", "material", kind=str), "material.model")
    softening = obj.get("softening")
    ft = _get(obj, "ft", "material", None, float, positive=True)
    if model is ModelKind.QUASI_BRITTLE:
        if softening is None:
            raise ConfigError("missing required key material.softening (QuasiBrittle)")
        softening = _enum(Softening, softening, "material.softening")
        if ft is None:
            raise ConfigError("missing required key material.ft (QuasiBrittle)")
    elif softening is not None:
        raise ConfigError(f"material.softening: only valid for QuasiBrittle, not {model.value}")
    spec = MaterialSpec(
        E0=_get(obj, "E0", "material", positive=True),
        nu=_get(obj, "nu", "material"),
        Gc=_get(obj, "Gc", "material", positive=True),
        l=_get(obj, "l", "material", positive=True),
        model=model,
        softening=softening,
        ft=ft,
    )
    try:
        spec.fracture
    except ConstitutiveError as exc:
        raise ConfigError(f"material: {exc}") from None
    return spec


def _parse_schedule(value):
    if not isinstance(value, list) or not value:
        raise ConfigError("schedule: expected a non-empty list of [count, increment]")
    out = []
    for i, entry in enumerate(value):
        path = f"schedule[{i}]"
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise ConfigError(f"{path}: expected [count, increment]")
        count, inc = entry
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise ConfigError(f"{path}: count must be a positive integer")
        if isinstance(inc, bool) or not isinstance(inc, (int, float)) or not math.isfinite(inc):
            raise ConfigError(f"{path}: increment must be a finite number")
        out.append((count, float(inc)))
    return tuple(out)


def _parse_solver(obj, beta, schedule):
    allowed = {"tol", "max_newton_iters", "mode", "linear_solver", "gmres", "stop_load_fraction",
               "residual_stiffness"}
    _reject_unknown(obj, allowed, "solver")
    g = obj.get("gmres") or {}
    _reject_unknown(g, {"restart", "maxiter", "rtol", "drop_tol", "fill_factor"}, "solver.gmres")
    d = GmresConfig()
    try:
        gmres = GmresConfig(
            restart=_get(g, "restart", "solver.gmres", d.restart, int, positive=True),
            maxiter=_get(g, "maxiter", "solver.gmres", d.maxiter, int, positive=True),
            rtol=_get(g, "rtol", "solver.gmres", d.rtol, positive=True),
            drop_tol=_get(g, "drop_tol", "solver.gmres", d.drop_tol),
            fill_factor=_get(g, "fill_factor", "solver.gmres", d.fill_factor, positive=True),
        )
        return SolverConfig(
            beta=beta,
            schedule=schedule,
            tol=_get(obj, "tol", "solver", 1e-3, positive=True),
            max_newton_iters=_get(obj, "max_newton_iters", "solver", 25, int, positive=True),
            mode=_enum(Mode, str(obj.get("mode", "problem5")).lower(), "solver.mode"),
            linear_solver=_enum(LinearSolver, obj.get("linear_solver", "IterativeGMRES"), "solver.linear_solver"),
            gmres=gmres,
            stop_load_fraction=_get(obj, "stop_load_fraction", "solver", None),
            residual_stiffness=_get(obj, "residual_stiffness", "solver", 1e-8),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"solver: {exc}") from None


def _parse_bcs(obj):
    _reject_unknown(obj, {"constraints", "load_set", "load_direction"}, "bcs")
    raw = obj.get("constraints")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("bcs.constraints: expected a non-empty list")
    cons = []
    for i, c in enumerate(raw):
        path = f"bcs.constraints[{i}]"
        _reject_unknown(c, {"node_set", "component", "kind", "scale"}, path)
        comp = _get(c, "component", path, kind=str)
        kind = _get(c, "kind", path, kind=str)
        if comp not in ("x", "y"):
            raise ConfigError(f"{path}.component: expected 'x' or 'y'")
        if kind not in ("fixed", "load"):
            raise ConfigError(f"{path}.kind: expected 'fixed' or 'load'")
        cons.append(Constraint(_get(c, "node_set", path, kind=str), comp, kind, _get(c, "scale", path, 1.0)))
    return BoundarySpec(
        tuple(cons),
        _get(obj, "load_set", "bcs", kind=str),
        _pair(obj.get("load_direction", (0.0, 1.0)), "bcs.load_direction"),
    )


_TOP_KEYS = {"case", "mesh", "material", "beta", "thickness", "schedule", "solver", "output", "bcs", "derived"}


def config_from_dict(obj: dict) -> CaseConfig:
    _reject_unknown(obj, _TOP_KEYS, "")
    case = _enum(CaseName, _get(obj, "case", "", kind=str), "case")
    mesh = _parse_mesh(obj.get("mesh", {}), case)
    if "material" not in obj:
        raise ConfigError("missing required key material")
    material = _parse_material(obj["material"])
    beta = _get(obj, "beta", "", positive=True)
    thickness = _get(obj, "thickness", "", positive=True)
    if "schedule" not in obj:
        raise ConfigError("missing required key schedule")
    schedule = _parse_schedule(obj["schedule"])
    solver = _parse_solver(obj.get("solver") or {}, beta, schedule)
    out = obj.get("output") or {}
    _reject_unknown(out, {"directory", "snapshot_every"}, "output")
    output = OutputSpec(
        _get(out, "directory", "output", "out", str),
        _get(out, "snapshot_every", "output", 0, int),
    )
    if output.snapshot_every < 0:
        raise ConfigError("output.snapshot_every: must be non-negative")
    bcs = None if obj.get("bcs") is None else _parse_bcs(obj["bcs"])
    if case is CaseName.CUSTOM and bcs is None:
        raise ConfigError("missing required key bcs (Custom case)")
    cfg = CaseConfig(case, mesh, material, beta, thickness, schedule, solver, output, bcs)
    derived = obj.get("derived")
    if derived is not None:
        _reject_unknown(derived, {"alpha", "a1"}, "derived")
        if "alpha" in derived and not math.isclose(derived["alpha"], cfg.alpha, rel_tol=1e-12):
            raise ConfigError(f"derived.alpha: {derived['alpha']} disagrees with beta*Gc/l = {cfg.alpha}")
    return cfg


def parse_config(path) -> CaseConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(obj)


def config_to_dict(cfg: CaseConfig, derived: bool = False) -> dict:
    mesh = {}
    if cfg.mesh.file is not None:
        mesh["file"] = cfg.mesh.file
    if cfg.mesh.h is not None:
        mesh["h"] = cfg.mesh.h
    if cfg.mesh.refine is not None:
        mesh["refine"] = cfg.mesh.refine
    if cfg.mesh.band is not None:
        mesh["band"] = list(cfg.mesh.band)
    if cfg.mesh.options:
        mesh["options"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.mesh.options}
    m = cfg.material
    material = {"E0": m.E0, "nu": m.nu, "Gc": m.Gc, "l": m.l, "model": m.model.value}
    if m.softening is not None:
        material["softening"] = m.softening.value
    if m.ft is not None:
        material["ft"] = m.ft
    s = cfg.solver
    solver = {
        "tol": s.tol,
        "max_newton_iters": s.max_newton_iters,
        "mode": s.mode.value,
        "linear_solver": s.linear_solver.value,
        "residual_stiffness": s.residual_stiffness,
        "gmres": {
            "restart": s.gmres.restart,
            "maxiter": s.gmres.maxiter,
            "rtol": s.gmres.rtol,
            "drop_tol": s.gmres.drop_tol,
            "fill_factor": s.gmres.fill_factor,
        },
    }
    if s.stop_load_fraction is not None:
        solver["stop_load_fraction"] = s.stop_load_fraction
    out = {
        "case": cfg.case.value,
        "mesh": mesh,
        "material": material,
        "beta": cfg.beta,
        "thickness": cfg.thickness,
        "schedule": [[c, inc] for c, inc in cfg.schedule],
        "solver": solver,
        "output": {"directory": cfg.output.directory, "snapshot_every": cfg.output.snapshot_every},
    }
    if cfg.bcs is not None:
        out["bcs"] = {
            "constraints": [
                {"node_set": c.node_set, "component": c.component, "kind": c.kind, "scale": c.scale}
                for c in cfg.bcs.constraints
            ],
            "load_set": cfg.bcs.load_set,
            "load_direction": list(cfg.bcs.load_direction),
        }
    if derived:
        out["derived"] = {"alpha": cfg.alpha}
        if cfg.a1 is not None:
            out["derived"]["a1"] = cfg.a1
    return out


def dump_config(cfg: CaseConfig, path, derived: bool = True) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg, derived), indent=2) + "\n")


_DEFAULTS = {
    CaseName.SENT: dict(
        mesh={"h": 0.005},
        material={"E0": 210e3, "nu": 0.3, "Gc": 2.7, "l": 0.015, "model": "AT2"},
        beta=250.0, thickness=1.0, schedule=[[55, 1e-4], [1000, 1e-6]],
    ),
    CaseName.SENS: dict(
        mesh={"h": 0.005},
        material={"E0": 210e3, "nu": 0.3, "Gc": 2.7, "l": 0.015, "model": "AT2"},
        beta=250.0, thickness=1.0, schedule=[[85, 1e-4], [900, 5e-6]],
    ),
    CaseName.LPANEL: dict(
        mesh={"h": 5.0},
        material={"E0": 2e4, "nu": 0.18, "Gc": 0.130, "l": 10.0, "model": "QuasiBrittle",
                  "softening": "Cornelissen", "ft": 2.5},
        beta=100.0, thickness=100.0, schedule=[[1000, 1e-3]],
    ),
    CaseName.TPB: dict(
        mesh={"h": 5.0},
        material={"E0": 2e4, "nu": 0.2, "Gc": 0.113, "l": 2.5, "model": "QuasiBrittle",
                  "softening": "Cornelissen", "ft": 2.4},
        beta=100.0, thickness=100.0, schedule=[[1000, 1e-3]],
    ),
}


def default_config(case, **overrides) -> CaseConfig:
    """Benchmark defaults for a named case; top-level keys may be overridden."""
    case = _enum(CaseName, case, "case")
    if case is CaseName.CUSTOM:
        raise ConfigError("Custom cases have no defaults")
    obj = {"case": case.value, **json.loads(json.dumps(_DEFAULTS[case]))}
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(obj.get(key), dict):
            obj[key] = {**obj[key], **value}
        else:
            obj[key] = value
    return config_from_dict(obj)
