"""Load-displacement CSV and legacy-VTK field snapshots."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .assembly import State
from .mesh import Mesh

__all__ = [
    "OutputError",
    "LODI_HEADER",
    "write_lodi_csv",
    "read_lodi_csv",
    "write_field_snapshot",
    "read_vtk_summary",
    "check_vtk",
]

LODI_HEADER = ("step", "displacement_mm", "load_kN", "iterations", "residual_ratio")
VTK_TRIANGLE = 5


class OutputError(RuntimeError):
    pass


def write_lodi_csv(series, path) -> None:
    """Write the load-displacement series; loads are converted from N to kN."""
    if not series:
        raise OutputError("load-displacement series is empty")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LODI_HEADER)
            for rec in series:
                w.writerow([rec.step, repr(float(rec.displacement)), repr(rec.load / 1000.0),
                            rec.iterations, repr(float(rec.residual_ratio))])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


def read_lodi_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != LODI_HEADER:
        raise OutputError(f"{path}: unexpected header {rows[0] if rows else None}")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(LODI_HEADER))
    return {name: data[:, i] for i, name in enumerate(LODI_HEADER)}


def _fmt(values) -> list[str]:
    return [" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(values)]


def write_field_snapshot(mesh: Mesh, state: State, path, title: str = "microfrac snapshot") -> None:
    """ASCII legacy-VTK unstructured grid with u, d per node and phi, psi+ per cell."""
    n, m = mesh.n_nodes, mesh.n_elements
    state.check(mesh)
    phi = state.phi if state.phi is not None else state.phi_old
    psi = state.psi_plus if state.psi_plus is not None else np.zeros(m)
    pts = np.column_stack([mesh.nodes, np.zeros(n)])
    u = np.column_stack([state.u.reshape(-1, 2), np.zeros(n)])
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += _fmt(pts)
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.elements.tolist()]
    lines.append(f"CELL_TYPES {m}")
    lines += [str(VTK_TRIANGLE)] * m
    lines += [f"POINT_DATA {n}", "VECTORS u double"]
    lines += _fmt(u)
    lines += ["SCALARS d double 1", "LOOKUP_TABLE default"]
    lines += [repr(float(v)) for v in state.d]
    lines += [f"CELL_DATA {m}", "SCALARS phi double 1", "LOOKUP_TABLE default"]
    lines += [repr(float(v)) for v in phi]
    lines += ["SCALARS psi_plus double 1", "LOOKUP_TABLE default"]
    lines += [repr(float(v)) for v in psi]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


def read_vtk_summary(path) -> dict:
    """Parse a snapshot written by :func:`write_field_snapshot`.

    Returns counts, the section order and the named data arrays.
    Raises :class:`OutputError` on any structural inconsistency.
    """
    lines = Path(path).read_text().splitlines()
    if len(lines) < 5 or not lines[0].startswith("# vtk DataFile Version"):
        raise OutputError("missing legacy VTK header")
    if lines[2].strip() != "ASCII" or lines[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise OutputError("expected an ASCII unstructured grid")
    pos = 4
    sections: list[str] = []
    arrays: dict[str, np.ndarray] = {}
    out: dict = {"sections": sections, "arrays": arrays}

    def block(count, width=None):
        nonlocal pos
        rows = lines[pos:pos + count]
        if len(rows) != count:
            raise OutputError(f"truncated section {sections[-1]}")
        pos += count
        arr = np.array([r.split() for r in rows], dtype=float)
        if width is not None and arr.shape != (count, width):
            raise OutputError(f"section {sections[-1]}: expected {width} values per row")
        return arr

    while pos < len(lines):
        head = lines[pos].split()
        pos += 1
        if not head:
            continue
        key = head[0]
        sections.append(key)
        if key == "POINTS":
            out["n_points"] = int(head[1])
            out["points"] = block(out["n_points"], 3)
        elif key == "CELLS":
            nc, size = int(head[1]), int(head[2])
            cells = block(nc, 4).astype(int)
            if size != cells.size or np.any(cells[:, 0] != 3):
                raise OutputError("CELLS size does not match triangle connectivity")
            if np.any(cells[:, 1:] < 0) or np.any(cells[:, 1:] >= out.get("n_points", 0)):
                raise OutputError("cell references a missing point")
            out["n_cells"] = nc
            out["cells"] = cells[:, 1:]
        elif key == "CELL_TYPES":
            types = block(int(head[1]), 1).astype(int).ravel()
            if types.size != out.get("n_cells") or np.any(types != VTK_TRIANGLE):
                raise OutputError("CELL_TYPES inconsistent with CELLS")
        elif key in ("POINT_DATA", "CELL_DATA"):
            out[key] = int(head[1])
            expected = out.get("n_points") if key == "POINT_DATA" else out.get("n_cells")
            if out[key] != expected:
                raise OutputError(f"{key} count {out[key]} does not match geometry ({expected})")
        elif key == "VECTORS":
            arrays[head[1]] = block(out["POINT_DATA"] if "CELL_DATA" not in out else out["CELL_DATA"], 3)
        elif key == "SCALARS":
            if pos >= len(lines) or not lines[pos].startswith("LOOKUP_TABLE"):
                raise OutputError(f"SCALARS {head[1]} lacks LOOKUP_TABLE")
            pos += 1
            count = out["CELL_DATA"] if "CELL_DATA" in out else out["POINT_DATA"]
            arrays[head[1]] = block(count, 1).ravel()
        else:
            raise OutputError(f"unexpected section {key}")
    return out


_ORDER = ["POINTS", "CELLS", "CELL_TYPES", "POINT_DATA", "VECTORS", "SCALARS", "CELL_DATA", "SCALARS", "SCALARS"]


def check_vtk(path, mesh: Mesh | None = None) -> dict:
    """Structural check of a snapshot: section order, counts and required arrays."""
    info = read_vtk_summary(path)
    if info["sections"] != _ORDER:
        raise OutputError(f"unexpected section order {info['sections']}")
    for name in ("u", "d", "phi", "psi_plus"):
        if name not in info["arrays"]:
            raise OutputError(f"missing data array {name}")
    if mesh is not None and (info["n_points"] != mesh.n_nodes or info["n_cells"] != mesh.n_elements):
        raise OutputError("snapshot counts differ from the mesh")
    return info
