"""Linear triangle (T3) meshes, benchmark geometries and element geometry.

All generators build a tensor-product grid (optionally graded inside a
refinement band), split every quad into two counter-clockwise triangles
with alternating diagonals, drop cells that fall outside the domain and
finally cut explicit slits by duplicating nodes.

Units are millimetres throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "Mesh",
    "MeshError",
    "ElementGeometry",
    "element_geometry",
    "generate_sent_mesh",
    "generate_sens_mesh",
    "generate_lpanel_mesh",
    "generate_tpb_mesh",
    "generate_mesh",
    "read_mesh",
    "write_mesh",
    "MIN_AREA",
]

MIN_AREA = 1e-14
_MESH_HEADER = "microfrac-mesh v1"


class MeshError(ValueError):
    """Invalid mesh data or generator input."""


@dataclass(frozen=True)
class ElementGeometry:
    """Geometry of one T3 element sampled at its centroid.

    ``shape_grads[i]`` is the constant gradient of the i-th interpolant.
    """

    area: float
    shape_grads: np.ndarray
    centroid_shape_values: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangular mesh with named node sets.

    Parameters
    ----------
    nodes : (n_nodes, 2) array
        Node coordinates [mm].
    elements : (n_elements, 3) int array
        Counter-clockwise node indices of each triangle.
    node_sets : dict
        Named index arrays ("top", "bottom", "load_edge", ...).
    thickness : float
        Out-of-plane thickness [mm] used to scale forces.
    """

    nodes: np.ndarray
    elements: np.ndarray
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)
    thickness: float = 1.0

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        elements = np.array(self.elements, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError(f"nodes must have shape (n, 2), got {nodes.shape}")
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise MeshError(f"elements must have shape (m, 3), got {elements.shape}")
        n = len(nodes)
        if elements.size and (elements.min() < 0 or elements.max() >= n):
            raise MeshError("element references an out-of-range node index")
        distinct = (
            (elements[:, 0] != elements[:, 1])
            & (elements[:, 1] != elements[:, 2])
            & (elements[:, 0] != elements[:, 2])
        )
        if not distinct.all():
            bad = int(np.flatnonzero(~distinct)[0])
            raise MeshError(f"element {bad} repeats a node index")
        areas = _signed_areas(nodes, elements)
        if elements.size and areas.min() <= MIN_AREA:
            bad = int(np.argmin(areas))
            raise MeshError(
                f"element {bad} is degenerate or clockwise (signed area {areas[bad]:.3e})"
            )
        sets = {}
        for name, idx in self.node_sets.items():
            idx = np.unique(np.asarray(idx, dtype=np.int64))
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise MeshError(f"node set '{name}' contains out-of-range indices")
            idx.setflags(write=False)
            sets[name] = idx
        if not self.thickness > 0:
            raise MeshError(f"thickness must be positive, got {self.thickness}")
        nodes.setflags(write=False)
        elements.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "node_sets", sets)
        object.__setattr__(self, "thickness", float(self.thickness))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.nodes, self.elements)

    @cached_property
    def shape_grads(self) -> np.ndarray:
        """(n_elements, 3, 2) constant gradients of the three interpolants."""
        x = self.nodes[self.elements]
        x0, x1, x2 = x[:, 0], x[:, 1], x[:, 2]
        two_a = 2.0 * self.areas
        b = np.stack([x1[:, 1] - x2[:, 1], x2[:, 1] - x0[:, 1], x0[:, 1] - x1[:, 1]], axis=1)
        c = np.stack([x2[:, 0] - x1[:, 0], x0[:, 0] - x2[:, 0], x1[:, 0] - x0[:, 0]], axis=1)
        return np.stack([b, c], axis=2) / two_a[:, None, None]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def node_set(self, name: str) -> np.ndarray:
        try:
            return self.node_sets[name]
        except KeyError:
            raise MeshError(
                f"node set '{name}' not found (available: {sorted(self.node_sets)})"
            ) from None

    def with_thickness(self, thickness: float) -> "Mesh":
        return Mesh(self.nodes, self.elements, dict(self.node_sets), thickness)


def _signed_areas(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    x = nodes[elements]
    d1 = x[:, 1] - x[:, 0]
    d2 = x[:, 2] - x[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def element_geometry(mesh: Mesh, element_index: int) -> ElementGeometry:
    """Area, shape-function gradients and centroid shape values of one element."""
    if not 0 <= element_index < mesh.n_elements:
        raise MeshError(f"element {element_index} does not exist")
    x = mesh.nodes[mesh.elements[element_index]]
    area = 0.5 * (
        (x[1, 0] - x[0, 0]) * (x[2, 1] - x[0, 1])
        - (x[2, 0] - x[0, 0]) * (x[1, 1] - x[0, 1])
    )
    if abs(area) < MIN_AREA:
        raise MeshError(f"element {element_index} is degenerate (area {area:.3e} mm^2)")
    b = np.array([x[1, 1] - x[2, 1], x[2, 1] - x[0, 1], x[0, 1] - x[1, 1]])
    c = np.array([x[2, 0] - x[1, 0], x[0, 0] - x[2, 0], x[1, 0] - x[0, 0]])
    grads = np.column_stack([b, c]) / (2.0 * area)
    return ElementGeometry(float(abs(area)), grads, np.full(3, 1.0 / 3.0))


# ---------------------------------------------------------------------------
# structured generation helpers
# ---------------------------------------------------------------------------


def _graded_axis(lo, hi, h, breaks=(), band=None, refine=1.0):
    """1D node coordinates on [lo, hi] hitting every break point.

    Segments inside ``band`` use spacing ``h / refine``.
    """
    pts = {float(lo), float(hi)}
    pts.update(float(b) for b in breaks if lo < b < hi)
    if band is not None and refine > 1:
        pts.update(float(b) for b in band if lo < b < hi)
    pts = sorted(pts)
    coords = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        size = h
        if band is not None and refine > 1:
            mid = 0.5 * (a + b)
            if band[0] <= mid <= band[1]:
                size = h / refine
        n = max(1, math.ceil((b - a) / size - 1e-9))
        coords.extend(np.linspace(a, b, n + 1)[1:].tolist())
    return np.array(coords)


def _structured(xs, ys, keep=None):
    """Triangulate the tensor grid ``xs x ys``; ``keep(xc, yc)`` masks cells."""
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
    i, j = i.ravel(), j.ravel()
    if keep is not None:
        xc = 0.5 * (xs[i] + xs[i + 1])
        yc = 0.5 * (ys[j] + ys[j + 1])
        mask = keep(xc, yc)
        i, j = i[mask], j[mask]
    n00 = j * nx + i
    n10 = n00 + 1
    n01 = n00 + nx
    n11 = n01 + 1
    even = (i + j) % 2 == 0
    t1 = np.where(even[:, None], np.column_stack([n00, n10, n11]), np.column_stack([n00, n10, n01]))
    t2 = np.where(even[:, None], np.column_stack([n00, n11, n01]), np.column_stack([n10, n11, n01]))
    elements = np.empty((2 * len(i), 3), dtype=np.int64)
    elements[0::2] = t1
    elements[1::2] = t2
    used = np.unique(elements)
    remap = np.full(len(nodes), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return nodes[used], remap[elements]


def _cut_slit(nodes, elements, on_slit, upper_side):
    """Duplicate the nodes flagged by ``on_slit`` for elements on the upper side."""
    slit_nodes = np.flatnonzero(on_slit)
    copies = np.arange(len(nodes), len(nodes) + len(slit_nodes))
    remap = np.arange(len(nodes))
    remap[slit_nodes] = copies
    cent = nodes[elements].mean(axis=1)
    upper = upper_side(cent[:, 0], cent[:, 1])
    elements = elements.copy()
    elements[upper] = remap[elements[upper]]
    return np.vstack([nodes, nodes[slit_nodes]]), elements


def _on(values, target, scale):
    return np.abs(values - target) <= 1e-9 * scale


def _check_h(h, limit, what):
    if not h > 0:
        raise MeshError(f"mesh size h must be positive, got {h}")
    if h > limit:
        raise MeshError(f"mesh size h = {h} exceeds the smallest feature ({what} = {limit})")


def _square_with_notch(h, band, refine, thickness):
    _check_h(h, 0.5, "notch length")
    if h >= 0.5:
        raise MeshError("SENT/SENS generators require h < 0.5")
    xs = _graded_axis(0.0, 1.0, h, breaks=(0.5,))
    ys = _graded_axis(0.0, 1.0, h, breaks=(0.5,), band=band, refine=refine)
    nodes, elements = _structured(xs, ys)
    on_slit = _on(nodes[:, 1], 0.5, 1.0) & (nodes[:, 0] < 0.5 - 1e-9)
    nodes, elements = _cut_slit(nodes, elements, on_slit, lambda x, y: y > 0.5)
    sets = {
        "top": np.flatnonzero(_on(nodes[:, 1], 1.0, 1.0)),
        "bottom": np.flatnonzero(_on(nodes[:, 1], 0.0, 1.0)),
        "left": np.flatnonzero(_on(nodes[:, 0], 0.0, 1.0)),
        "right": np.flatnonzero(_on(nodes[:, 0], 1.0, 1.0)),
    }
    return Mesh(nodes, elements, sets, thickness)


def generate_sent_mesh(h: float, band=(0.4, 0.6), refine: float = 4.0, thickness: float = 1.0) -> Mesh:
    """Unit square with a slit from (0, 0.5) to (0.5, 0.5).

    Rows whose mid-height lies in ``band`` are refined to ``h / refine``.
    Pass ``refine=1`` for a uniform grid.
    """
    return _square_with_notch(h, band, refine, thickness)


def generate_sens_mesh(h: float, band=(0.0, 0.55), refine: float = 4.0, thickness: float = 1.0) -> Mesh:
    """Same geometry as SENT; the default band covers the curved shear crack."""
    return _square_with_notch(h, band, refine, thickness)


def generate_lpanel_mesh(
    h: float,
    band=(240.0, 320.0),
    refine: float = 4.0,
    thickness: float = 100.0,
    load_edge=(470.0, 500.0),
) -> Mesh:
    """Winkler L-panel: 500 x 500 square without its lower-right 250 x 250 quadrant.

    The lower leg's bottom edge (y = 0) is ``fixed_bottom``.  ``load_edge`` is
    the x-interval on the underside (y = 250) of the right arm.
    """
    edge_len = load_edge[1] - load_edge[0]
    if not 250.0 <= load_edge[0] < load_edge[1] <= 500.0:
        raise MeshError(f"load edge {load_edge} must lie on 250 <= x <= 500")
    _check_h(h, edge_len, "load edge length")
    xs = _graded_axis(0.0, 500.0, h, breaks=(250.0, *load_edge))
    ys = _graded_axis(0.0, 500.0, h, breaks=(250.0,), band=band, refine=refine)
    nodes, elements = _structured(xs, ys, keep=lambda x, y: ~((x > 250.0) & (y < 250.0)))
    x, y = nodes[:, 0], nodes[:, 1]
    tol = 1e-9 * 500.0
    sets = {
        "fixed_bottom": np.flatnonzero(_on(y, 0.0, 500.0)),
        "load_edge": np.flatnonzero(
            _on(y, 250.0, 500.0) & (x >= load_edge[0] - tol) & (x <= load_edge[1] + tol)
        ),
        "top": np.flatnonzero(_on(y, 500.0, 500.0)),
    }
    return Mesh(nodes, elements, sets, thickness)


def generate_tpb_mesh(
    h: float,
    band=(200.0, 250.0),
    refine: float = 4.0,
    thickness: float = 100.0,
    load_halfwidth: float = 0.0,
    span_inset: float = 0.0,
) -> Mesh:
    """Notched three-point-bending beam, 450 x 100 with a 5 x 50 mid-span cutout.

    Columns whose mid-point lies in ``band`` are refined.  ``load_point``
    collects the top nodes within ``load_halfwidth`` of mid-span;
    supports sit at ``span_inset`` from each bottom corner.
    """
    _check_h(h, 5.0, "notch width")
    if not 0.0 <= span_inset < 200.0:
        raise MeshError(f"support inset {span_inset} out of range")
    breaks = (222.5, 225.0, 227.5, span_inset, 450.0 - span_inset)
    if load_halfwidth > 0:
        breaks = breaks + (225.0 - load_halfwidth, 225.0 + load_halfwidth)
    xs = _graded_axis(0.0, 450.0, h, breaks=breaks, band=band, refine=refine)
    ys = _graded_axis(0.0, 100.0, h, breaks=(50.0,))
    nodes, elements = _structured(
        xs, ys, keep=lambda x, y: ~((np.abs(x - 225.0) < 2.5) & (y < 50.0))
    )
    x, y = nodes[:, 0], nodes[:, 1]
    tol = 1e-9 * 450.0
    bottom = _on(y, 0.0, 450.0)
    sets = {
        "support_left": np.flatnonzero(bottom & _on(x, span_inset, 450.0)),
        "support_right": np.flatnonzero(bottom & _on(x, 450.0 - span_inset, 450.0)),
        "load_point": np.flatnonzero(
            _on(y, 100.0, 450.0) & (np.abs(x - 225.0) <= load_halfwidth + tol)
        ),
    }
    return Mesh(nodes, elements, sets, thickness)


_GENERATORS = {
    "SENT": generate_sent_mesh,
    "SENS": generate_sens_mesh,
    "LPanel": generate_lpanel_mesh,
    "TPB": generate_tpb_mesh,
}


def generate_mesh(case: str, h: float, **kwargs) -> Mesh:
    """Dispatch to the generator of a benchmark case by name."""
    try:
        gen = _GENERATORS[case]
    except KeyError:
        raise MeshError(f"unknown case '{case}' (expected one of {sorted(_GENERATORS)})") from None
    return gen(h, **kwargs)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def write_mesh(mesh: Mesh, path) -> None:
    lines = [_MESH_HEADER, f"thickness {mesh.thickness!r}", f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"elements {mesh.n_elements}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.elements.tolist()]
    for name, idx in mesh.node_sets.items():
        lines.append(f"nodeset {name} {len(idx)}")
        lines += [str(i) for i in idx.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, thickness: float | None = None) -> Mesh:
    """Load a ``microfrac-mesh v1`` file.

    The ``thickness`` line is optional; an explicit argument overrides it.
    """
    tokens = Path(path).read_text().splitlines()
    lines = [t.strip() for t in tokens if t.strip() and not t.lstrip().startswith("#")]
    if not lines or lines[0] != _MESH_HEADER:
        raise MeshError(f"{path}: missing '{_MESH_HEADER}' header")
    pos = 1
    file_thickness = 1.0
    nodes = elements = None
    sets = {}

    def take(count):
        nonlocal pos
        block = lines[pos:pos + count]
        if len(block) != count:
            raise MeshError(f"{path}: truncated block (expected {count} lines)")
        pos += count
        return block

    while pos < len(lines):
        head = lines[pos].split()
        pos += 1
        if head[0] == "thickness":
            file_thickness = float(head[1])
        elif head[0] == "nodes":
            nodes = np.array([list(map(float, s.split())) for s in take(int(head[1]))])
        elif head[0] == "elements":
            elements = np.array([list(map(int, s.split())) for s in take(int(head[1]))])
        elif head[0] == "nodeset":
            sets[head[1]] = np.array([int(s) for s in take(int(head[2]))], dtype=np.int64)
        else:
            raise MeshError(f"{path}: unexpected section '{head[0]}'")
    if nodes is None or elements is None:
        raise MeshError(f"{path}: nodes and elements sections are required")
    nodes = nodes.reshape(-1, 2)
    elements = elements.reshape(-1, 3)
    return Mesh(nodes, elements, sets, file_thickness if thickness is None else thickness)
