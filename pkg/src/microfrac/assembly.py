"""Element blocks, global assembly and Dirichlet elimination.

Global unknowns are ordered as all displacement DOFs first (``ux, uy``
interleaved per node) followed by all micromorphic DOFs.  Each T3 element
is integrated with its centroid point; the phase-field lives at that point.

Two block sets are available:

* ``Mode.PROBLEM4``: the phase-field from the current micromorphic field
  drives both equations and the tangent is fully linearised.
* ``Mode.PROBLEM5``: the momentum balance is degraded with ``phi_hat``,
  computed from an extrapolated micromorphic field that is frozen during the
  step.  ``K_ud`` vanishes and the strain dependence of ``phi_hat`` is not
  linearised into ``K_uu``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .constitutive import (
    PLANE_IDX,
    ElasticParams,
    FractureModel,
    amor_split,
    degradation,
    material_tangent,
    plane_to_voigt,
    strain_state,
)
from .local_pf import Clamp, LocalSolveError, sensitivities_array, solve_local_array
from .mesh import Mesh, MeshError

__all__ = [
    "Mode",
    "State",
    "PointData",
    "AssembledSystem",
    "ConstrainedSystem",
    "Assembler",
    "AssemblyError",
    "element_blocks_problem4",
    "element_blocks_problem5",
    "assemble_global",
    "apply_dirichlet",
    "reaction_force",
    "assembly_threads",
]

_N_CENTROID = np.full(3, 1.0 / 3.0)


class AssemblyError(RuntimeError):
    pass


class Mode(str, Enum):
    PROBLEM4 = "problem4"
    PROBLEM5 = "problem5"


def assembly_threads() -> int:
    """Thread cap for element kernels, read from ``MICROFRAC_THREADS``."""
    raw = os.environ.get("MICROFRAC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class State:
    """Nodal unknowns and committed point history.

    ``u`` holds ``2 * n_nodes`` displacements, ``d`` one micromorphic value
    per node and ``phi_old`` the committed phase-field per element.  The
    remaining fields are bookkeeping owned by the solver.
    """

    u: np.ndarray
    d: np.ndarray
    phi_old: np.ndarray
    time_step: int = 0
    du_applied: float = 0.0
    d_prev: np.ndarray | None = None
    last_increment: float = 0.0
    phi: np.ndarray | None = None
    psi_plus: np.ndarray | None = None
    f_int: np.ndarray | None = None
    reference_norm: float = 0.0  # ||r_1|| of the step that produced this state

    @classmethod
    def initial(cls, mesh: Mesh) -> "State":
        n, m = mesh.n_nodes, mesh.n_elements
        return cls(
            u=np.zeros(2 * n),
            d=np.zeros(n),
            phi_old=np.zeros(m),
            phi=np.zeros(m),
            psi_plus=np.zeros(m),
            f_int=np.zeros(3 * n),
        )

    def check(self, mesh: Mesh) -> None:
        n, m = mesh.n_nodes, mesh.n_elements
        if self.u.shape != (2 * n,) or self.d.shape != (n,) or self.phi_old.shape != (m,):
            raise AssemblyError("state vector lengths do not match the mesh")
        if np.any(self.phi_old < 0.0) or np.any(self.phi_old > 1.0):
            raise AssemblyError("phi_old outside [0, 1]")

    def copy(self) -> "State":
        def c(a):
            return None if a is None else a.copy()

        return State(
            c(self.u), c(self.d), c(self.phi_old), self.time_step, self.du_applied,
            c(self.d_prev), self.last_increment, c(self.phi), c(self.psi_plus), c(self.f_int),
            self.reference_norm,
        )


@dataclass
class PointData:
    """Per-integration-point quantities of one assembly pass."""

    eps: np.ndarray
    psi_plus: np.ndarray
    phi: np.ndarray
    clamp: np.ndarray
    phi_hat: np.ndarray
    dphi_dpsi: np.ndarray
    dphi_dd: np.ndarray
    d_point: np.ndarray


@dataclass
class AssembledSystem:
    K: sp.csr_matrix
    r: np.ndarray
    f_int: np.ndarray
    points: PointData


@dataclass
class ConstrainedSystem:
    A: sp.csr_matrix
    b: np.ndarray
    fixed: np.ndarray
    free: np.ndarray = field(repr=False)

    def free_norm(self) -> float:
        return float(np.linalg.norm(self.b[self.free]))


class Assembler:
    """Precomputed element operators for one mesh / material combination."""

    def __init__(self, mesh: Mesh, elas: ElasticParams, model: FractureModel, alpha: float,
                 mode: Mode | str = Mode.PROBLEM5, threads: int | None = None,
                 residual_stiffness: float = 0.0):
        if not alpha > 0:
            raise AssemblyError(f"alpha must be positive, got {alpha}")
        if not 0.0 <= residual_stiffness < 1.0:
            raise AssemblyError(f"residual stiffness must lie in [0, 1), got {residual_stiffness}")
        # added to g in the momentum balance only, keeps broken elements invertible
        self.residual_stiffness = float(residual_stiffness)
        self.mesh = mesh
        self.elas = elas
        self.model = model
        self.alpha = float(alpha)
        self.mode = Mode(mode)
        self.threads = assembly_threads() if threads is None else max(1, int(threads))

        n, m = mesh.n_nodes, mesh.n_elements
        self.n_nodes = n
        self.ndof = 3 * n
        grads = mesh.shape_grads  # (m, 3, 2)
        self.area = mesh.areas * mesh.thickness  # integration weight incl. thickness
        Bu = np.zeros((m, 3, 6))
        Bu[:, 0, 0::2] = grads[:, :, 0]
        Bu[:, 1, 1::2] = grads[:, :, 1]
        Bu[:, 2, 0::2] = grads[:, :, 1]
        Bu[:, 2, 1::2] = grads[:, :, 0]
        self.Bu = Bu
        self.Bd = np.transpose(grads, (0, 2, 1)).copy()  # (m, 2, 3)
        el = mesh.elements
        self.udofs = np.stack([2 * el[:, 0], 2 * el[:, 0] + 1, 2 * el[:, 1], 2 * el[:, 1] + 1,
                               2 * el[:, 2], 2 * el[:, 2] + 1], axis=1)
        self.dofs = np.hstack([self.udofs, 2 * n + el])  # (m, 9)
        self._build_pattern()

    def _build_pattern(self):
        rows = np.repeat(self.dofs, 9, axis=1).ravel()
        cols = np.tile(self.dofs, (1, 9)).ravel()
        keys = rows.astype(np.int64) * self.ndof + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        self._slot = inverse
        self._nnz = len(uniq)
        urow = uniq // self.ndof
        self._indices = (uniq % self.ndof).astype(np.int32)
        self._indptr = np.searchsorted(urow, np.arange(self.ndof + 1)).astype(np.int32)

    # -- element kernels -------------------------------------------------

    def point_data(self, u, d, phi_old, d_hat=None, elements=None, phi_hat=None):
        """Point quantities and the stress split at every element centroid.

        ``phi_hat`` overrides the extrapolated phase-field (used to freeze it
        when differentiating the Problem 5 residual).
        """
        sl = slice(None) if elements is None else elements
        ue = u[self.udofs[sl]]
        de = d[self.mesh.elements[sl]]
        eps3 = np.einsum("eij,ej->ei", self.Bu[sl], ue)
        split = amor_split(plane_to_voigt(eps3), self.elas)
        psi = split.psi_plus
        d_pt = de.mean(axis=1)
        po = phi_old[sl]
        phi, clamp = solve_local_array(psi, d_pt, po, self.model, self.alpha)
        dpsi, dd = sensitivities_array(phi, clamp, psi, self.model, self.alpha)
        if phi_hat is not None:
            phi_hat = np.asarray(phi_hat, dtype=float)[sl]
        elif self.mode is Mode.PROBLEM5 and d_hat is not None:
            dh_pt = d_hat[self.mesh.elements[sl]].mean(axis=1)
            phi_hat, _ = solve_local_array(psi, dh_pt, po, self.model, self.alpha)
        else:
            phi_hat = phi
        return PointData(eps3, psi, phi, clamp, phi_hat, dpsi, dd, d_pt), split

    def _kernel(self, u, d, phi_old, d_hat, elements, with_matrix=True, phi_hat=None):
        sl = elements
        pts, split = self.point_data(u, d, phi_old, d_hat, sl, phi_hat)
        A = self.area[sl]
        Bu, Bd = self.Bu[sl], self.Bd[sl]
        de = d[self.mesh.elements[sl]]
        alpha = self.alpha
        c = self.model.gradient_coeff

        g_m, dg_m, _ = degradation(pts.phi_hat, self.model)
        g_m = g_m + self.residual_stiffness
        sp3 = split.sigma_plus[:, PLANE_IDX]
        sm3 = split.sigma_minus[:, PLANE_IDX]
        stress = g_m[:, None] * sp3 + sm3
        fu = A[:, None] * np.einsum("eji,ej->ei", Bu, stress)
        grad_d = np.einsum("eij,ej->ei", Bd, de)
        fd = A[:, None] * (
            c * np.einsum("eji,ej->ei", Bd, grad_d)
            - alpha * (pts.phi - pts.d_point)[:, None] * _N_CENTROID
        )
        fe = np.hstack([fu, fd])
        if not with_matrix:
            return fe, None, pts

        D3 = material_tangent(strain_state(plane_to_voigt(pts.eps)), g_m, self.elas)
        D3 = D3[:, PLANE_IDX][:, :, PLANE_IDX]
        Kuu = np.einsum("e,eki,ekl,elj->eij", A, Bu, D3, Bu)
        bsig = np.einsum("eji,ej->ei", Bu, sp3)  # B^T sigma+, (m, 6)
        Kdu = -(A * alpha * pts.dphi_dpsi)[:, None, None] * _N_CENTROID[None, :, None] * bsig[:, None, :]
        Kdd = A[:, None, None] * (
            c * np.einsum("eki,ekj->eij", Bd, Bd)
            + (alpha * (1.0 - pts.dphi_dd))[:, None, None] / 9.0
        )
        Ke = np.zeros((len(A), 9, 9))
        Ke[:, :6, :6] = Kuu
        Ke[:, 6:, :6] = Kdu
        Ke[:, 6:, 6:] = Kdd
        if self.mode is Mode.PROBLEM4:
            coef = A * dg_m
            Ke[:, :6, :6] += (coef * pts.dphi_dpsi)[:, None, None] * bsig[:, :, None] * bsig[:, None, :]
            Ke[:, :6, 6:] = (coef * pts.dphi_dd)[:, None, None] * bsig[:, :, None] * _N_CENTROID[None, None, :]
        return fe, Ke, pts

    def element_arrays(self, u, d, phi_old, d_hat=None, with_matrix=True, phi_hat=None):
        """Element force vectors (m, 9), matrices (m, 9, 9) and point data."""
        m = self.mesh.n_elements
        if self.threads == 1 or m < 2000:
            return self._kernel(u, d, phi_old, d_hat, slice(None), with_matrix, phi_hat)
        bounds = np.linspace(0, m, self.threads + 1).astype(int)
        chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            parts = list(pool.map(lambda s: self._kernel(u, d, phi_old, d_hat, s, with_matrix, phi_hat), chunks))
        fe = np.vstack([p[0] for p in parts])
        Ke = None if not with_matrix else np.concatenate([p[1] for p in parts])
        fields = PointData.__dataclass_fields__
        pts = PointData(**{k: np.concatenate([getattr(p[2], k) for p in parts]) for k in fields})
        return fe, Ke, pts

    # -- global ------------------------------------------------------------

    def _scatter_vector(self, fe):
        return np.bincount(self.dofs.ravel(), weights=fe.ravel(), minlength=self.ndof)

    def _scatter_matrix(self, Ke):
        data = np.bincount(self._slot, weights=Ke.ravel(), minlength=self._nnz)
        return sp.csr_matrix((data, self._indices, self._indptr), shape=(self.ndof, self.ndof))

    def assemble(self, u, d, phi_old, d_hat=None, phi_hat=None) -> AssembledSystem:
        try:
            fe, Ke, pts = self.element_arrays(u, d, phi_old, d_hat, phi_hat=phi_hat)
        except LocalSolveError as exc:
            if exc.points is not None and len(exc.points):
                raise LocalSolveError(f"{exc} [element {int(exc.points[0])}]", exc.points) from exc
            raise
        f_int = self._scatter_vector(fe)
        return AssembledSystem(self._scatter_matrix(Ke), -f_int, f_int, pts)

    def internal_force(self, u, d, phi_old, d_hat=None, phi_hat=None) -> np.ndarray:
        fe, _, _ = self.element_arrays(u, d, phi_old, d_hat, with_matrix=False, phi_hat=phi_hat)
        return self._scatter_vector(fe)

    def assemble_state(self, state: State, d_hat=None) -> AssembledSystem:
        state.check(self.mesh)
        return self.assemble(state.u, state.d, state.phi_old, d_hat)


def _single_element_blocks(mesh, e, state, model, elas, alpha, mode, d_hat):
    if not 0 <= e < mesh.n_elements:
        raise MeshError(f"element {e} does not exist")
    asm = Assembler(mesh, elas, model, alpha, mode, threads=1)
    el = np.array([e])
    fe, Ke, _ = asm._kernel(state.u, state.d, state.phi_old, d_hat, el)
    K, f = Ke[0], fe[0]
    return K[:6, :6], K[:6, 6:], K[6:, :6], K[6:, 6:], f[:6], f[6:]


def element_blocks_problem5(mesh: Mesh, e: int, state: State, d_hat, model: FractureModel,
                            elas: ElasticParams, alpha: float):
    """``(K_uu, K_ud, K_du, K_dd, f_u, f_d)`` of element ``e`` for the extrapolated scheme."""
    return _single_element_blocks(mesh, e, state, model, elas, alpha, Mode.PROBLEM5, d_hat)


def element_blocks_problem4(mesh: Mesh, e: int, state: State, model: FractureModel,
                            elas: ElasticParams, alpha: float):
    """``(K_uu, K_ud, K_du, K_dd, f_u, f_d)`` of element ``e`` with the full tangent."""
    return _single_element_blocks(mesh, e, state, model, elas, alpha, Mode.PROBLEM4, None)


def assemble_global(mesh: Mesh, state: State, mode, model: FractureModel, elas: ElasticParams,
                    alpha: float, d_hat=None) -> AssembledSystem:
    return Assembler(mesh, elas, model, alpha, mode).assemble_state(state, d_hat)


def apply_dirichlet(system: AssembledSystem, constraints) -> ConstrainedSystem:
    """Row/column elimination of prescribed increments.

    ``constraints`` is an iterable of ``(dof, increment)``.  Constrained rows
    become identity rows whose right-hand side is the increment; the
    corresponding columns are moved to the right-hand side.
    """
    K = system.K
    n = K.shape[0]
    values: dict[int, float] = {}
    for dof, inc in constraints:
        dof = int(dof)
        if not 0 <= dof < n:
            raise AssemblyError(f"constraint dof {dof} out of range [0, {n})")
        if dof in values and values[dof] != inc:
            raise AssemblyError(f"conflicting constraints on dof {dof}: {values[dof]} vs {inc}")
        values[dof] = float(inc)
    fixed = np.array(sorted(values), dtype=np.int64)
    free = np.ones(n, dtype=bool)
    free[fixed] = False
    if fixed.size == 0:
        return ConstrainedSystem(K.tocsr(), system.r.copy(), fixed, free)
    xc = np.zeros(n)
    xc[fixed] = [values[i] for i in fixed]
    b = system.r - K @ xc
    b[fixed] = xc[fixed]
    keep = sp.diags(free.astype(float))
    A = (keep @ K @ keep + sp.diags((~free).astype(float))).tocsr()
    return ConstrainedSystem(A, b, fixed, free)


def reaction_force(mesh: Mesh, state: State, node_set: str, direction) -> float:
    """Sum of internal nodal forces over a node set projected on ``direction`` [N].

    ``state.f_int`` must hold the internal forces of the converged state
    (thickness already included).
    """
    nodes = mesh.node_set(node_set)
    if nodes.size == 0:
        raise AssemblyError(f"node set '{node_set}' is empty")
    direction = np.asarray(direction, dtype=float)
    if state.f_int is None:
        raise AssemblyError("state carries no internal forces; assemble it first")
    fu = state.f_int[: 2 * mesh.n_nodes].reshape(-1, 2)
    return float(fu[nodes].sum(axis=0) @ direction)
