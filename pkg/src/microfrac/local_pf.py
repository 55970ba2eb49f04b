"""Pointwise phase-field solves with irreversibility.

At every integration point the phase-field is the constrained minimiser of

    g(phi) psi+ + Gc/(c_w l) w(phi) + alpha/2 (phi - d)^2   on [phi_old, 1],

whose stationarity condition is the scalar local equation

    g'(phi) psi+ + Gc/(c_w l) w'(phi) + alpha (phi - d) = 0.

AT1/AT2 have a linear local equation and closed-form roots.  The
quasi-brittle model is solved by a bracketed Newton iteration.  All solvers
are vectorised over points; the scalar entry points wrap them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .constitutive import FractureModel, ModelKind, degradation, dissipation

__all__ = [
    "Clamp",
    "PointState",
    "LocalSolveError",
    "local_residual",
    "solve_local",
    "solve_local_array",
    "solve_local_extrapolated",
    "sensitivities",
    "sensitivities_array",
    "extrapolate_d",
]

NEWTON_TOL = 1e-12
MAX_ITERS = 100
SCAN_INTERVALS = 32


class Clamp(IntEnum):
    LOWER = 0
    INTERIOR = 1
    UPPER = 2


class LocalSolveError(RuntimeError):
    """The local phase-field equation could not be solved."""

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points


@dataclass(frozen=True)
class PointState:
    phi: float
    phi_old: float
    d_local: float
    psi_plus: float
    clamped: Clamp
    d_hat: float | None = None


def local_residual(phi, psi_plus, d, model: FractureModel, alpha):
    """Value and phi-derivative of the local equation."""
    _, dg, ddg = degradation(phi, model)
    _, dw, ddw = dissipation(phi, model)
    k = model.local_coeff
    f = dg * psi_plus + k * dw + alpha * (phi - d)
    df = ddg * psi_plus + k * ddw + alpha
    return f, df


def _closed_form_root(psi, d, model, alpha):
    k = model.local_coeff
    if model.kind is ModelKind.AT1:
        return (2.0 * psi + alpha * d - k) / (2.0 * psi + alpha)
    return (2.0 * psi + alpha * d) / (2.0 * psi + alpha + 2.0 * k)


def _residual_only(phi, psi, d, model, alpha):
    _, dg, _ = degradation(phi, model)
    _, dw, _ = dissipation(phi, model)
    return dg * psi + model.local_coeff * dw + alpha * (phi - d)


def _quasi_brittle(psi, d, phi_old, model, alpha):
    n = psi.shape[0]
    phi = phi_old.copy()
    clamp = np.full(n, Clamp.LOWER, dtype=np.int8)
    f0 = _residual_only(phi_old, psi, d, model, alpha)
    # f(phi_old) >= 0: phi_old is already a constrained minimiser
    clamp[f0 == 0.0] = Clamp.INTERIOR
    active = np.flatnonzero(f0 < 0.0)
    if active.size == 0:
        return phi, clamp

    pa, da, lo0 = psi[active], d[active], phi_old[active]
    t = np.linspace(0.0, 1.0, SCAN_INTERVALS + 1)
    grid = lo0[:, None] + (1.0 - lo0[:, None]) * t[None, :]
    grid[:, -1] = 1.0
    fg = _residual_only(grid, pa[:, None], da[:, None], model, alpha)
    nonneg = fg >= 0.0
    has_root = nonneg.any(axis=1)

    upper = active[~has_root]
    phi[upper] = 1.0
    clamp[upper] = Clamp.UPPER

    sel = np.flatnonzero(has_root)
    if sel.size == 0:
        return phi, clamp
    idx = active[sel]
    k = np.argmax(nonneg[sel], axis=1)  # first grid point with f >= 0, k >= 1
    a = grid[sel, k - 1]
    b = grid[sel, k]
    ps, ds = pa[sel], da[sel]
    x = np.clip(np.maximum(lo0[sel], ds), a, b)
    x = np.where((x <= a) | (x >= b), 0.5 * (a + b), x)
    done = np.zeros(sel.size, dtype=bool)
    for _ in range(MAX_ITERS):
        f, df = local_residual(x, ps, ds, model, alpha)
        neg = f < 0.0
        a = np.where(neg, x, a)
        b = np.where(neg, b, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = x - f / df
        bad = ~np.isfinite(x_new) | (x_new <= a) | (x_new >= b) | (df <= 0.0)
        x_new = np.where(bad, 0.5 * (a + b), x_new)
        step = np.abs(x_new - x)
        done = (step < NEWTON_TOL) | (b - a < NEWTON_TOL) | (f == 0.0)
        x = np.where(f == 0.0, x, x_new)
        if done.all():
            break
    else:
        worst = int(np.argmax(~done))
        f, _ = local_residual(x, ps, ds, model, alpha)
        raise LocalSolveError(
            f"quasi-brittle local solve did not converge in {MAX_ITERS} iterations "
            f"(point {int(idx[worst])}: psi+={ps[worst]:.6e}, d={ds[worst]:.6e}, "
            f"residual={f[worst]:.3e})",
            points=idx[~done],
        )
    phi[idx] = np.clip(x, lo0[sel], 1.0)
    clamp[idx] = Clamp.INTERIOR
    return phi, clamp


def solve_local_array(psi_plus, d, phi_old, model: FractureModel, alpha):
    """Vectorised local solve.

    Returns
    -------
    phi : ndarray
        Constrained local phase-field, ``phi_old <= phi <= 1``.
    clamp : ndarray of int8
        :class:`Clamp` code per point.
    """
    psi = np.atleast_1d(np.asarray(psi_plus, dtype=float))
    d = np.broadcast_to(np.asarray(d, dtype=float), psi.shape)
    phi_old = np.broadcast_to(np.asarray(phi_old, dtype=float), psi.shape)
    if np.any(psi < 0.0):
        raise LocalSolveError("negative driving energy")
    if np.any(phi_old < 0.0) or np.any(phi_old > 1.0):
        raise LocalSolveError("phi_old outside [0, 1]")
    if not alpha > 0:
        raise LocalSolveError(f"alpha must be positive, got {alpha}")
    if not np.all(np.isfinite(d)):
        raise LocalSolveError("non-finite micromorphic value")

    if model.kind is ModelKind.QUASI_BRITTLE:
        return _quasi_brittle(psi.ravel(), d.ravel(), phi_old.ravel().copy(), model, alpha)

    root = _closed_form_root(psi, d, model, alpha)
    clamp = np.full(psi.shape, Clamp.INTERIOR, dtype=np.int8)
    clamp[root < phi_old] = Clamp.LOWER
    clamp[root > 1.0] = Clamp.UPPER
    phi = np.minimum(np.maximum(root, phi_old), 1.0)
    return phi, clamp


def solve_local(psi_plus, d_value, phi_old, model: FractureModel, alpha) -> PointState:
    """Solve the local equation at one point."""
    phi, clamp = solve_local_array(psi_plus, d_value, phi_old, model, alpha)
    return PointState(
        phi=float(phi[0]),
        phi_old=float(phi_old),
        d_local=float(d_value),
        psi_plus=float(psi_plus),
        clamped=Clamp(int(clamp[0])),
    )


def solve_local_extrapolated(psi_plus, d_hat, phi_old, model: FractureModel, alpha) -> float:
    """phi_hat for the momentum balance: the same local solve driven by d_hat."""
    return solve_local(psi_plus, d_hat, phi_old, model, alpha).phi


def sensitivities_array(phi, clamp, psi_plus, model: FractureModel, alpha):
    """``(dphi/dpsi+, dphi/dd)`` by implicit differentiation of the local equation.

    Clamped points have zero sensitivities.
    """
    phi = np.asarray(phi, dtype=float)
    interior = np.asarray(clamp) == Clamp.INTERIOR
    _, dg, ddg = degradation(phi, model)
    _, _, ddw = dissipation(phi, model)
    J = ddg * psi_plus + model.local_coeff * ddw + alpha
    if np.any(J[interior] <= 0.0):
        bad = np.flatnonzero(interior & (J <= 0.0))
        raise LocalSolveError(
            f"local equation lost solvability (dF/dphi <= 0) at {bad.size} point(s)",
            points=bad,
        )
    safe = np.where(interior, J, 1.0)
    dphi_dpsi = np.where(interior, -dg / safe, 0.0)
    dphi_dd = np.where(interior, alpha / safe, 0.0)
    return dphi_dpsi, dphi_dd


def sensitivities(state: PointState, model: FractureModel, alpha):
    a, b = sensitivities_array(
        np.array([state.phi]), np.array([state.clamped]), np.array([state.psi_plus]), model, alpha
    )
    return float(a[0]), float(b[0])


def extrapolate_d(d_prev, d_curr, ratio: float) -> np.ndarray:
    """Linear extrapolation ``d_curr + ratio (d_curr - d_prev)``."""
    d_prev = np.asarray(d_prev, dtype=float)
    d_curr = np.asarray(d_curr, dtype=float)
    if d_prev.shape != d_curr.shape:
        raise ValueError(f"length mismatch: {d_prev.shape} vs {d_curr.shape}")
    if ratio < 0:
        raise ValueError(f"step ratio must be non-negative, got {ratio}")
    return d_curr + ratio * (d_curr - d_prev)
