"""Amor volumetric/deviatoric split and phase-field model functions.

Strains and stresses use 6-component Voigt vectors ordered
``(xx, yy, zz, xy, yz, xz)`` with engineering shear strains.  Plane strain
is represented by zero out-of-plane strain components, so the trace is the
full 3D trace.  Every function broadcasts over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "ElasticParams",
    "ModelKind",
    "Softening",
    "SOFTENING_PARAMS",
    "FractureModel",
    "StrainState",
    "SplitEnergies",
    "ConstitutiveError",
    "P_VOL",
    "P_DEV",
    "VOIGT_I",
    "strain_state",
    "amor_split",
    "elastic_tangent",
    "material_tangent",
    "isotropic_stiffness",
    "degradation",
    "dissipation",
    "compute_a1",
    "plane_to_voigt",
    "PLANE_IDX",
]


class ConstitutiveError(ValueError):
    pass


VOIGT_I = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])

P_VOL = np.zeros((6, 6))
P_VOL[:3, :3] = 1.0

# Symmetric deviatoric projector for engineering-shear Voigt strains.
P_DEV = np.zeros((6, 6))
P_DEV[:3, :3] = -1.0 / 3.0
P_DEV[[0, 1, 2], [0, 1, 2]] = 2.0 / 3.0
P_DEV[[3, 4, 5], [3, 4, 5]] = 0.5

# Rows of the 6-vector kept by the in-plane 3-vector (xx, yy, xy).
PLANE_IDX = np.array([0, 1, 3])


def plane_to_voigt(eps3: np.ndarray) -> np.ndarray:
    """Embed in-plane ``(exx, eyy, gxy)`` into the 6-component plane-strain vector."""
    eps3 = np.asarray(eps3, dtype=float)
    out = np.zeros(eps3.shape[:-1] + (6,))
    out[..., PLANE_IDX] = eps3
    return out


@dataclass(frozen=True)
class ElasticParams:
    E0: float
    nu: float

    def __post_init__(self):
        if not self.E0 > 0:
            raise ConstitutiveError(f"E0 must be positive, got {self.E0}")
        if not -1.0 < self.nu < 0.5:
            raise ConstitutiveError(f"nu must lie in (-1, 0.5), got {self.nu}")

    @property
    def K(self) -> float:
        return self.E0 / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def mu(self) -> float:
        return self.E0 / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        return self.E0 * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))


class ModelKind(str, Enum):
    AT1 = "AT1"
    AT2 = "AT2"
    QUASI_BRITTLE = "QuasiBrittle"


class Softening(str, Enum):
    LINEAR = "Linear"
    EXPONENTIAL = "Exponential"
    CORNELISSEN = "Cornelissen"


# (p, a2, a3) per traction-separation law
SOFTENING_PARAMS = {
    Softening.LINEAR: (2.0, -0.5, 0.0),
    Softening.EXPONENTIAL: (2.5, 2.0 ** (5.0 / 3.0) - 3.0, 0.0),
    Softening.CORNELISSEN: (2.0, 1.3868, 0.6567),
}

_C_W = {ModelKind.AT1: 8.0 / 3.0, ModelKind.AT2: 2.0, ModelKind.QUASI_BRITTLE: math.pi}


def compute_a1(elas: ElasticParams, Gc: float, l: float, ft: float) -> float:
    """Quasi-brittle coefficient ``4 E0 Gc / (pi l ft^2)``."""
    for name, value in (("Gc", Gc), ("l", l), ("ft", ft)):
        if not value > 0:
            raise ConstitutiveError(f"{name} must be positive, got {value}")
    return 4.0 * elas.E0 * Gc / (math.pi * l * ft**2)


@dataclass(frozen=True)
class FractureModel:
    """Phase-field model family with its regularisation constants.

    Use :meth:`brittle` or :meth:`quasi_brittle` rather than filling the
    softening coefficients by hand.
    """

    kind: ModelKind
    Gc: float
    l: float
    softening: Softening | None = None
    ft: float | None = None
    p: float = 2.0
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if not self.Gc > 0:
            raise ConstitutiveError(f"Gc must be positive, got {self.Gc}")
        if not self.l > 0:
            raise ConstitutiveError(f"l must be positive, got {self.l}")
        if self.kind is ModelKind.QUASI_BRITTLE:
            if self.softening is None or self.ft is None:
                raise ConstitutiveError("QuasiBrittle needs a softening law and ft")
            object.__setattr__(self, "softening", Softening(self.softening))
            if not self.a1 > 0:
                raise ConstitutiveError(f"a1 must be positive, got {self.a1}")
        elif self.softening is not None:
            raise ConstitutiveError(f"softening law is only valid for QuasiBrittle, not {self.kind.value}")

    @classmethod
    def brittle(cls, kind, Gc: float, l: float) -> "FractureModel":
        kind = ModelKind(kind)
        if kind is ModelKind.QUASI_BRITTLE:
            raise ConstitutiveError("use FractureModel.quasi_brittle for QuasiBrittle")
        return cls(kind, Gc, l)

    @classmethod
    def quasi_brittle(cls, Gc, l, ft, elas: ElasticParams, softening=Softening.CORNELISSEN):
        softening = Softening(softening)
        p, a2, a3 = SOFTENING_PARAMS[softening]
        a1 = compute_a1(elas, Gc, l, ft)
        return cls(ModelKind.QUASI_BRITTLE, Gc, l, softening, ft, p, a1, a2, a3)

    @property
    def c_w(self) -> float:
        return _C_W[self.kind]

    @property
    def local_coeff(self) -> float:
        """Gc / (c_w l), the weight of w'(phi) in the local equation."""
        return self.Gc / (self.c_w * self.l)

    @property
    def gradient_coeff(self) -> float:
        """2 Gc l / c_w, the diffusivity of the micromorphic field."""
        return 2.0 * self.Gc * self.l / self.c_w


@dataclass(frozen=True)
class StrainState:
    eps: np.ndarray
    trace: np.ndarray
    dev: np.ndarray


@dataclass(frozen=True)
class SplitEnergies:
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    sigma_plus: np.ndarray
    sigma_minus: np.ndarray


def strain_state(eps) -> StrainState:
    eps = np.asarray(eps, dtype=float)
    if eps.shape[-1] != 6:
        raise ConstitutiveError(f"expected 6-component Voigt strain, got shape {eps.shape}")
    tr = eps[..., 0] + eps[..., 1] + eps[..., 2]
    dev = eps - tr[..., None] * VOIGT_I / 3.0
    return StrainState(eps, tr, dev)


def amor_split(eps, elas: ElasticParams) -> SplitEnergies:
    """Tensile/compressive energies and stresses of the Amor split.

    ``eps`` is a :class:`StrainState` or a raw Voigt strain array.  The
    positive volumetric branch is active for ``tr >= 0``.
    """
    st = eps if isinstance(eps, StrainState) else strain_state(eps)
    tr = st.trace
    pos = tr >= 0.0
    tr_pos = np.where(pos, tr, 0.0)
    tr_neg = np.where(pos, 0.0, tr)
    dev = st.dev
    # tensor contraction dev:dev, engineering shears carry a factor 1/2
    dev_dev = np.sum(dev[..., :3] ** 2, axis=-1) + 0.5 * np.sum(dev[..., 3:] ** 2, axis=-1)
    K, mu = elas.K, elas.mu
    psi_plus = 0.5 * K * tr_pos**2 + mu * dev_dev
    psi_minus = 0.5 * K * tr_neg**2
    dev_stress = 2.0 * mu * dev
    dev_stress[..., 3:] *= 0.5
    sigma_plus = K * tr_pos[..., None] * VOIGT_I + dev_stress
    sigma_minus = K * tr_neg[..., None] * VOIGT_I
    return SplitEnergies(psi_plus, psi_minus, sigma_plus, sigma_minus)


def isotropic_stiffness(elas: ElasticParams) -> np.ndarray:
    """Undegraded 6x6 isotropic stiffness in Lame form."""
    lam, mu = elas.lam, elas.mu
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[[0, 1, 2], [0, 1, 2]] += 2.0 * mu
    C[[3, 4, 5], [3, 4, 5]] = mu
    return C


def material_tangent(eps, g, elas: ElasticParams) -> np.ndarray:
    """Amor-split tangent ``g (K H+ P_vol + 2 mu P_dev) + K H- P_vol`` for a given g."""
    st = eps if isinstance(eps, StrainState) else strain_state(eps)
    pos = (st.trace >= 0.0).astype(float)[..., None, None]
    g = np.asarray(g, dtype=float)[..., None, None]
    K, mu = elas.K, elas.mu
    return g * (K * pos * P_VOL + 2.0 * mu * P_DEV) + K * (1.0 - pos) * P_VOL


def elastic_tangent(eps, phi_hat, model: "FractureModel", elas: ElasticParams) -> np.ndarray:
    """6x6 material stiffness degraded with ``g(phi_hat)``."""
    g, _, _ = degradation(phi_hat, model)
    return material_tangent(eps, g, elas)


def _check_phi(phi):
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0.0) or np.any(phi > 1.0) or np.any(~np.isfinite(phi)):
        raise ConstitutiveError("phase-field value outside [0, 1]")
    return phi


def degradation(phi, model: FractureModel):
    """Degradation function and its first two derivatives, ``(g, g', g'')``."""
    phi = _check_phi(phi)
    one_m = 1.0 - phi
    if model.kind is not ModelKind.QUASI_BRITTLE:
        return one_m**2, -2.0 * one_m, np.full_like(phi, 2.0)
    p, a1, a2, a3 = model.p, model.a1, model.a2, model.a3
    num = one_m**p
    dnum = -p * one_m ** (p - 1.0)
    ddnum = p * (p - 1.0) * one_m ** (p - 2.0) if p != 2.0 else np.full_like(phi, 2.0)
    poly = a1 * phi + a1 * a2 * phi**2 + a1 * a2 * a3 * phi**3
    dpoly = a1 + 2.0 * a1 * a2 * phi + 3.0 * a1 * a2 * a3 * phi**2
    ddpoly = 2.0 * a1 * a2 + 6.0 * a1 * a2 * a3 * phi
    Q = num + poly
    dQ = dnum + dpoly
    ddQ = ddnum + ddpoly
    g = num / Q
    dg = (dnum * Q - num * dQ) / Q**2
    ddg = (ddnum * Q - num * ddQ) / Q**2 - 2.0 * dQ * (dnum * Q - num * dQ) / Q**3
    return g, dg, ddg


def dissipation(phi, model: FractureModel):
    """Local dissipation ``(w, w', w'')``."""
    phi = _check_phi(phi)
    if model.kind is ModelKind.AT1:
        return phi.copy(), np.ones_like(phi), np.zeros_like(phi)
    if model.kind is ModelKind.AT2:
        return phi**2, 2.0 * phi, np.full_like(phi, 2.0)
    return 2.0 * phi - phi**2, 2.0 - 2.0 * phi, np.full_like(phi, -2.0)
