"""Fast self-checks against independent oracles, used by ``microfrac verify``."""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .assembly import Assembler, Mode
from .constitutive import (
    P_DEV,
    P_VOL,
    ElasticParams,
    FractureModel,
    ModelKind,
    Softening,
    amor_split,
    compute_a1,
    degradation,
)
from .local_pf import _residual_only, solve_local_array
from .mesh import generate_sent_mesh

__all__ = ["CHECKS", "run_checks"]


def _bisect_root(psi, d, phi_old, model, alpha):
    f = lambda x: float(_residual_only(np.array(x), psi, d, model, alpha))  # noqa: E731
    if f(phi_old) >= 0:
        return phi_old
    grid = np.linspace(phi_old, 1.0, 33)
    for a, b in zip(grid[:-1], grid[1:]):
        if f(b) >= 0:
            return brentq(f, a, b, xtol=1e-14, rtol=1e-14)
    return 1.0


def check_local_solve(n=500, seed=0):
    rng = np.random.default_rng(seed)
    elas = ElasticParams(2e4, 0.2)
    models = [
        FractureModel.brittle("AT1", 2.7, 0.015),
        FractureModel.brittle("AT2", 2.7, 0.015),
        FractureModel.quasi_brittle(0.113, 2.5, 2.4, elas, Softening.CORNELISSEN),
    ]
    worst = 0.0
    for model in models:
        alpha = 10 ** rng.uniform(1, 3) * model.Gc / model.l
        psi = 10 ** rng.uniform(-6, 3, n) * model.local_coeff
        d = rng.uniform(-0.1, 1.1, n)
        old = rng.uniform(0, 1, n) * (rng.random(n) < 0.5)
        phi, _ = solve_local_array(psi, d, old, model, alpha)
        ref = np.array([_bisect_root(*args, model, alpha) for args in zip(psi, d, old)])
        worst = max(worst, float(np.max(np.abs(phi - ref))))
    return worst < 1e-8, f"max |phi - bisection| = {worst:.2e}"


def check_projectors():
    # composition of strain-to-stress-like maps goes through the
    # engineering-shear metric W
    W = np.diag([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
    err = max(
        np.abs((P_VOL / 3.0) @ (P_VOL / 3.0) - P_VOL / 3.0).max(),
        np.abs(P_DEV @ W @ P_DEV - P_DEV).max(),
        np.abs(P_DEV @ np.array([1.0, 1, 1, 0, 0, 0])).max(),
    )
    return err < 1e-12, f"projector identity error = {err:.1e}"


def check_split_gradient(seed=1):
    rng = np.random.default_rng(seed)
    elas = ElasticParams(210e3, 0.3)
    worst = 0.0
    for _ in range(20):
        eps = rng.normal(scale=1e-3, size=6)
        s = amor_split(eps, elas)
        h = 1e-7
        for which, sig in (("psi_plus", s.sigma_plus), ("psi_minus", s.sigma_minus)):
            fd = np.array([
                (getattr(amor_split(eps + h * e, elas), which) - getattr(amor_split(eps - h * e, elas), which)) / (2 * h)
                for e in np.eye(6)
            ])
            worst = max(worst, float(np.max(np.abs(fd - sig)) / (np.max(np.abs(sig)) + 1e-12)))
    return worst < 1e-5, f"max relative stress/FD mismatch = {worst:.1e}"


def check_a1():
    a_l = compute_a1(ElasticParams(2e4, 0.18), 0.130, 10.0, 2.5)
    a_t = compute_a1(ElasticParams(2e4, 0.2), 0.113, 2.5, 2.4)
    ok = abs(a_l - 52.97) <= 0.01 and abs(a_t - 199.83) <= 0.01
    return ok, f"a1 = {a_l:.3f} (L-panel), {a_t:.3f} (TPB)"


def check_degradation():
    grid = np.linspace(0, 1, 1001)
    elas = ElasticParams(2e4, 0.2)
    models = [FractureModel.brittle(k, 1.0, 1.0) for k in (ModelKind.AT1, ModelKind.AT2)]
    models += [FractureModel.quasi_brittle(0.113, 2.5, 2.4, elas, s) for s in Softening]
    ok = all(np.all(np.diff(degradation(grid, m)[0]) < 0) for m in models)
    return ok, "g strictly decreasing on [0, 1] for all models"


def check_tangent(seed=2):
    """J*v against central differences of the internal force.

    Problem 5 deliberately leaves the strain dependence of phi_hat out of
    its tangent, so its residual is differenced with phi_hat frozen.
    """
    rng = np.random.default_rng(seed)
    mesh = generate_sent_mesh(0.25, refine=1)
    elas = ElasticParams(210e3, 0.3)
    model = FractureModel.brittle("AT2", 2.7, 0.1)
    n = mesh.n_nodes
    worst = 0.0
    for mode in Mode:
        asm = Assembler(mesh, elas, model, 100 * model.Gc / model.l, mode)
        u = rng.normal(scale=1e-3, size=2 * n)
        d = rng.uniform(0.1, 0.4, n)
        phi_old = np.zeros(mesh.n_elements)
        d_hat = d + 0.01 if mode is Mode.PROBLEM5 else None
        sys = asm.assemble(u, d, phi_old, d_hat)
        frozen = sys.points.phi_hat if mode is Mode.PROBLEM5 else None
        v = rng.normal(size=3 * n)
        v[: 2 * n] *= 1e-3
        x = np.concatenate([u, d])
        h = 1e-6

        def f(z):
            return asm.internal_force(z[: 2 * n], z[2 * n:], phi_old, d_hat, phi_hat=frozen)

        fd = (f(x + h * v) - f(x - h * v)) / (2 * h)
        jv = sys.K @ v
        worst = max(worst, float(np.linalg.norm(fd - jv) / np.linalg.norm(jv)))
    return worst < 1e-4, f"max relative J*v vs FD mismatch = {worst:.1e}"


CHECKS = {
    "local solve vs bisection": check_local_solve,
    "projector identities": check_projectors,
    "split stresses vs energy gradient": check_split_gradient,
    "a1 coefficients": check_a1,
    "degradation monotone": check_degradation,
    "global tangent vs finite differences": check_tangent,
}


def run_checks(stream=None) -> bool:
    ok_all = True
    for name, fn in CHECKS.items():
        ok, msg = fn()
        ok_all &= ok
        if stream is not None:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {msg}", file=stream)
    return ok_all
