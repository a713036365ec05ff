"""One implicit step of the mass-constrained obstacle Allen-Cahn inequality.

Given phi_old, the new phase field minimises over the box |phi_i| <= 1 and
the lumped mass constraint (phi, 1)^h = m |Omega| the quadratic

    1/2 phi.M phi - r.phi

with

    M = (eps/tau - alpha_hat/eps) W + alpha_hat eps K_B(phi_old)
    r = (eps/tau) W phi_old + beta * sens

where W is the lumped mass and K_B the stiffness matrix weighted by the
anisotropy linearisation B(grad phi_old), frozen per element.  The mass
constraint is handled by a scalar multiplier mu subtracted from the right
side (r - mu w); mu is found by a bracketed secant search and each inner
box-constrained problem is solved by projected Gauss-Seidel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np
import scipy.sparse as sp

from .anisotropy import Anisotropy, a_eval, bgn_matrix, one_sided_matrices
from .errors import InnerNotConverged, SecantStalled, StepsizeTooLarge
from .mesh import FeMesh, element_gradients

__all__ = [
    "PhaseState",
    "ViProblem",
    "ViSolution",
    "EnergyReport",
    "assemble_vi",
    "anisotropic_stiffness",
    "KinkRelaxation",
    "step_functional",
    "safeguard_step",
    "solve_vi",
    "projected_gauss_seidel",
    "gl_energy",
    "gl_energy_density",
    "optimal_profile",
    "equipartition_residual",
    "psi0",
]

MAX_SWEEPS = 100_000
MAX_DOUBLINGS = 60


def psi0(s):
    """Smooth part of the double obstacle potential, (1 - s^2)/2."""
    return 0.5 * (1.0 - np.asarray(s) ** 2)


@dataclass
class PhaseState:
    phi: np.ndarray
    n: int = 0
    t: float = 0.0


@dataclass
class ViProblem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    weights: np.ndarray  # lumped mass
    alpha_hat: float = 0.0
    eps: float = 1.0

    @property
    def diag(self) -> np.ndarray:
        return self.matrix.diagonal()


class ViSolution(NamedTuple):
    phi: np.ndarray
    multiplier: float
    sweeps: int


@dataclass
class EnergyReport:
    step: int
    t: float
    e_gl: float
    compliance: float
    j_total: float
    mass: float
    multiplier: float = 0.0
    inner_iters: int = 0

    def line(self) -> str:
        return (
            f"step={self.step} t={self.t:.6g} E_gl={self.e_gl:.9g} "
            f"compliance={self.compliance:.9g} J={self.j_total:.9g} mass={self.mass:.12g}"
        )


class _ScalarPattern:
    def __init__(self, mesh: FeMesh):
        n = mesh.n_nodes
        rows = np.repeat(mesh.elements, 3, axis=1).ravel()
        cols = np.tile(mesh.elements, (1, 3)).ravel()
        uniq, self.scatter = np.unique(rows * n + cols, return_inverse=True)
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.searchsorted(uniq // n, np.arange(n + 1)).astype(np.int32)
        self.n = n


def _scalar_pattern(mesh: FeMesh) -> _ScalarPattern:
    if "scalar" not in mesh.cache:
        mesh.cache["scalar"] = _ScalarPattern(mesh)
    return mesh.cache["scalar"]


class KinkRelaxation:
    """Relaxed branch selection for the frozen linearisation.

    The convex overhang densities have a kink on the cone boundary and the
    facets of their Wulff shapes sit exactly on it.  Freezing B on one side
    of the kink makes such elements flip between the two formulas from step
    to step.  Here each element keeps a weight theta in [0, 1] and uses

        B = theta * B_upper + (1 - theta) * B_cone,

    where theta relaxes towards the indicator of the current branch with
    rate ``omega``.  Elements that stay on one branch converge to the plain
    matrix; elements that keep crossing settle at a mixture, which is a
    subgradient selection on the kink.  ``omega = 1`` is the plain choice.
    """

    def __init__(self, omega: float = 0.1):
        if not 0.0 < omega <= 1.0:
            raise ValueError("omega must lie in (0, 1]")
        self.omega = omega
        self.theta: np.ndarray | None = None

    def matrices(self, aniso: Anisotropy, grads: np.ndarray) -> np.ndarray:
        if aniso.kind == "isotropic":
            return bgn_matrix(aniso, grads)
        b_up, b_cone, in_cone = one_sided_matrices(aniso, grads)
        target = np.where(in_cone, 0.0, 1.0)
        if self.theta is None or self.theta.shape != target.shape:
            self.theta = target
        else:
            self.theta = (1.0 - self.omega) * self.theta + self.omega * target
        th = self.theta[:, None, None]
        out = th * b_up + (1.0 - th) * b_cone
        zero = (grads == 0.0).all(axis=1)
        if zero.any():
            out[zero] = bgn_matrix(aniso, np.zeros(2))
        return out


def anisotropic_stiffness(
    mesh: FeMesh, aniso: Anisotropy, phi_old: np.ndarray, relax: KinkRelaxation | None = None
) -> sp.csr_matrix:
    """sum_e |e| G_e B(grad phi_old|_e) G_e^T with G_e the hat gradients."""
    grads = mesh.basis_gradients
    q = element_gradients(mesh, phi_old)
    b = bgn_matrix(aniso, q) if relax is None else relax.matrices(aniso, q)
    ke = mesh.areas[:, None, None] * np.einsum("eid,edf,ejf->eij", grads, b, grads)
    ke = 0.5 * (ke + ke.transpose(0, 2, 1))
    pat = _scalar_pattern(mesh)
    data = np.bincount(pat.scatter, weights=ke.ravel(), minlength=len(pat.indices))
    return sp.csr_matrix((data, pat.indices, pat.indptr), shape=(pat.n, pat.n))


def assemble_vi(
    mesh: FeMesh,
    aniso: Anisotropy,
    params,
    prev: PhaseState | np.ndarray,
    sens: np.ndarray | None = None,
    relax: KinkRelaxation | None = None,
) -> ViProblem:
    """Build the step operator from ``params`` (eps, tau, alpha_hat, beta)."""
    phi_old = prev.phi if isinstance(prev, PhaseState) else np.asarray(prev, dtype=float)
    eps, tau, ahat = params.eps, params.tau, params.alpha_hat
    c = eps / tau - ahat / eps
    if not c > 0.0:
        raise StepsizeTooLarge(
            f"eps/tau - alpha_hat/eps = {c:.4g} <= 0; need tau < eps^2/alpha_hat = {eps * eps / ahat:.4g}"
        )
    w = mesh.lumped_mass
    mat = (ahat * eps) * anisotropic_stiffness(mesh, aniso, phi_old, relax)
    mat = (mat + sp.diags(c * w)).tocsr()
    mat.sort_indices()
    rhs = (eps / tau) * w * phi_old
    if sens is not None:
        rhs = rhs + params.beta * np.asarray(sens, dtype=float)
    return ViProblem(mat, rhs, w, alpha_hat=ahat, eps=eps)


@numba.njit(cache=True)
def _pgs_kernel(indptr, indices, data, rhs, phi, tol, max_sweeps):
    n = rhs.shape[0]
    for sweep in range(max_sweeps):
        dmax = 0.0
        for i in range(n):
            s = rhs[i]
            d = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j == i:
                    d = data[k]
                else:
                    s -= data[k] * phi[j]
            v = s / d
            if v > 1.0:
                v = 1.0
            elif v < -1.0:
                v = -1.0
            inc = abs(v - phi[i])
            if inc > dmax:
                dmax = inc
            phi[i] = v
        if dmax < tol:
            return sweep + 1
    return -1


def projected_gauss_seidel(
    matrix: sp.csr_matrix, rhs: np.ndarray, phi: np.ndarray, tol: float, max_sweeps: int = MAX_SWEEPS
) -> int:
    """Solve min 1/2 x.Mx - rhs.x over [-1,1]^n in place; returns sweeps."""
    sweeps = _pgs_kernel(
        matrix.indptr, matrix.indices, matrix.data, np.ascontiguousarray(rhs, dtype=float), phi, tol, max_sweeps
    )
    if sweeps < 0:
        raise InnerNotConverged(f"projected Gauss-Seidel did not reach {tol:g} in {max_sweeps} sweeps")
    return sweeps


def solve_vi(
    p: ViProblem,
    m_target: float,
    tol: float = 1e-12,
    mass_tol: float | None = None,
    phi0: np.ndarray | None = None,
    max_sweeps: int = MAX_SWEEPS,
    mu_start: float | None = None,
) -> ViSolution:
    """Mass-constrained solve; returns the new field and its multiplier.

    ``m_target`` is the mean value, so the constraint reads
    sum_i w_i phi_i = m_target * sum_i w_i.  The multiplier search starts
    from 0 and ``mu_start`` (default (alpha_hat/eps) m, the multiplier of
    the constant state).
    """
    if np.any(p.diag <= 0.0):
        raise StepsizeTooLarge("VI operator has a non-positive diagonal entry")
    w = p.weights
    vol = float(w.sum())
    target = m_target * vol
    mass_tol = 1e-8 * vol if mass_tol is None else mass_tol
    phi = np.clip(np.full(len(w), m_target) if phi0 is None else np.array(phi0, dtype=float), -1.0, 1.0)
    total = 0

    def residual(mu: float) -> float:
        nonlocal total
        total += projected_gauss_seidel(p.matrix, p.rhs - mu * w, phi, tol, max_sweeps)
        return float(w @ phi) - target

    def done(mu):
        return ViSolution(phi.copy(), float(mu), total)

    mu1 = p.alpha_hat / p.eps * m_target if mu_start is None else mu_start
    mu0 = 0.0 if mu1 != 0.0 else -1.0
    f1 = residual(mu1)
    if abs(f1) <= mass_tol:
        return done(mu1)
    f0 = residual(mu0)
    if abs(f0) <= mass_tol:
        return done(mu0)

    # the mass is non-increasing in mu: expand until the signs differ
    lo, hi = (mu0, mu1) if mu0 < mu1 else (mu1, mu0)
    flo, fhi = (f0, f1) if mu0 < mu1 else (f1, f0)
    span = max(hi - lo, 1.0)
    for _ in range(MAX_DOUBLINGS):
        if flo > 0.0 > fhi:
            break
        span *= 2.0
        if fhi > 0.0:
            lo, flo = hi, fhi
            hi = hi + span
            fhi = residual(hi)
            if abs(fhi) <= mass_tol:
                return done(hi)
        else:
            hi, fhi = lo, flo
            lo = lo - span
            flo = residual(lo)
            if abs(flo) <= mass_tol:
                return done(lo)
    else:
        raise SecantStalled(f"no sign change of the mass defect after {MAX_DOUBLINGS} doublings")

    # Illinois-modified secant inside the bracket
    side = 0
    for _ in range(400):
        mu = hi - fhi * (hi - lo) / (fhi - flo)
        if not lo < mu < hi:
            mu = 0.5 * (lo + hi)
        f = residual(mu)
        if abs(f) <= mass_tol:
            return done(mu)
        if f > 0.0:
            lo, flo = mu, f
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = mu, f
            if side == 1:
                flo *= 0.5
            side = 1
        if hi - lo <= 1e-15 * max(1.0, abs(lo), abs(hi)):
            break
    raise SecantStalled(f"mass defect {f:.3e} above tolerance {mass_tol:.1e} after secant search")


def step_functional(mesh: FeMesh, aniso: Anisotropy, params, phi, phi_old, sens=None) -> float:
    """Functional whose constrained minimiser is the fully implicit step.

    alpha_hat E_gl(phi) + eps/(2 tau) |phi - phi_old|_h^2 - beta (sens, phi)
    """
    d = phi - phi_old
    val = params.alpha_hat * gl_energy(mesh, aniso, params.eps, phi)
    val += params.eps / (2.0 * params.tau) * float(mesh.lumped_mass @ (d * d))
    if sens is not None:
        val -= params.beta * float(np.dot(sens, phi))
    return val


def safeguard_step(
    mesh: FeMesh, aniso: Anisotropy, params, phi_old, phi_new, sens=None, min_factor: float = 2.0**-20
) -> tuple[np.ndarray, float]:
    """Backtrack along phi_old -> phi_new until the step functional does not grow.

    The linearised step is a descent direction for the step functional, so
    some factor s in (0, 1] is accepted; convex combinations keep the box
    and the mass.  Returns the accepted field and s (0 if none was found).
    """
    f0 = step_functional(mesh, aniso, params, phi_old, phi_old, sens)
    d = phi_new - phi_old
    s = 1.0
    while s >= min_factor:
        cand = phi_new if s == 1.0 else phi_old + s * d
        if step_functional(mesh, aniso, params, cand, phi_old, sens) <= f0:
            return cand, s
        s *= 0.5
    return phi_old.copy(), 0.0


def gl_energy_density(mesh: FeMesh, aniso: Anisotropy, eps: float, phi: np.ndarray) -> np.ndarray:
    """Per-element gradient part eps*A(grad phi)*|e| (no potential)."""
    return eps * a_eval(aniso, element_gradients(mesh, phi)) * mesh.areas


def gl_energy(mesh: FeMesh, aniso: Anisotropy, eps: float, phi) -> float:
    """(eps A(grad phi) + Psi0(phi)/eps, 1)^h."""
    phi = np.asarray(phi, dtype=float)
    grad_part = gl_energy_density(mesh, aniso, eps, phi).sum()
    return float(grad_part + (mesh.lumped_mass @ psi0(phi)) / eps)


def optimal_profile(s):
    """Clamped sine: -1 below -pi/2, sin(s) in between, 1 above pi/2."""
    out = np.sin(np.clip(s, -0.5 * math.pi, 0.5 * math.pi))
    return float(out) if np.ndim(out) == 0 else out


def equipartition_residual(s):
    """1/2 psi'(s)^2 - Psi0(psi(s)) on the smooth branch |s| < pi/2."""
    return 0.5 * np.cos(s) ** 2 - psi0(np.sin(s))
