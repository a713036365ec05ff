"""Ersatz-material linear elasticity on P1 meshes.

The stiffness tensor interpolates between the solid tensor C1 (phi = -1)
and the soft tensor C0 = k^2 C1 (phi = +1) with the quadratic function
g(phi) = 1 - (1 - phi)^2 / 2.  Because C0 is a multiple of C1 this reduces
to a scalar factor s(phi) in front of the isotropic tensor
C1 A = 2 mu A + lam tr(A) I.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoDirichletConstraint, SolverDiverged
from .mesh import FeMesh, TagKind, boundary_quadrature

log = logging.getLogger(__name__)

__all__ = [
    "ElasticityModel",
    "LoadSpec",
    "LinearSystem",
    "h_interp",
    "stiffness_tensor_apply",
    "assemble_state",
    "solve_state",
    "pcg",
    "compliance",
    "energy_form",
    "element_strains",
    "sensitivity_density",
]


@dataclass(frozen=True)
class ElasticityModel:
    E: float = 1.0
    nu: float = 0.33
    ersatz_factor: float = 1e-2

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")
        if not 0.0 < self.ersatz_factor < 1.0:
            raise ValueError("ersatz factor must lie in (0, 1)")

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    def scale(self, phi):
        """s(phi) with C(phi) = s(phi) C1; phi is clamped to [-1, 1]."""
        p = np.clip(phi, -1.0, 1.0)
        g = 1.0 - 0.5 * (1.0 - p) ** 2
        k2 = self.ersatz_factor**2
        return 0.5 * g * (k2 - 1.0) + 0.5 * (k2 + 1.0)

    def dscale(self, phi):
        """s'(phi) = g'(phi) (k^2 - 1) / 2, never positive."""
        p = np.clip(phi, -1.0, 1.0)
        return 0.5 * (1.0 - p) * (self.ersatz_factor**2 - 1.0)

    def voigt(self) -> np.ndarray:
        mu, lam = self.mu, self.lam
        return np.array(
            [[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]]
        )


@dataclass
class LoadSpec:
    body_force: tuple[float, float] = (0.0, 0.0)
    tractions: dict = field(default_factory=dict)  # tag name -> vector or callable

    def is_zero(self) -> bool:
        if any(self.body_force):
            return False
        for g in self.tractions.values():
            if callable(g) or any(g):
                return False
        return True


def h_interp(phi):
    """Body-force switch h(phi) = (1 - phi)/2 clamped to [0, 1]."""
    return np.clip(0.5 * (1.0 - np.asarray(phi, dtype=float)), 0.0, 1.0)


def stiffness_tensor_apply(model: ElasticityModel, phi: float, strain) -> np.ndarray:
    a = np.asarray(strain, dtype=float)
    return model.scale(phi) * (2.0 * model.mu * a + model.lam * np.trace(a) * np.eye(2))


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix  # free dofs only
    rhs: np.ndarray
    free: np.ndarray  # global dof ids of the unknowns
    n_dofs: int
    load: np.ndarray  # full load vector, dof 2*i + c

    def expand(self, x: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n_dofs)
        u[self.free] = x
        return u.reshape(-1, 2)


def _strain_operator(mesh: FeMesh) -> np.ndarray:
    """(E, 3, 6) map from element dofs to Voigt strain (e11, e22, 2 e12)."""
    g = mesh.basis_gradients
    b = np.zeros((mesh.n_elements, 3, 6))
    b[:, 0, 0::2] = g[:, :, 0]
    b[:, 1, 1::2] = g[:, :, 1]
    b[:, 2, 0::2] = g[:, :, 1]
    b[:, 2, 1::2] = g[:, :, 0]
    return b


def _constrained_dofs(mesh: FeMesh) -> np.ndarray:
    fixed = set()
    for edges, _ in mesh.edges_with(TagKind.DIRICHLET_FULL):
        for n in np.unique(edges):
            fixed.update((2 * n, 2 * n + 1))
    for edges, tag in mesh.edges_with(TagKind.DIRICHLET_COMPONENT):
        for n in np.unique(edges):
            fixed.add(2 * n + tag.component - 1)
    return np.array(sorted(fixed), dtype=np.int64)


class _Pattern:
    """Reduced CSR sparsity pattern and the scatter map into it."""

    def __init__(self, mesh: FeMesh, model: ElasticityModel):
        fixed = _constrained_dofs(mesh)
        if fixed.size == 0:
            raise NoDirichletConstraint("no Dirichlet boundary: stiffness matrix is singular")
        ndof = 2 * mesh.n_nodes
        keep = np.ones(ndof, dtype=bool)
        keep[fixed] = False
        self.free = np.flatnonzero(keep)
        self.ndof = ndof
        reduced = np.full(ndof, -1, dtype=np.int64)
        reduced[self.free] = np.arange(self.free.size)

        bmat = _strain_operator(mesh)
        ke = mesh.areas[:, None, None] * np.einsum("eik,ij,ejl->ekl", bmat, model.voigt(), bmat)
        self.ke = 0.5 * (ke + ke.transpose(0, 2, 1))  # bitwise symmetric

        dofs = np.empty((mesh.n_elements, 6), dtype=np.int64)
        dofs[:, 0::2] = 2 * mesh.elements
        dofs[:, 1::2] = 2 * mesh.elements + 1
        rows = reduced[np.repeat(dofs, 6, axis=1)].ravel()
        cols = reduced[np.tile(dofs, (1, 6))].ravel()
        self.entry = np.flatnonzero((rows >= 0) & (cols >= 0))
        n = self.free.size
        keys = rows[self.entry] * n + cols[self.entry]
        uniq, self.scatter = np.unique(keys, return_inverse=True)
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.searchsorted(uniq // n, np.arange(n + 1)).astype(np.int32)
        self.n = n


def _pattern(mesh: FeMesh, model: ElasticityModel) -> _Pattern:
    key = ("elastic", model)
    if key not in mesh.cache:
        mesh.cache[key] = _Pattern(mesh, model)
    return mesh.cache[key]


def load_vector(mesh: FeMesh, loads: LoadSpec, phi: np.ndarray) -> np.ndarray:
    f = np.zeros((mesh.n_nodes, 2))
    if any(loads.body_force):
        f += (mesh.lumped_mass * h_interp(phi))[:, None] * np.asarray(loads.body_force)
    for name, g in loads.tractions.items():
        f += boundary_quadrature(mesh, name, g)
    return f.ravel()


def element_mean(mesh: FeMesh, phi: np.ndarray) -> np.ndarray:
    return phi[mesh.elements].mean(axis=1)


def assemble_state(mesh: FeMesh, model: ElasticityModel, loads: LoadSpec, phi) -> LinearSystem:
    """Stiffness matrix with C(phi) at element means, Dirichlet dofs removed."""
    pat = _pattern(mesh, model)
    s = model.scale(element_mean(mesh, np.asarray(phi, dtype=float)))
    vals = (s[:, None, None] * pat.ke).reshape(-1)[pat.entry]
    data = np.bincount(pat.scatter, weights=vals, minlength=len(pat.indices))
    mat = sp.csr_matrix((data, pat.indices, pat.indptr), shape=(pat.n, pat.n))
    load = load_vector(mesh, loads, np.asarray(phi, dtype=float))
    return LinearSystem(mat, load[pat.free], pat.free, pat.ndof, load)


def pcg(a, b: np.ndarray, x0=None, tol: float = 1e-10, maxiter: int | None = None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ||b - A x|| <= tol ||b||.  Returns ``(x, iterations)``.
    Raises SolverDiverged if the relative residual is still above
    ``1e3 * tol`` after ``maxiter`` (default ``20 n``) iterations.
    """
    n = b.shape[0]
    maxiter = 20 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    dinv = 1.0 / a.diagonal()
    r = b - a @ x
    it = 0
    while it < maxiter:
        z = dinv * r
        p = z.copy()
        rz = r @ z
        while it < maxiter and np.linalg.norm(r) > tol * bnorm:
            ap = a @ p
            step = rz / (p @ ap)
            x += step * p
            r -= step * ap
            z = dinv * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
            it += 1
        # guard against drift of the recursive residual
        r = b - a @ x
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
    rel = np.linalg.norm(r) / bnorm
    if rel > 1e3 * tol:
        raise SolverDiverged(f"PCG stalled at relative residual {rel:.3e} after {it} iterations")
    log.warning("PCG accepted relative residual %.3e above tol %.1e", rel, tol)
    return x, it


def solve_state(sys_: LinearSystem, tol: float = 1e-10, method: str = "cg", x0=None) -> np.ndarray:
    """Displacement field (N, 2) solving the assembled system.

    ``method="cg"`` runs :func:`pcg`; ``method="direct"`` factorises with
    SuperLU followed by a few steps of iterative refinement.
    """
    b = sys_.rhs
    if not np.any(b):
        return np.zeros((sys_.n_dofs // 2, 2))
    if method == "cg":
        guess = None if x0 is None else np.asarray(x0, dtype=float).ravel()[sys_.free]
        x, _ = pcg(sys_.matrix, b, guess, tol)
    elif method == "direct":
        lu = spla.splu(
            sys_.matrix.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        x = lu.solve(b)
        bnorm = np.linalg.norm(b)
        for _ in range(5):  # iterative refinement
            r = b - sys_.matrix @ x
            if np.linalg.norm(r) <= tol * bnorm:
                break
            x = x + lu.solve(r)
    else:
        raise ValueError(f"unknown solver {method!r}")
    return sys_.expand(x)


def element_strains(mesh: FeMesh, u: np.ndarray) -> np.ndarray:
    """(E, 2, 2) symmetric gradients of the P1 displacement."""
    grad = np.einsum("ekc,ekd->ecd", u[mesh.elements], mesh.basis_gradients)
    return 0.5 * (grad + grad.transpose(0, 2, 1))


def _c1_energy_density(model: ElasticityModel, strain: np.ndarray) -> np.ndarray:
    tr = strain[:, 0, 0] + strain[:, 1, 1]
    return 2.0 * model.mu * np.einsum("eij,eij->e", strain, strain) + model.lam * tr * tr


def energy_form(mesh: FeMesh, model: ElasticityModel, phi, u) -> float:
    """<E(u), E(u)>_{C(phi)} evaluated element by element."""
    s = model.scale(element_mean(mesh, np.asarray(phi, dtype=float)))
    dens = _c1_energy_density(model, element_strains(mesh, np.asarray(u)))
    return float(np.sum(s * dens * mesh.areas))


def compliance(mesh: FeMesh, model: ElasticityModel, loads: LoadSpec, phi, u) -> float:
    """Work of the external loads, int h(phi) f.u + int g.u."""
    return float(load_vector(mesh, loads, np.asarray(phi, dtype=float)) @ np.asarray(u).ravel())


def sensitivity_density(mesh: FeMesh, model: ElasticityModel, phi, u) -> np.ndarray:
    """Nodal lumping of C'(phi) E(u):E(u) against the hat functions."""
    ds = model.dscale(element_mean(mesh, np.asarray(phi, dtype=float)))
    dens = ds * _c1_energy_density(model, element_strains(mesh, np.asarray(u)))
    return np.bincount(
        mesh.elements.ravel(),
        weights=np.repeat(dens * mesh.areas / 3.0, 3),
        minlength=mesh.n_nodes,
    )
