"""Anisotropy densities for overhang penalisation.

Four one-homogeneous densities on R^2 are supported:

* ``isotropic``   -- gamma(q) = |q|
* ``convex``      -- |q| above the overhang cone, -q_2/alpha inside it
* ``regularized`` -- the convex density plus delta*|q|
* ``nonconvex``   -- the convex density with the flat bottom of its Frank
  diagram replaced by two segments meeting at (0, -lam*alpha)

The overhang cone is ``{q : q_2 < -alpha |q|}``; gradients of the phase
field point from material (phi = -1) into void, so they are outward
material normals and the cone collects downward-facing surfaces.

Every density is written in "extended BGN" form gamma = sum_l sqrt(q.G_l q)
with piecewise constant G_l, which gives the linearisation matrix B(q)
satisfying B(q) q = gamma(q) Dgamma(q) on smooth branches.

All functions accept a single 2-vector or an array of shape (..., 2).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonConvexUnsupported, SubdifferentialNotSingleton

__all__ = [
    "Anisotropy",
    "Branch",
    "DiagramSample",
    "BOUNDARY_TOL",
    "gamma_eval",
    "a_eval",
    "bgn_matrix",
    "one_sided_matrices",
    "dgamma",
    "dual_norm",
    "branch_classify",
    "sample_frank",
    "sample_wulff",
    "write_diagram_csv",
]

BOUNDARY_TOL = 1e-9
KINDS = ("isotropic", "convex", "regularized", "nonconvex")


class Branch(enum.Enum):
    UPPER = "upper"
    LOWER = "lower"  # overhang cone of the convex densities
    LEFT_CONE = "left_cone"
    RIGHT_CONE = "right_cone"
    BOUNDARY = "boundary"


# integer codes used by the vectorised paths
_UP, _LOW, _LEFT, _RIGHT, _BND_CONE, _BND_SIGN = 0, 1, 2, 3, 4, 5


@dataclass(frozen=True)
class Anisotropy:
    kind: str = "isotropic"
    alpha: float = 1.0
    delta: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown anisotropy kind {self.kind!r}")
        if self.kind == "isotropic":
            return
        if self.kind == "nonconvex":
            if not 0.0 < self.alpha < 1.0:
                raise ValueError("nonconvex anisotropy needs alpha in (0,1)")
            if not 0.0 < self.lam < 1.0:
                raise ValueError("nonconvex anisotropy needs lambda in (0,1)")
        elif not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0,1]")
        if self.kind == "regularized" and not self.delta > 0.0:
            raise ValueError("regularized anisotropy needs delta > 0")

    @classmethod
    def isotropic(cls) -> "Anisotropy":
        return cls("isotropic")

    @classmethod
    def convex(cls, alpha: float) -> "Anisotropy":
        return cls("convex", alpha=float(alpha))

    @classmethod
    def regularized(cls, alpha: float, delta: float) -> "Anisotropy":
        return cls("regularized", alpha=float(alpha), delta=float(delta))

    @classmethod
    def nonconvex(cls, alpha: float, lam: float) -> "Anisotropy":
        return cls("nonconvex", alpha=float(alpha), lam=float(lam))

    @property
    def is_convex(self) -> bool:
        return self.kind != "nonconvex"

    @property
    def _nc_coeffs(self) -> tuple[float, float]:
        # gamma = |a q1 -/+ b q2| on the left/right part of the cone
        a = (1.0 - self.lam) / (self.lam * math.sqrt(1.0 - self.alpha**2))
        b = 1.0 / (self.lam * self.alpha)
        return a, b

    def __str__(self) -> str:
        if self.kind == "isotropic":
            return "Isotropic"
        if self.kind == "convex":
            return f"ConvexOverhang(alpha={self.alpha:g})"
        if self.kind == "regularized":
            return f"RegularizedOverhang(alpha={self.alpha:g}, delta={self.delta:g})"
        return f"NonConvexOverhang(alpha={self.alpha:g}, lambda={self.lam:g})"


@dataclass
class DiagramSample:
    points: np.ndarray  # (n, 2), ordered anticlockwise
    kind: str  # "frank" or "wulff"


def _as_q(q) -> tuple[np.ndarray, bool]:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 2:
        raise ValueError("expected 2-vectors")
    return q, q.ndim == 1


def _codes(a: Anisotropy, q: np.ndarray, tol: float) -> np.ndarray:
    """Branch codes; tol=0 reproduces the strict inequalities of gamma."""
    x1, x2 = q[..., 0], q[..., 1]
    norm = np.hypot(x1, x2)
    codes = np.full(x1.shape, _UP, dtype=np.int8)
    if a.kind == "isotropic":
        return codes
    gap = x2 + a.alpha * norm
    lower = gap < -tol * norm
    on_cone = np.abs(gap) <= tol * norm
    if a.kind == "nonconvex":
        left = lower & (x1 <= 0.0)
        codes[left] = _LEFT
        codes[lower & ~left] = _RIGHT
        if tol > 0.0:
            codes[lower & (np.abs(x1) <= tol * norm)] = _BND_SIGN
    else:
        codes[lower] = _LOW
    if tol > 0.0:
        codes[on_cone] = _BND_CONE
    return codes


def branch_classify(a: Anisotropy, q, tol: float = BOUNDARY_TOL) -> Branch:
    """Which piecewise formula of gamma applies at ``q``."""
    q, _ = _as_q(q)
    code = int(_codes(a, q.reshape(1, 2), tol)[0])
    return {
        _UP: Branch.UPPER,
        _LOW: Branch.LOWER,
        _LEFT: Branch.LEFT_CONE,
        _RIGHT: Branch.RIGHT_CONE,
        _BND_CONE: Branch.BOUNDARY,
        _BND_SIGN: Branch.BOUNDARY,
    }[code]


def _gamma_convex(alpha: float, q: np.ndarray) -> np.ndarray:
    norm = np.hypot(q[..., 0], q[..., 1])
    lower = q[..., 1] < -alpha * norm
    return np.where(lower, -q[..., 1] / alpha, norm)


def gamma_eval(a: Anisotropy, q) -> np.ndarray | float:
    q, scalar = _as_q(q)
    x1, x2 = q[..., 0], q[..., 1]
    norm = np.hypot(x1, x2)
    if a.kind == "isotropic":
        out = norm
    elif a.kind == "convex":
        out = _gamma_convex(a.alpha, q)
    elif a.kind == "regularized":
        out = _gamma_convex(a.alpha, q) + a.delta * norm
    else:
        ca, cb = a._nc_coeffs
        lower = x2 < -a.alpha * norm
        left = np.abs(ca * x1 - cb * x2)
        right = np.abs(ca * x1 + cb * x2)
        out = np.where(lower, np.where(x1 <= 0.0, left, right), norm)
    return float(out) if scalar else out


def a_eval(a: Anisotropy, q):
    """A(q) = gamma(q)^2 / 2."""
    g = gamma_eval(a, q)
    return 0.5 * g * g


def _g_convex(alpha: float, codes: np.ndarray) -> np.ndarray:
    g = np.zeros(codes.shape + (2, 2))
    low = codes == _LOW
    g[..., 0, 0] = np.where(low, 0.0, 1.0)
    g[..., 1, 1] = np.where(low, alpha**-2, 1.0)
    return g


def bgn_matrix(a: Anisotropy, q) -> np.ndarray:
    """Linearisation matrix B(q) with B(q) q = DA(q) off branch boundaries.

    On the cone boundary the identity (upper branch) matrix is used; on the
    q_1 = 0 ray inside the cone of the non-convex density the mean of the
    two one-sided matrices, diag(a^2, b^2), is used.  B(0) is I, except for
    the regularised density where it is 2(1 + delta^2) I.
    """
    q, scalar = _as_q(q)
    q2 = q.reshape(-1, 2)
    codes = _codes(a, q2, BOUNDARY_TOL)
    norm = np.hypot(q2[:, 0], q2[:, 1])
    zero = norm == 0.0
    eye = np.broadcast_to(np.eye(2), (len(q2), 2, 2))
    if a.kind == "isotropic":
        out = eye.copy()
    elif a.kind == "convex":
        out = _g_convex(a.alpha, codes)
        out[zero] = np.eye(2)
    elif a.kind == "nonconvex":
        ca, cb = a._nc_coeffs
        out = eye.copy()
        for code, s in ((_LEFT, -1.0), (_RIGHT, 1.0)):
            m = codes == code
            out[m] = [[ca * ca, s * ca * cb], [s * ca * cb, cb * cb]]
        out[codes == _BND_SIGN] = [[ca * ca, 0.0], [0.0, cb * cb]]
    else:
        g1 = _g_convex(a.alpha, codes)
        gam_c = _gamma_convex(a.alpha, q2)
        gam = gam_c + a.delta * norm
        with np.errstate(divide="ignore", invalid="ignore"):
            s1 = gam / gam_c
            s2 = gam * a.delta / norm
        out = s1[:, None, None] * g1 + s2[:, None, None] * eye
        out[zero] = 2.0 * (1.0 + a.delta**2) * np.eye(2)
    return out[0] if scalar else out.reshape(q.shape[:-1] + (2, 2))


def one_sided_matrices(a: Anisotropy, q) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper-branch and cone-branch linearisations at every ``q``.

    Returns ``(b_up, b_cone, in_cone)``.  Where ``q`` lies in the overhang
    cone, ``b_cone`` is :func:`bgn_matrix`; elsewhere it is the cone
    formula evaluated at the point of the cone boundary with the same
    length (and the same sign of q_1).  ``b_up`` is the upper formula,
    which does not depend on ``q``.  Any convex combination of the two
    maps a cone-boundary ``q`` to an element of the subdifferential of A.
    """
    q, _ = _as_q(q)
    q2 = q.reshape(-1, 2)
    n = len(q2)
    codes = _codes(a, q2, BOUNDARY_TOL)
    in_cone = np.isin(codes, (_LOW, _LEFT, _RIGHT, _BND_SIGN))
    scale = (1.0 + a.delta) ** 2
    b_up = np.broadcast_to(scale * np.eye(2), (n, 2, 2)).copy()
    if a.kind == "isotropic":
        return b_up, b_up.copy(), in_cone
    b_cone = np.empty((n, 2, 2))
    if a.kind == "nonconvex":
        ca, cb = a._nc_coeffs
        left = q2[:, 0] <= 0.0
        b_cone[left] = [[ca * ca, -ca * cb], [-ca * cb, cb * cb]]
        b_cone[~left] = [[ca * ca, ca * cb], [ca * cb, cb * cb]]
    else:
        g1 = np.diag([0.0, a.alpha**-2])
        b_cone[:] = (1.0 + a.delta) * (g1 + a.delta * np.eye(2))
    b_cone[in_cone] = bgn_matrix(a, q2[in_cone])
    return b_up, b_cone, in_cone


def dgamma(a: Anisotropy, q) -> np.ndarray:
    """Gradient of gamma at a smooth point ``q``."""
    q, _ = _as_q(q)
    if q.ndim != 1:
        raise ValueError("dgamma takes a single 2-vector")
    norm = math.hypot(q[0], q[1])
    if norm == 0.0 or branch_classify(a, q) is Branch.BOUNDARY:
        raise SubdifferentialNotSingleton(f"gamma is not differentiable at {q.tolist()}")
    unit = q / norm
    if a.kind == "isotropic":
        return unit
    code = int(_codes(a, q.reshape(1, 2), BOUNDARY_TOL)[0])
    if a.kind == "nonconvex":
        ca, cb = a._nc_coeffs
        if code == _LEFT:
            return np.array([ca, -cb])
        if code == _RIGHT:
            return np.array([-ca, -cb])
        return unit
    grad = np.array([0.0, -1.0 / a.alpha]) if code == _LOW else unit
    if a.kind == "regularized":
        grad = grad + a.delta * unit
    return grad


_SCAN = 4096
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def _ratio(a: Anisotropy, r: np.ndarray, theta):
    w = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return (w @ r) / gamma_eval(a, w)


def dual_norm(a: Anisotropy, r) -> float:
    """gamma*(r) = sup_q r.q / gamma(q), by angular scan plus golden section."""
    if not a.is_convex:
        raise NonConvexUnsupported(f"dual norm needs a convex density, got {a}")
    r = np.asarray(r, dtype=float)
    if not np.any(r):
        return 0.0
    theta = np.arange(_SCAN) * (2.0 * math.pi / _SCAN)
    vals = _ratio(a, r, theta)
    k = int(np.argmax(vals))
    step = 2.0 * math.pi / _SCAN
    lo, hi = theta[k] - step, theta[k] + step
    c, d = hi - _GOLD * (hi - lo), lo + _GOLD * (hi - lo)
    fc, fd = _ratio(a, r, c), _ratio(a, r, d)
    while hi - lo > 1e-10:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLD * (hi - lo)
            fc = _ratio(a, r, c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLD * (hi - lo)
            fd = _ratio(a, r, d)
    return float(max(vals[k], fc, fd))


def _rays(n: int) -> np.ndarray:
    if n < 4:
        raise ValueError("need at least 4 samples")
    theta = np.arange(n) * (2.0 * math.pi / n)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def sample_frank(a: Anisotropy, n: int) -> DiagramSample:
    """Boundary of the Frank diagram {gamma <= 1} along n equiangular rays."""
    w = _rays(n)
    return DiagramSample(w / gamma_eval(a, w)[:, None], "frank")


def sample_wulff(a: Anisotropy, n: int) -> DiagramSample:
    """Boundary of the Wulff shape {gamma* <= 1} along n equiangular rays."""
    if not a.is_convex:
        raise NonConvexUnsupported(f"Wulff shape needs a convex density, got {a}")
    w = _rays(n)
    scale = np.array([dual_norm(a, ray) for ray in w])
    return DiagramSample(w / scale[:, None], "wulff")


def write_diagram_csv(sample: DiagramSample, path) -> None:
    """CSV with header ``x,y``; the first point is repeated to close the curve."""
    from .writers import atomic_write_text

    pts = np.vstack([sample.points, sample.points[:1]])
    lines = ["x,y"] + [f"{x:.12g},{y:.12g}" for x, y in pts]
    atomic_write_text(path, "\n".join(lines) + "\n")
