"""Zero level sets of P1 fields and comparison with Wulff shapes."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .anisotropy import Anisotropy, sample_wulff
from .mesh import FeMesh, Segment, element_gradients
from .phasefield import psi0

__all__ = [
    "zero_level_segments",
    "phase_area",
    "polygon_area",
    "polygon_centroid",
    "hausdorff",
    "WulffFit",
    "wulff_fit",
    "segment_distance",
    "material_components",
    "connects",
    "cone_fraction",
]


def zero_level_segments(mesh: FeMesh, phi: np.ndarray) -> np.ndarray:
    """(k, 2, 2) segments of {phi = 0}, one per element crossed by it."""
    v = phi[mesh.elements]
    p = mesh.nodes[mesh.elements]
    neg = v < 0.0
    cnt = neg.sum(axis=1)
    segs = []
    for e in np.flatnonzero((cnt == 1) | (cnt == 2)):
        pts = []
        for i, j in ((0, 1), (1, 2), (2, 0)):
            if neg[e, i] != neg[e, j]:
                s = v[e, i] / (v[e, i] - v[e, j])
                pts.append(p[e, i] + s * (p[e, j] - p[e, i]))
        segs.append(pts[:2])
    return np.array(segs).reshape(-1, 2, 2)


def _clip_negative(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Polygon of {v < 0} inside one linear triangle."""
    out = []
    for i in range(3):
        j = (i + 1) % 3
        if v[i] < 0.0:
            out.append(p[i])
        if (v[i] < 0.0) != (v[j] < 0.0):
            s = v[i] / (v[i] - v[j])
            out.append(p[i] + s * (p[j] - p[i]))
    return np.array(out)


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def phase_area(mesh: FeMesh, phi: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact area and centroid of {phi < 0} for the P1 interpolant."""
    v = phi[mesh.elements]
    neg = (v < 0.0).sum(axis=1)
    full = neg == 3
    area = float(mesh.areas[full].sum())
    moment = (mesh.areas[full, None] * mesh.nodes[mesh.elements[full]].mean(axis=1)).sum(axis=0)
    for e in np.flatnonzero((neg == 1) | (neg == 2)):
        poly = _clip_negative(mesh.nodes[mesh.elements[e]], v[e])
        a = polygon_area(poly)
        if a > 0.0:
            area += a
            moment = moment + a * polygon_centroid(poly)
    if area == 0.0:
        return 0.0, np.full(2, np.nan)
    return area, moment / area


def _densify(segs: np.ndarray, step: float) -> np.ndarray:
    out = []
    for a, b in segs:
        k = max(1, int(np.ceil(np.linalg.norm(b - a) / step)))
        s = np.linspace(0.0, 1.0, k + 1)[:, None]
        out.append(a + s * (b - a))
    return np.vstack(out)


def _closed_segments(poly: np.ndarray) -> np.ndarray:
    return np.stack([poly, np.roll(poly, -1, axis=0)], axis=1)


def hausdorff(segs_a: np.ndarray, segs_b: np.ndarray, step: float) -> float:
    """Symmetric Hausdorff distance of two segment soups, sampled at ``step``."""
    pa, pb = _densify(segs_a, step), _densify(segs_b, step)
    da, _ = cKDTree(pb).query(pa)
    db, _ = cKDTree(pa).query(pb)
    return float(max(da.max(), db.max()))


class WulffFit:
    def __init__(self, distance: float, polygon: np.ndarray, area: float, shift: np.ndarray):
        self.distance = distance
        self.polygon = polygon
        self.area = area
        self.shift = shift

    def __repr__(self) -> str:
        return f"WulffFit(distance={self.distance:.4g}, area={self.area:.4g})"


def wulff_fit(mesh: FeMesh, phi: np.ndarray, aniso: Anisotropy, n: int = 720) -> WulffFit:
    """Hausdorff distance between {phi = 0} and the Wulff shape of equal area.

    The Wulff polygon is scaled to the area of {phi < 0}, placed at its
    centroid and then translated to minimise the distance.
    """
    area, centroid = phase_area(mesh, phi)
    segs = zero_level_segments(mesh, phi)
    if area == 0.0 or len(segs) == 0:
        raise ValueError("phase field has no negative region")
    w = sample_wulff(aniso, n).points
    w = w * np.sqrt(area / polygon_area(w))
    w = w - polygon_centroid(w) + centroid
    step = mesh.h / 20.0
    tree_pts = _densify(segs, step)
    tree = cKDTree(tree_pts)

    def dist(shift):
        poly = w + shift
        pw = _densify(_closed_segments(poly), step)
        d1 = tree.query(pw)[0].max()
        d2 = cKDTree(pw).query(tree_pts)[0].max()
        return max(d1, d2)

    res = minimize(dist, np.zeros(2), method="Nelder-Mead",
                   options={"xatol": 1e-5, "fatol": 1e-7, "initial_simplex": [[0, 0], [mesh.h, 0], [0, mesh.h]]})
    shift = res.x if res.fun < dist(np.zeros(2)) else np.zeros(2)
    return WulffFit(float(dist(shift)), w + shift, area, shift)


def segment_distance(mesh: FeMesh, seg: Segment) -> np.ndarray:
    """Distance of every mesh node to a boundary segment."""
    x0, x1, y0, y1 = mesh.domain
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    if seg.side in ("bottom", "top"):
        level = y0 if seg.side == "bottom" else y1
        return np.hypot(x - np.clip(x, seg.lo, seg.hi), y - level)
    level = x0 if seg.side == "left" else x1
    return np.hypot(x - level, y - np.clip(y, seg.lo, seg.hi))


def material_components(mesh: FeMesh, phi: np.ndarray) -> np.ndarray:
    """Component label per node of {phi < 0}; -1 for nodes outside it.

    Two material nodes are connected when they share a triangle edge.
    """
    mat = np.asarray(phi) < 0.0
    el = mesh.elements
    pairs = np.concatenate([el[:, [0, 1]], el[:, [1, 2]], el[:, [2, 0]]])
    keep = mat[pairs[:, 0]] & mat[pairs[:, 1]]
    a, b = pairs[keep, 0], pairs[keep, 1]
    n = mesh.n_nodes
    graph = sp.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return np.where(mat, labels, -1)


def connects(mesh: FeMesh, phi: np.ndarray, seg_a: Segment, seg_b: Segment, reach: float = 0.0) -> bool:
    """True if one component of {phi < 0} comes within ``reach`` of both segments."""
    labels = material_components(mesh, phi)
    tol = reach + 1e-9 * mesh.h
    near_a = set(labels[(segment_distance(mesh, seg_a) <= tol) & (labels >= 0)].tolist())
    near_b = set(labels[(segment_distance(mesh, seg_b) <= tol) & (labels >= 0)].tolist())
    return bool(near_a & near_b)


def cone_fraction(mesh: FeMesh, phi: np.ndarray, eps: float, alpha: float = 0.5) -> float:
    """Share of the interface energy carried by overhanging normals.

    An element's normal is grad phi / |grad phi| (pointing from material
    into void); it is overhanging when n_2 < -alpha |n|.  Elements are
    weighted by their isotropic Ginzburg-Landau energy.
    """
    phi = np.asarray(phi, dtype=float)
    g = element_gradients(mesh, phi)
    norm = np.hypot(g[:, 0], g[:, 1])
    pot = psi0(np.clip(phi, -1.0, 1.0))[mesh.elements].mean(axis=1)
    w = (0.5 * eps * norm**2 + pot / eps) * mesh.areas
    active = norm > 0.0
    total = w[active].sum()
    if total == 0.0:
        return 0.0
    cone = active & (g[:, 1] < -alpha * norm)
    return float(w[cone].sum() / total)
