"""Uniform P1 triangulations of rectangles.

Each cell of an ``nx`` by ``ny`` grid is split along its lower-left to
upper-right diagonal.  Node ``(i, j)`` has index ``j * (nx + 1) + i``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidTagSegment

__all__ = [
    "TagKind",
    "Tag",
    "Segment",
    "BoundaryRule",
    "FeMesh",
    "build_mesh",
    "lumped_inner",
    "gradient_on_element",
    "element_gradients",
    "boundary_quadrature",
]

SIDES = ("bottom", "right", "top", "left")


class TagKind(enum.Enum):
    DIRICHLET_FULL = "dirichlet"
    DIRICHLET_COMPONENT = "dirichlet_component"
    TRACTION = "traction"
    FREE = "free"


@dataclass(frozen=True)
class Tag:
    kind: TagKind
    name: str = ""
    component: int | None = None  # 1 = x, 2 = y for DIRICHLET_COMPONENT

    def __post_init__(self):
        if self.kind is TagKind.DIRICHLET_COMPONENT and self.component not in (1, 2):
            raise ValueError("component clamp needs component 1 or 2")


FREE = Tag(TagKind.FREE, "free")


@dataclass(frozen=True)
class Segment:
    """Closed piece ``[lo, hi]`` of one side of the rectangle.

    ``lo``/``hi`` are x-coordinates on the bottom/top sides and
    y-coordinates on the left/right sides.
    """

    side: str
    lo: float
    hi: float

    def contains(self, pts: np.ndarray, domain, tol: float) -> np.ndarray:
        x0, x1, y0, y1 = domain
        x, y = pts[..., 0], pts[..., 1]
        if self.side in ("bottom", "top"):
            level = y0 if self.side == "bottom" else y1
            on_side = np.abs(y - level) <= tol
            along = x
        else:
            level = x0 if self.side == "left" else x1
            on_side = np.abs(x - level) <= tol
            along = y
        return on_side & (along >= self.lo - tol) & (along <= self.hi + tol)


@dataclass(frozen=True)
class BoundaryRule:
    segment: Segment
    tag: Tag


@dataclass(eq=False)
class FeMesh:
    domain: tuple[float, float, float, float]
    nx: int
    ny: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary_edges: np.ndarray  # (nb, 2) node pairs
    edge_tags: list[Tag] = field(default_factory=list)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def hx(self) -> float:
        return (self.domain[1] - self.domain[0]) / self.nx

    @property
    def hy(self) -> float:
        return (self.domain[3] - self.domain[2]) / self.ny

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def volume(self) -> float:
        x0, x1, y0, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(E, 3, 2): constant gradients of the three hat functions."""
        p = self.nodes[self.elements]
        x, y = p[..., 0], p[..., 1]
        two_a = 2.0 * self.areas
        g = np.empty(p.shape)
        for k in range(3):
            k1, k2 = (k + 1) % 3, (k + 2) % 3
            g[:, k, 0] = (y[:, k1] - y[:, k2]) / two_a
            g[:, k, 1] = (x[:, k2] - x[:, k1]) / two_a
        return g

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        return np.bincount(
            self.elements.ravel(),
            weights=np.repeat(self.areas / 3.0, 3),
            minlength=self.n_nodes,
        )

    @cached_property
    def node_to_element_average(self) -> sp.csr_matrix:
        """(E, N) matrix taking nodal values to element means."""
        e = self.n_elements
        rows = np.repeat(np.arange(e), 3)
        return sp.csr_matrix(
            (np.full(3 * e, 1.0 / 3.0), (rows, self.elements.ravel())),
            shape=(e, self.n_nodes),
        )

    def edges_with(self, kind: TagKind) -> list[tuple[np.ndarray, Tag]]:
        out = []
        for tag in dict.fromkeys(self.edge_tags):
            if tag.kind is kind:
                sel = np.array([t == tag for t in self.edge_tags])
                out.append((self.boundary_edges[sel], tag))
        return out

    def tag_named(self, name: str) -> Tag:
        for tag in self.edge_tags:
            if tag.name == name:
                return tag
        raise KeyError(f"no boundary tag named {name!r}")

    def column_index(self) -> np.ndarray:
        """(ny+1, nx+1) node indices, row j holds nodes with y = y_j."""
        return np.arange(self.n_nodes).reshape(self.ny + 1, self.nx + 1)


def _boundary_edges(nx: int, ny: int) -> tuple[np.ndarray, list[str]]:
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    edges, sides = [], []
    for i in range(nx):
        edges.append((idx[0, i], idx[0, i + 1]))
        sides.append("bottom")
    for j in range(ny):
        edges.append((idx[j, nx], idx[j + 1, nx]))
        sides.append("right")
    for i in range(nx, 0, -1):
        edges.append((idx[ny, i], idx[ny, i - 1]))
        sides.append("top")
    for j in range(ny, 0, -1):
        edges.append((idx[j, 0], idx[j - 1, 0]))
        sides.append("left")
    return np.array(edges, dtype=np.int64), sides


def build_mesh(domain, nx: int, ny: int, tag_rules=()) -> FeMesh:
    """Friedrichs-Keller triangulation with tagged boundary edges.

    An edge receives a rule's tag when both of its endpoints lie on the
    rule's segment.  Untagged edges are free (traction-free).
    """
    x0, x1, y0, y1 = map(float, domain)
    if nx < 2 or ny < 2:
        raise ValueError("nx and ny must be at least 2")
    if not (x1 > x0 and y1 > y0):
        raise ValueError("empty domain")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    n0 = idx[:-1, :-1].ravel()
    n1 = idx[:-1, 1:].ravel()
    n2 = idx[1:, 1:].ravel()
    n3 = idx[1:, :-1].ravel()
    lower = np.column_stack([n0, n1, n2])
    upper = np.column_stack([n0, n2, n3])
    elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper

    edges, sides = _boundary_edges(nx, ny)
    tol = 1e-9 * max(x1 - x0, y1 - y0)
    dom = (x0, x1, y0, y1)
    tags = [FREE] * len(edges)
    owner = [-1] * len(edges)
    for r, rule in enumerate(tag_rules):
        seg = rule.segment
        if seg.side not in SIDES:
            raise InvalidTagSegment(f"unknown side {seg.side!r}")
        lo_lim, hi_lim = (x0, x1) if seg.side in ("bottom", "top") else (y0, y1)
        if seg.lo > seg.hi or seg.lo < lo_lim - tol or seg.hi > hi_lim + tol:
            raise InvalidTagSegment(
                f"segment [{seg.lo}, {seg.hi}] leaves the {seg.side} side [{lo_lim}, {hi_lim}]"
            )
        inside = seg.contains(nodes[edges], dom, tol).all(axis=1)
        for e in np.flatnonzero(inside):
            if owner[e] >= 0:
                raise InvalidTagSegment(
                    f"tag rules {owner[e]} and {r} overlap on a boundary edge"
                )
            owner[e] = r
            tags[e] = rule.tag
    return FeMesh(dom, nx, ny, nodes, elements, edges, tags)


def lumped_inner(weights: np.ndarray, f: np.ndarray, g: np.ndarray) -> float:
    """Mass-lumped L2 product sum_i w_i f_i g_i."""
    return float(np.dot(weights * f, g))


def element_gradients(mesh: FeMesh, f: np.ndarray) -> np.ndarray:
    """(E, 2) gradients of the P1 interpolant of nodal ``f``."""
    return np.einsum("ek,ekd->ed", f[mesh.elements], mesh.basis_gradients)


def gradient_on_element(mesh: FeMesh, f: np.ndarray, e: int) -> np.ndarray:
    return f[mesh.elements[e]] @ mesh.basis_gradients[e]


def boundary_quadrature(mesh: FeMesh, tag: Tag | str, g) -> np.ndarray:
    """Nodal load vector (N, 2) of int_{tag} g . v by the trapezoidal rule.

    ``g`` is a constant 2-vector or a callable ``g(points) -> (n, 2)``.
    """
    if isinstance(tag, str):
        tag = mesh.tag_named(tag)
    sel = np.array([t == tag for t in mesh.edge_tags])
    if not sel.any():
        raise KeyError(f"tag {tag.name!r} marks no boundary edge")
    edges = mesh.boundary_edges[sel]
    pts = mesh.nodes[edges]  # (m, 2, 2)
    length = np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
    if callable(g):
        vals = np.asarray(g(pts.reshape(-1, 2)), dtype=float).reshape(len(edges), 2, 2)
    else:
        vals = np.broadcast_to(np.asarray(g, dtype=float), (len(edges), 2, 2))
    load = np.zeros((mesh.n_nodes, 2))
    contrib = 0.5 * length[:, None, None] * vals
    np.add.at(load, edges.ravel(), contrib.reshape(-1, 2))
    return load
