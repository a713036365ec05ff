import math

import numpy as np
import pytest

from aniso_topo.anisotropy import Anisotropy
from aniso_topo.geometry import (
    cone_fraction,
    connects,
    hausdorff,
    material_components,
    phase_area,
    polygon_area,
    polygon_centroid,
    wulff_fit,
    zero_level_segments,
)
from aniso_topo.mesh import Segment, build_mesh


def test_polygon_helpers():
    sq = np.array([[0, 0], [2, 0], [2, 1], [0, 1]], dtype=float)
    assert polygon_area(sq) == 2.0
    np.testing.assert_allclose(polygon_centroid(sq), [1.0, 0.5])


def test_phase_area_of_linear_field_is_exact():
    mesh = build_mesh((0, 1, 0, 1), 7, 5)
    x, y = mesh.nodes.T
    area, c = phase_area(mesh, x + y - 0.8)  # triangle x + y < 0.8
    assert area == pytest.approx(0.32, rel=1e-12)
    np.testing.assert_allclose(c, [0.8 / 3, 0.8 / 3], rtol=1e-12)


def test_zero_level_segments_of_plane():
    mesh = build_mesh((0, 1, 0, 1), 6, 6)
    segs = zero_level_segments(mesh, mesh.nodes[:, 0] - 0.45)
    np.testing.assert_allclose(segs[..., 0], 0.45)
    assert np.sum(np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)) == pytest.approx(1.0)


def test_hausdorff_of_offset_lines():
    a = np.array([[[0.0, 0.0], [1.0, 0.0]]])
    b = np.array([[[0.0, 0.1], [1.0, 0.1]]])
    assert hausdorff(a, b, 0.01) == pytest.approx(0.1)


def test_wulff_fit_of_sampled_shape():
    aniso = Anisotropy.regularized(0.5, 0.1)
    mesh = build_mesh((-0.5, 0.5, -0.5, 0.5), 48, 48)
    from aniso_topo.anisotropy import dual_norm

    # signed field gamma*(x - c) - R has the scaled Wulff shape as zero set
    c = np.array([0.03, -0.02])
    phi = np.array([dual_norm(aniso, p - c) for p in mesh.nodes]) - 0.12
    fit = wulff_fit(mesh, phi, aniso)
    assert fit.distance < 0.3 * mesh.h


def test_components_and_connection():
    mesh = build_mesh((-0.5, 0.5, -0.5, 0.5), 20, 20)
    x, y = mesh.nodes.T
    column = np.where(np.abs(x) < 0.1, -1.0, 1.0)
    labels = material_components(mesh, column)
    assert len(set(labels[labels >= 0])) == 1
    bottom, top = Segment("bottom", -0.25, 0.25), Segment("top", -0.02, 0.02)
    assert connects(mesh, column, bottom, top)
    cut = np.where(np.abs(y) < 0.06, 1.0, column)
    assert len(set(material_components(mesh, cut)[material_components(mesh, cut) >= 0])) == 2
    assert not connects(mesh, cut, bottom, top)
    shifted = np.where(np.abs(x - 0.2) < 0.04, -1.0, 1.0)
    assert not connects(mesh, shifted, bottom, top)
    assert connects(mesh, shifted, bottom, top, reach=0.25)


def test_cone_fraction():
    mesh = build_mesh((-0.5, 0.5, -0.5, 0.5), 32, 32)
    y = mesh.nodes[:, 1]
    eps = 0.05
    # material above: outward normals point down, into the overhang cone
    hanging = np.sin(np.clip(-y / eps, -math.pi / 2, math.pi / 2))
    assert cone_fraction(mesh, hanging, eps) == pytest.approx(1.0)
    assert cone_fraction(mesh, -hanging, eps) == 0.0
    assert cone_fraction(mesh, np.ones(mesh.n_nodes), eps) == 0.0
