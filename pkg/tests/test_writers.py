import numpy as np
import pytest

from aniso_topo.mesh import build_mesh
from aniso_topo.phasefield import EnergyReport
from aniso_topo.writers import TRACE_HEADER, atomic_write_text, read_vtk, trace_csv, write_trace, write_vtk


def golden_fields(mesh):
    x, y = mesh.nodes.T
    return {"phi": x - y / 3, "u": np.column_stack([0.1 * x, -y / 7])}


def test_golden_bytes(tmp_path, data_dir):
    mesh = build_mesh((0, 1, 0, 1), 2, 2)
    out = tmp_path / "g.vtk"
    write_vtk(mesh, golden_fields(mesh), out)
    assert out.read_bytes() == (data_dir / "golden_2x2.vtk").read_bytes()


def test_zero_field_layout(tmp_path):
    mesh = build_mesh((0, 1, 0, 1), 2, 2)
    out = tmp_path / "z.vtk"
    write_vtk(mesh, {"phi": np.zeros(mesh.n_nodes)}, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "POINTS 9 double" in lines
    assert "CELLS 8 32" in lines
    start = lines.index("CELL_TYPES 8")
    assert lines[start + 1 : start + 9] == ["5"] * 8


def test_round_trip(tmp_path):
    mesh = build_mesh((-0.5, 0.5, -0.5, 0.5), 7, 5)
    rng = np.random.default_rng(0)
    phi = rng.uniform(-1, 1, mesh.n_nodes)
    u = rng.normal(size=(mesh.n_nodes, 2))
    write_vtk(mesh, {"phi": phi, "u": u}, tmp_path / "r.vtk")
    pts, fields = read_vtk(tmp_path / "r.vtk")
    assert len(pts) == mesh.n_nodes
    np.testing.assert_allclose(pts, mesh.nodes, rtol=1e-8)
    np.testing.assert_allclose(fields["phi"], phi, rtol=1e-8)
    np.testing.assert_allclose(fields["u"], u, rtol=1e-8)


def test_nine_significant_digits(tmp_path):
    mesh = build_mesh((0, 1, 0, 1), 2, 2)
    write_vtk(mesh, {"phi": np.full(mesh.n_nodes, 1 / 3)}, tmp_path / "d.vtk")
    assert "0.333333333" in tmp_path.joinpath("d.vtk").read_text().splitlines()


def test_field_size_checked(tmp_path):
    mesh = build_mesh((0, 1, 0, 1), 2, 2)
    with pytest.raises(ValueError):
        write_vtk(mesh, {"phi": np.zeros(3)}, tmp_path / "bad.vtk")


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "sub" / "a.txt"
    atomic_write_text(target, "one\n")
    atomic_write_text(target, "two\n")
    assert target.read_text() == "two\n"
    assert [p.name for p in target.parent.iterdir()] == ["a.txt"]


def test_failed_write_keeps_old_file(tmp_path):
    target = tmp_path / "a.txt"
    atomic_write_text(target, "old\n")
    with pytest.raises(TypeError):
        atomic_write_text(target, None)
    assert target.read_text() == "old\n"
    assert len(list(tmp_path.iterdir())) == 1


def test_trace(tmp_path):
    reps = [EnergyReport(1, 0.1, 2.0, 1.0, 3.0, 0.5, -1.5, 12), EnergyReport(2, 0.2, 1.9, 1.0, 2.9, 0.5, -1.5, 7)]
    text = trace_csv(reps)
    rows = text.splitlines()
    assert rows[0] == TRACE_HEADER
    assert rows[1] == "1,0.1,2.0,1.0,3.0,0.5,-1.5,12"
    write_trace(reps, tmp_path / "trace.csv")
    assert (tmp_path / "trace.csv").read_text() == text
