"""Output artifacts: legacy VTK snapshots, the energy trace, metadata."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .mesh import FeMesh

__all__ = [
    "atomic_write_text",
    "write_vtk",
    "read_vtk",
    "TRACE_HEADER",
    "trace_csv",
    "write_trace",
]

TRACE_HEADER = "step,time,E_gl,compliance,J_total,mass,multiplier,inner_iters"


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a temporary sibling and rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _f(x: float) -> str:
    return f"{x + 0.0:.9g}"  # no "-0"


def vtk_text(mesh: FeMesh, fields: dict, title: str = "aniso_topo") -> str:
    n = mesh.n_nodes
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    out += [f"{_f(x)} {_f(y)} 0" for x, y in mesh.nodes]
    ne = mesh.n_elements
    out.append(f"CELLS {ne} {4 * ne}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.elements]
    out.append(f"CELL_TYPES {ne}")
    out += ["5"] * ne
    if fields:
        out.append(f"POINT_DATA {n}")
    for name, values in fields.items():
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            if len(v) != n:
                raise ValueError(f"field {name!r} has {len(v)} values for {n} nodes")
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [_f(s) for s in v]
        else:
            v = v.reshape(n, -1)
            if v.shape[1] != 2:
                raise ValueError(f"vector field {name!r} must have 2 components")
            out.append(f"VECTORS {name} double")
            out += [f"{_f(a)} {_f(b)} 0" for a, b in v]
    return "\n".join(out) + "\n"


def write_vtk(mesh: FeMesh, fields: dict, path) -> None:
    """Legacy ASCII VTK with triangle cells and nodal scalar/vector data."""
    atomic_write_text(path, vtk_text(mesh, fields))


def read_vtk(path) -> tuple[np.ndarray, dict]:
    """Read back points and POINT_DATA fields written by :func:`write_vtk`."""
    tokens = Path(path).read_text(encoding="utf-8").split("\n")
    pts = None
    fields = {}
    i = 0
    while i < len(tokens):
        line = tokens[i].split()
        if not line:
            i += 1
            continue
        if line[0] == "POINTS":
            n = int(line[1])
            pts = np.array([tokens[i + 1 + k].split()[:2] for k in range(n)], dtype=float)
            i += n + 1
        elif line[0] == "SCALARS":
            n = len(pts)
            fields[line[1]] = np.array(tokens[i + 2 : i + 2 + n], dtype=float)
            i += n + 2
        elif line[0] == "VECTORS":
            n = len(pts)
            fields[line[1]] = np.array([tokens[i + 1 + k].split()[:2] for k in range(n)], dtype=float)
            i += n + 1
        else:
            i += 1
    if pts is None:
        raise ValueError(f"{path}: no POINTS block")
    return pts, fields


def trace_csv(reports) -> str:
    rows = [TRACE_HEADER]
    for r in reports:
        rows.append(
            f"{r.step},{r.t!r},{r.e_gl!r},{r.compliance!r},{r.j_total!r},"
            f"{r.mass!r},{r.multiplier!r},{r.inner_iters}"
        )
    return "\n".join(rows) + "\n"


def write_trace(reports, path) -> None:
    atomic_write_text(path, trace_csv(reports))
