"""Legacy ASCII VTK snapshots of fields on ``Gamma_h``.

Triangles are written unindexed: every triangle carries its own three
points, so ``n_points == 3 * n_cells``.  Values use ``%.17g`` and read
back bit-exactly.
"""
from __future__ import annotations

import numpy as np

VTK_TRIANGLE = 5


def write_vtk_snapshot(triangles, fields, path, title="surface snapshot"):
    """Write triangles ``(nt, 3, 3)`` with point fields ``{name: (nt, 3)}``."""
    tris = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    nt = len(tris)
    pts = tris.reshape(-1, 3)
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(pts)} double",
    ]
    lines += [" ".join(f"{c:.17g}" for c in p) for p in pts]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {3 * i} {3 * i + 1} {3 * i + 2}" for i in range(nt)]
    lines.append(f"CELL_TYPES {nt}")
    lines += [str(VTK_TRIANGLE)] * nt
    if fields:
        lines.append(f"POINT_DATA {len(pts)}")
        for name, vals in fields.items():
            vals = np.asarray(vals, dtype=float).reshape(-1)
            if vals.size != len(pts):
                raise ValueError(f"field {name!r} has {vals.size} values for {len(pts)} points")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{v:.17g}" for v in vals]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_snapshot(path):
    """Inverse of :func:`write_vtk_snapshot`; returns ``(triangles, fields)``."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    it = iter(tokens[4:])
    head = next(it).split()
    if head[0] != "POINTS":
        raise ValueError(f"{path}: expected POINTS, got {head}")
    npts = int(head[1])
    pts = np.array([next(it).split() for _ in range(npts)], dtype=float).reshape(npts, 3)
    head = next(it).split()
    ncells = int(head[1])
    cells = np.array([next(it).split() for _ in range(ncells)], dtype=np.int64).reshape(ncells, 4)
    next(it)
    for _ in range(ncells):
        next(it)
    fields = {}
    for line in it:
        parts = line.split()
        if not parts or parts[0] == "POINT_DATA":
            continue
        if parts[0] == "SCALARS":
            name = parts[1]
            next(it)  # lookup table
            fields[name] = np.array([next(it) for _ in range(npts)], dtype=float)
    return pts[cells[:, 1:]], fields


def surface_snapshot(space, fields, path, title="surface snapshot"):
    """Write nodal vectors ``{name: u}`` of a trace space at the ``Gamma_h`` vertices."""
    vals = {name: space.triangle_vertex_values(np.asarray(u)) for name, u in fields.items()}
    write_vtk_snapshot(space.gamma.triangles, vals, path, title)
