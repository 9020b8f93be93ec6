"""Legacy-ASCII VTK output (unstructured grid, triangle cells, cell data).

Plain text on purpose: the files stay greppable and the writer needs no
third-party reader library.  All floats use repr-faithful %.17g so two runs
of the same simulation produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh

VTK_TRIANGLE = 5


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def write_vtk(path, mesh: Mesh, cell_data: dict | None = None,
              title: str = "trifvm fields") -> None:
    """Write the mesh and per-cell scalar arrays as a legacy VTK file."""
    cell_data = cell_data or {}
    for name, arr in cell_data.items():
        if len(arr) != mesh.n_cells:
            raise ValueError(f"cell array '{name}' has length {len(arr)}, "
                             f"mesh has {mesh.n_cells} cells")

    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    for x, y in mesh.points:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")

    lines.append(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend([str(VTK_TRIANGLE)] * mesh.n_cells)

    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        for name in sorted(cell_data):
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in np.asarray(cell_data[name]))

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_cell_data(path) -> dict:
    """Read back the scalar cell arrays of a file written by write_vtk.

    Round-trip helper for tests; not a general VTK reader.
    """
    out = {}
    with open(path) as fh:
        lines = fh.read().split("\n")
    i = 0
    n_cells = None
    while i < len(lines):
        tok = lines[i].split()
        if tok[:1] == ["CELL_DATA"]:
            n_cells = int(tok[1])
        elif tok[:1] == ["SCALARS"]:
            name = tok[1]
            vals = lines[i + 2:i + 2 + n_cells]
            out[name] = np.array([float(v) for v in vals])
            i += 1 + n_cells
        i += 1
    return out
