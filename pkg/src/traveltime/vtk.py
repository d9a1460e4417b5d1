"""Legacy ASCII VTK unstructured-grid reading and writing.

Only what the package needs: triangles (cell type 5), poly-lines (cell type
4), scalar and 2-vector cell/point data. Vectors are padded with a zero
z-component on output.
"""

from pathlib import Path

import numpy as np

VTK_TRIANGLE = 5
VTK_POLY_LINE = 4


def _fmt(a):
    return " ".join(repr(float(v)) for v in a)


def _data_block(lines, kind, n, data):
    if not data:
        return
    lines.append(f"{kind} {n}")
    for name, values in data.items():
        values = np.asarray(values, dtype=float)
        if len(values) != n:
            raise ValueError(f"field {name!r} has {len(values)} entries, expected {n}")
        if values.ndim == 1:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in values)
        else:
            if values.shape[1] == 2:
                values = np.column_stack([values, np.zeros(len(values))])
            lines.append(f"VECTORS {name} double")
            lines.extend(_fmt(v) for v in values)


def write_vtk(path, points, cells, cell_type=VTK_TRIANGLE, cell_data=None, point_data=None,
              title="traveltime"):
    """Write an unstructured grid.

    Parameters
    ----------
    points : array_like, shape (n, 2)
    cells : list of index sequences
    cell_data, point_data : dict name -> array, optional
        1-D arrays become SCALARS, (n, 2) arrays VECTORS.
    """
    points = np.asarray(points, dtype=float)
    cells = [list(map(int, c)) for c in cells]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    lines.extend(_fmt((p[0], p[1], 0.0)) for p in points)
    size = sum(len(c) + 1 for c in cells)
    lines.append(f"CELLS {len(cells)} {size}")
    lines.extend(" ".join(map(str, [len(c)] + c)) for c in cells)
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend(str(cell_type) for _ in cells)
    _data_block(lines, "CELL_DATA", len(cells), cell_data)
    _data_block(lines, "POINT_DATA", len(points), point_data)
    Path(path).write_text("\n".join(lines) + "\n")


def write_mesh(path, mesh, cell_data=None, point_data=None):
    """Write a triangle mesh with its region ids plus optional fields."""
    data = {"region": mesh.element_region.astype(float)}
    data.update(cell_data or {})
    write_vtk(path, mesh.vertices, mesh.triangles, VTK_TRIANGLE, data, point_data)


def write_polyline(path, points, point_data=None):
    points = np.asarray(points, dtype=float)
    write_vtk(path, points, [range(len(points))], VTK_POLY_LINE, point_data=point_data)


def read_vtk(path):
    """Read a file written by :func:`write_vtk`.

    Returns
    -------
    dict
        Keys ``points`` (n, 2), ``cells`` (list of lists), ``cell_types``,
        ``cell_data`` and ``point_data`` (dicts of arrays).
    """
    tokens = Path(path).read_text().split("\n")
    out = {"cell_data": {}, "point_data": {}}
    i = 4
    target = None
    while i < len(tokens):
        head = tokens[i].split()
        i += 1
        if not head:
            continue
        key = head[0]
        if key == "POINTS":
            n = int(head[1])
            pts = np.array([list(map(float, tokens[i + j].split())) for j in range(n)])
            out["points"] = pts[:, :2]
            i += n
        elif key == "CELLS":
            n = int(head[1])
            out["cells"] = [list(map(int, tokens[i + j].split()))[1:] for j in range(n)]
            i += n
        elif key == "CELL_TYPES":
            n = int(head[1])
            out["cell_types"] = [int(tokens[i + j]) for j in range(n)]
            i += n
        elif key in ("CELL_DATA", "POINT_DATA"):
            target = out["cell_data" if key == "CELL_DATA" else "point_data"]
            count = int(head[1])
        elif key == "SCALARS":
            i += 1  # lookup table line
            target[head[1]] = np.array([float(tokens[i + j]) for j in range(count)])
            i += count
        elif key == "VECTORS":
            vals = np.array([list(map(float, tokens[i + j].split())) for j in range(count)])
            target[head[1]] = vals[:, :2]
            i += count
        else:
            raise ValueError(f"unexpected VTK section {key!r}")
    return out
