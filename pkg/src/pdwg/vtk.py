"""Legacy ASCII VTK output of piecewise constant cell fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

VTK_HEXAHEDRON = 12
# Tensor-product corner order (i + 2j + 4k) to VTK's counter-clockwise order.
_VTK_ORDER = np.array([0, 1, 3, 2, 4, 5, 7, 6])


def export_vtk(mesh, cell_field, path, name: str = "u") -> Path:
    """Write ``mesh`` and one vector per element as a legacy VTK unstructured grid."""
    field = np.asarray(cell_field, dtype=float)
    if field.shape != (mesh.n_elements, 3):
        raise ValueError(f"cell field must have shape ({mesh.n_elements}, 3), got {field.shape}")
    if not name or any(c.isspace() for c in name):
        raise ValueError(f"invalid array name {name!r}")
    path = Path(path)
    cells = mesh.elements[:, _VTK_ORDER]
    E = mesh.n_elements
    lines = [
        "# vtk DataFile Version 3.0",
        f"pdwg {mesh.domain_tag.value} field {name}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(mesh.vertices)} double",
    ]
    lines += (" ".join(repr(float(c)) for c in v) for v in mesh.vertices)
    lines.append(f"CELLS {E} {9 * E}")
    lines += ("8 " + " ".join(str(int(i)) for i in c) for c in cells)
    lines.append(f"CELL_TYPES {E}")
    lines += [str(VTK_HEXAHEDRON)] * E
    lines += [f"CELL_DATA {E}", f"VECTORS {name} double"]
    lines += (" ".join(repr(float(c)) for c in v) for v in field)
    path.write_text("\n".join(lines) + "\n")
    return path
