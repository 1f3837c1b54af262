"""Face tangent frames and the closed-form lowest-order weak gradient and weak curl.

For piecewise constant weak functions the discrete weak operators on an
element T reduce to constants:

    grad_w {0, 1 on face i}      =  |f_i| n_i / |T|
    curl_w {0, e^k_b on face i}  = -(e^k_b x n_i) |f_i| / |T|

while interior basis functions have zero weak gradient and zero weak curl.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_AXES = np.eye(3)


@dataclass(frozen=True)
class TangentialBasis:
    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray

    def rotated(self, outward: np.ndarray) -> np.ndarray:
        """(2, 3) array of e^k x n for an element whose outward normal is ``outward``."""
        return np.cross(np.stack([self.e1, self.e2]), outward)


def reference_vector(normal: np.ndarray) -> np.ndarray:
    """Axis vector least aligned with ``normal`` (first axis wins ties)."""
    return _AXES[int(np.argmin(np.abs(normal)))]


def tangential_basis(normal) -> TangentialBasis:
    normal = np.asarray(normal, dtype=float)
    length = np.linalg.norm(normal)
    if not np.isfinite(length) or length == 0.0:
        raise ValueError("tangential basis needs a nonzero normal")
    normal = normal / length
    v1 = np.cross(reference_vector(normal), normal)
    v2 = np.cross(v1, normal)
    return TangentialBasis(v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2), normal)


def face_tangents(face_normals: np.ndarray) -> np.ndarray:
    """Vectorised tangential bases: (F, 2, 3) array of (e1, e2) per face."""
    normals = np.asarray(face_normals, dtype=float)
    r = _AXES[np.argmin(np.abs(normals), axis=1)]
    v1 = np.cross(r, normals)
    v2 = np.cross(v1, normals)
    v1 /= np.linalg.norm(v1, axis=1, keepdims=True)
    v2 /= np.linalg.norm(v2, axis=1, keepdims=True)
    return np.stack([v1, v2], axis=1)


@dataclass(frozen=True)
class WeakOperatorTable:
    """Weak operators of the local basis functions of one or many elements.

    ``grad_face[..., i, :]`` is the weak gradient of the face-i indicator,
    ``curl_face[..., i, k, :]`` the weak curl of the face-i tangent e^k_b.
    The interior basis functions contribute ``grad_cell`` and ``curl_cell``,
    which are identically zero for piecewise constants.
    """

    grad_face: np.ndarray
    curl_face: np.ndarray
    rotated_tangents: np.ndarray
    grad_cell: np.ndarray
    curl_cell: np.ndarray


def weak_operator_table(areas, volume, outward_normals, tangents) -> WeakOperatorTable:
    """Build the table for elements with per-face ``areas`` (..., N) and
    ``outward_normals`` (..., N, 3), face ``tangents`` (..., N, 2, 3) and ``volume``."""
    areas = np.asarray(areas, dtype=float)
    volume = np.asarray(volume, dtype=float)
    outward_normals = np.asarray(outward_normals, dtype=float)
    tangents = np.asarray(tangents, dtype=float)
    scale = (areas / volume[..., None])[..., None]
    rotated = np.cross(tangents, outward_normals[..., None, :])
    lead = areas.shape[:-1]
    return WeakOperatorTable(
        grad_face=outward_normals * scale,
        curl_face=-rotated * scale[..., None],
        rotated_tangents=rotated,
        grad_cell=np.zeros(lead + (3,)),
        curl_cell=np.zeros(lead + (3, 3)),
    )


def element_tables(mesh, elements=None) -> WeakOperatorTable:
    """Weak operator tables for ``elements`` of ``mesh`` (all by default)."""
    if elements is None:
        elements = np.arange(mesh.n_elements)
    faces = mesh.element_faces[elements]
    tangents = face_tangents(mesh.face_normals)[faces]
    return weak_operator_table(
        mesh.face_areas[faces], mesh.volumes[elements], mesh.outward_normals[elements], tangents
    )


def weak_gradient(table: WeakOperatorTable, cell_value, face_values):
    """Weak gradient of {cell_value, face_values} from a single-element table."""
    return cell_value * table.grad_cell + np.einsum("i,id->d", face_values, table.grad_face)


def weak_curl(table: WeakOperatorTable, cell_vector, face_coefficients):
    """Weak curl of {cell_vector, sum_ik c_ik e^k_b,i}; ``face_coefficients`` is (N, 2)."""
    cell_part = np.einsum("k,kd->d", np.asarray(cell_vector, float), table.curl_cell)
    return cell_part + np.einsum("ik,ikd->d", face_coefficients, table.curl_face)
