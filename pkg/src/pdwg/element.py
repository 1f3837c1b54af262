"""Element stiffness matrices and load vectors of the lowest-order primal-dual WG scheme.

Local unknowns of an element with N faces are laid out as

    [lambda_0 | lambda_b (N) | q_0 (3) | q_b (2 per face) | s_0 | s_b (N) | u (3)]

giving 2 + 2N + 2*3 + 2N = 8 + 4N unknowns (32 on a hexahedron). The q_b
pair of face i sits at ``QB + 2*i + k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import DEFAULT_ORDER, SINGULAR_ORDER, cell_rule_batch, face_rule_batch
from .weak import face_tangents

DIM = 3


@dataclass(frozen=True)
class LocalLayout:
    n_faces: int

    @property
    def lambda0(self) -> int:
        return 0

    @property
    def lambda_b(self) -> slice:
        return slice(1, 1 + self.n_faces)

    @property
    def q0(self) -> slice:
        return slice(1 + self.n_faces, 1 + self.n_faces + DIM)

    @property
    def q_b(self) -> slice:
        start = 1 + self.n_faces + DIM
        return slice(start, start + 2 * self.n_faces)

    @property
    def s0(self) -> int:
        return 1 + 3 * self.n_faces + DIM

    @property
    def s_b(self) -> slice:
        return slice(self.s0 + 1, self.s0 + 1 + self.n_faces)

    @property
    def u(self) -> slice:
        start = self.s0 + 1 + self.n_faces
        return slice(start, start + DIM)

    @property
    def size(self) -> int:
        return 2 + 2 * self.n_faces + 2 * DIM + self.n_faces * (DIM - 1)

    def labels(self) -> list[str]:
        N = self.n_faces
        return (
            ["lambda0"]
            + [f"lambda_b[{i}]" for i in range(N)]
            + [f"q0[{j}]" for j in range(DIM)]
            + [f"q_b[{i},{k}]" for i in range(N) for k in range(2)]
            + ["s0"]
            + [f"s_b[{i}]" for i in range(N)]
            + [f"u[{j}]" for j in range(DIM)]
        )


HEX_LAYOUT = LocalLayout(6)


@dataclass(frozen=True)
class StabilizationWeights:
    rho1: float = 1.0
    rho2: float = 1.0
    rho3: float = 1.0

    def __post_init__(self):
        for name in ("rho1", "rho2", "rho3"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive number, got {value!r}")


class Permittivity:
    """Element-wise averaged symmetric positive definite permittivity."""

    def __init__(self, cell_average: np.ndarray):
        cell_average = np.asarray(cell_average, dtype=float)
        if cell_average.ndim != 3 or cell_average.shape[1:] != (3, 3):
            raise ValueError("cell_average must have shape (E, 3, 3)")
        asym = np.abs(cell_average - cell_average.transpose(0, 2, 1)).max(initial=0.0)
        if asym > 1e-12 * max(1.0, np.abs(cell_average).max(initial=0.0)):
            raise ValueError(f"permittivity is not symmetric (asymmetry {asym:.2e})")
        if len(cell_average) and np.linalg.eigvalsh(cell_average).min() <= 0.0:
            raise ValueError("permittivity must be positive definite")
        self.cell_average = cell_average

    @classmethod
    def identity(cls, n_elements: int) -> "Permittivity":
        return cls(np.broadcast_to(np.eye(3), (n_elements, 3, 3)).copy())

    @classmethod
    def from_data(cls, mesh, eps=None, q: int = DEFAULT_ORDER) -> "Permittivity":
        """Accept None (identity), a constant 3x3 matrix, an (E, 3, 3) array,
        or a callable ``eps(points) -> (..., 3, 3)`` averaged over each cell."""
        if eps is None:
            return cls.identity(mesh.n_elements)
        if isinstance(eps, Permittivity):
            return eps
        if callable(eps):
            rule = cell_rule_batch(mesh.vertices[mesh.elements], q)
            values = np.asarray(eps(rule.points), dtype=float)
            avg = np.einsum("eqij,eq->eij", values, rule.weights) / mesh.volumes[:, None, None]
            return cls(0.5 * (avg + avg.transpose(0, 2, 1)))
        eps = np.asarray(eps, dtype=float)
        if eps.shape == (3, 3):
            return cls(np.broadcast_to(eps, (mesh.n_elements, 3, 3)).copy())
        return cls(eps)


def element_matrices(areas, diameters, outward_normals, tangents, eps, rho=None) -> np.ndarray:
    """Closed-form element matrices for a batch of elements.

    ``areas`` (E, N), ``diameters`` (E,), ``outward_normals`` (E, N, 3),
    ``tangents`` (E, N, 2, 3) with the face tangent pair shared by both
    neighbours, ``eps`` (E, 3, 3). Returns an (E, 8+4N, 8+4N) array.
    """
    rho = rho or StabilizationWeights()
    areas = np.asarray(areas, dtype=float)
    n = np.asarray(outward_normals, dtype=float)
    tangents = np.asarray(tangents, dtype=float)
    E, N = areas.shape
    if np.any(areas <= 0.0) or np.any(np.asarray(diameters) <= 0.0):
        raise ValueError("degenerate element: nonpositive face area or diameter")
    lay = LocalLayout(N)
    K = np.zeros((E, lay.size, lay.size))
    w = areas / np.asarray(diameters, dtype=float)[:, None]  # |f_i| / h_T
    faces = np.arange(N)

    # lambda stabilizer (A, B, C)
    K[:, 0, 0] = rho.rho1 * w.sum(axis=1)
    K[:, 0, lay.lambda_b] = -rho.rho1 * w
    K[:, lay.lambda_b, 0] = -rho.rho1 * w
    K[:, 1 + faces, 1 + faces] = rho.rho1 * w

    # D: lambda_b against u through eps * grad_w
    D = areas[:, :, None] * np.einsum("ejk,eik->eij", eps, n)
    K[:, lay.lambda_b, lay.u] = D
    K[:, lay.u, lay.lambda_b] = D.transpose(0, 2, 1)

    # q stabilizer (E, F, H)
    axes_x_n = np.cross(np.eye(DIM)[None, None, :, :], n[:, :, None, :])  # (E, N, 3, 3): e^j x n_i
    Eblk = rho.rho2 * np.einsum("ei,eikd,eijd->ekj", w, axes_x_n, axes_x_n)
    K[:, lay.q0, lay.q0] = Eblk
    rotated = np.cross(tangents, n[:, :, None, :])  # e^k_bn,i = e^k_b,i x n_i
    F = -rho.rho2 * np.einsum("ei,eikd,eijd->ejik", w, rotated, axes_x_n).reshape(E, DIM, 2 * N)
    K[:, lay.q0, lay.q_b] = F
    K[:, lay.q_b, lay.q0] = F.transpose(0, 2, 1)
    H = rho.rho2 * np.einsum("ei,eikd,eild->eikl", w, rotated, rotated)
    qb = lay.q_b.start + 2 * faces
    for k in range(2):
        for l in range(2):
            K[:, qb + k, qb + l] = H[:, :, k, l]

    # G: q_0 against s_b through grad_w
    G = (areas[:, :, None] * n).transpose(0, 2, 1)  # (E, 3, N)
    K[:, lay.q0, lay.s_b] = G
    K[:, lay.s_b, lay.q0] = G.transpose(0, 2, 1)

    # I: q_b against u through curl_w
    I = -(areas[:, :, None, None] * rotated).reshape(E, 2 * N, DIM)
    K[:, lay.q_b, lay.u] = I
    K[:, lay.u, lay.q_b] = I.transpose(0, 2, 1)

    # s stabilizer enters with a minus sign (J, K, L)
    s0, sb = lay.s0, lay.s_b.start + faces
    K[:, s0, s0] = -rho.rho3 * w.sum(axis=1)
    K[:, s0, lay.s_b] = rho.rho3 * w
    K[:, lay.s_b, s0] = rho.rho3 * w
    K[:, sb, sb] = -rho.rho3 * w
    return K


def element_matrix(mesh, element: int, eps=None, rho=None) -> np.ndarray:
    """Stiffness matrix of one element of ``mesh``; ``eps`` is a 3x3 cell average."""
    faces = mesh.element_faces[element]
    eps = np.eye(3) if eps is None else np.asarray(eps, dtype=float)
    return element_matrices(
        mesh.face_areas[faces][None],
        mesh.diameters[[element]],
        mesh.outward_normals[[element]],
        face_tangents(mesh.face_normals[faces])[None],
        eps[None],
        rho,
    )[0]


def mesh_element_matrices(mesh, permittivity: Permittivity, rho=None, elements=None):
    if elements is None:
        elements = np.arange(mesh.n_elements)
    faces = mesh.element_faces[elements]
    return element_matrices(
        mesh.face_areas[faces],
        mesh.diameters[elements],
        mesh.outward_normals[elements],
        face_tangents(mesh.face_normals)[faces],
        permittivity.cell_average[elements],
        rho,
    )


def touches_axis(mesh, elements=None) -> np.ndarray:
    """Elements whose closure meets the line x = y = 0."""
    if elements is None:
        elements = np.arange(mesh.n_elements)
    corners = mesh.vertices[mesh.elements[elements]]
    lo, hi = corners.min(axis=1), corners.max(axis=1)
    return (lo[:, 0] <= 0.0) & (hi[:, 0] >= 0.0) & (lo[:, 1] <= 0.0) & (hi[:, 1] >= 0.0)


def quadrature_orders(mesh, data, q: int = DEFAULT_ORDER) -> np.ndarray:
    """Per-element Gauss order: ``q``, raised near the r = 0 axis for singular data."""
    orders = np.full(mesh.n_elements, int(q))
    if getattr(data, "singular_axis", False):
        orders[touches_axis(mesh)] = max(int(q), SINGULAR_ORDER)
    return orders


def _checked(values, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"non-finite values from {what}")
    return values


def element_loads(mesh, data, q: int = DEFAULT_ORDER, elements=None) -> np.ndarray:
    """Load vectors (E, 32) in local layout order.

    Slots: lambda_0 = -int_T f, q_0 = int_T g, q_b = <chi, e^k_b> on boundary
    faces. The hole flux terms are added once per hole at the global level,
    so the lambda_b slots stay zero here.
    """
    if elements is None:
        elements = np.arange(mesh.n_elements)
    elements = np.asarray(elements)
    lay = HEX_LAYOUT
    out = np.zeros((len(elements), lay.size))
    orders = quadrature_orders(mesh, data, q)[elements]
    tangents = face_tangents(mesh.face_normals)
    for order in np.unique(orders):
        sel = np.nonzero(orders == order)[0]
        els = elements[sel]
        rule = cell_rule_batch(mesh.vertices[mesh.elements[els]], order)
        out[sel, lay.lambda0] = -rule.integrate(_checked(data.f(rule.points), "f"))
        out[sel, lay.q0] = rule.integrate(_checked(data.g(rule.points), "g"))

        faces = mesh.element_faces[els]  # (e, 6)
        on_boundary = mesh.face_elements[faces, 1] < 0
        rows, local = np.nonzero(on_boundary)
        if rows.size == 0:
            continue
        bf = faces[rows, local]
        frule = face_rule_batch(mesh.vertices[mesh.face_vertices[bf]], order)
        normal = mesh.outward_normals[els[rows], local]  # outward from the domain
        chi = _checked(data.chi(frule.points, normal[:, None, :]), "chi")
        proj = np.einsum("fqd,fkd->fqk", chi, tangents[bf])
        for k in range(2):
            out[sel[rows], lay.q_b.start + 2 * local + k] = frule.integrate(proj[:, :, k])
    return out


def element_load(mesh, element: int, data, q: int = DEFAULT_ORDER) -> np.ndarray:
    return element_loads(mesh, data, q, elements=[element])[0]
