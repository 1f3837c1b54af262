"""Global numbering, constrained scatter and right-hand side of the PDWG system.

Global ordering:

- 8 unknowns per element: lambda_0, q_0 (3), s_0, u (3)
- 3 unknowns per face: q_b (2), s_b
- lambda_b: one per interior face, one shared per hole component; none on
  the exterior boundary (where lambda_b = 0)
- one Lagrange multiplier enforcing sum_T |T| s_0 = 0
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .element import HEX_LAYOUT, Permittivity, element_loads, mesh_element_matrices
from .quadrature import DEFAULT_ORDER, face_rule_batch

log = logging.getLogger(__name__)

ELIMINATED = -1
PER_ELEMENT = 8
PER_FACE = 3


@dataclass(frozen=True)
class DofMap:
    n_elements: int
    n_faces: int
    lambda_b: np.ndarray  # (F,) global index or ELIMINATED
    hole_dofs: np.ndarray  # (L,) shared lambda_b index per hole component
    multiplier: int
    total_dofs: int

    def element_dofs(self, mesh) -> np.ndarray:
        """(E, 32) global indices of every local unknown, ELIMINATED where removed."""
        lay = HEX_LAYOUT
        E = mesh.n_elements
        base = PER_ELEMENT * np.arange(E)[:, None]
        faces = mesh.element_faces
        fbase = PER_ELEMENT * self.n_elements + PER_FACE * faces
        out = np.empty((E, lay.size), dtype=np.int64)
        out[:, lay.lambda0] = base[:, 0]
        out[:, lay.lambda_b] = self.lambda_b[faces]
        out[:, lay.q0] = base + 1 + np.arange(3)
        out[:, lay.q_b.start : lay.q_b.stop : 2] = fbase
        out[:, lay.q_b.start + 1 : lay.q_b.stop : 2] = fbase + 1
        out[:, lay.s0] = base[:, 0] + 4
        out[:, lay.s_b] = fbase + 2
        out[:, lay.u] = base + 5 + np.arange(3)
        return out

    def u_dofs(self) -> np.ndarray:
        return PER_ELEMENT * np.arange(self.n_elements)[:, None] + 5 + np.arange(3)

    def s0_dofs(self) -> np.ndarray:
        return PER_ELEMENT * np.arange(self.n_elements) + 4

    def dof_upper_bound(self) -> int:
        """Upper bound 2 N_T + 2 N_f + 2 d N_T + (d - 1) N_f, plus our multiplier."""
        return 2 * self.n_elements + 2 * self.n_faces + 6 * self.n_elements + 2 * self.n_faces + 1


def build_dof_map(mesh) -> DofMap:
    E, F = mesh.n_elements, mesh.n_faces
    next_dof = PER_ELEMENT * E + PER_FACE * F
    lambda_b = np.full(F, ELIMINATED, dtype=np.int64)
    interior = mesh.interior_faces
    lambda_b[interior] = next_dof + np.arange(len(interior))
    next_dof += len(interior)
    hole_dofs = []
    for faces in mesh.boundary_components[1:]:
        lambda_b[faces] = next_dof
        hole_dofs.append(next_dof)
        next_dof += 1
    return DofMap(E, F, lambda_b, np.array(hole_dofs, dtype=np.int64), next_dof, next_dof + 1)


@dataclass(frozen=True)
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    asymmetry: float
    dofmap: DofMap

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def symmetry_defect(A) -> float:
    """max |A - A^T| relative to max |A|."""
    A = sp.csr_matrix(A)
    scale = abs(A).max() if A.nnz else 0.0
    if scale == 0.0:
        return 0.0
    diff = A - A.T
    return float(abs(diff).max() / scale) if diff.nnz else 0.0


def assemble(mesh, dofmap: DofMap | None = None, eps=None, rho=None, data=None,
             q: int = DEFAULT_ORDER) -> GlobalSystem:
    """Scatter all element systems into the reduced global matrix and load vector."""
    dofmap = dofmap or build_dof_map(mesh)
    if dofmap.n_elements != mesh.n_elements or dofmap.n_faces != mesh.n_faces:
        raise ValueError("dof map was built for a different mesh")
    permittivity = Permittivity.from_data(mesh, eps)
    K = mesh_element_matrices(mesh, permittivity, rho)
    dofs = dofmap.element_dofs(mesh)
    n = dofmap.total_dofs

    rows = np.broadcast_to(dofs[:, :, None], K.shape).ravel()
    cols = np.broadcast_to(dofs[:, None, :], K.shape).ravel()
    vals = K.ravel()
    keep = (rows >= 0) & (cols >= 0) & (vals != 0.0)
    rows, cols, vals = rows[keep], cols[keep], vals[keep]

    # Mean-zero constraint on s_0 as a symmetric bordered row/column.
    s0 = dofmap.s0_dofs()
    m = np.full(len(s0), dofmap.multiplier)
    rows = np.concatenate([rows, s0, m])
    cols = np.concatenate([cols, m, s0])
    vals = np.concatenate([vals, mesh.volumes, mesh.volumes])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()

    rhs = np.zeros(n)
    if data is not None:
        loads = element_loads(mesh, data, q)
        live = dofs >= 0
        np.add.at(rhs, dofs[live], loads[live])
        alphas = tuple(getattr(data, "alphas", ()) or ())
        if alphas and len(alphas) != len(dofmap.hole_dofs):
            raise ValueError(
                f"{len(alphas)} hole fluxes given for {len(dofmap.hole_dofs)} hole components"
            )
        for dof, alpha in zip(dofmap.hole_dofs, alphas):
            rhs[dof] += alpha
    if not np.all(np.isfinite(rhs)):
        raise FloatingPointError("non-finite entries in the assembled load vector")
    return GlobalSystem(A, rhs, symmetry_defect(A), dofmap)


def export_matrix_market(system: GlobalSystem, path, rhs_path=None) -> None:
    scipy.io.mmwrite(str(path), system.matrix, symmetry="symmetric")
    if rhs_path is not None:
        scipy.io.mmwrite(str(rhs_path), system.rhs[:, None])


@dataclass
class CompatibilityReport:
    max_div_g: float
    max_flux_residual: float
    max_normal_chi: float
    max_tangency_residual: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return max(self.max_div_g, self.max_flux_residual, self.max_normal_chi,
                   self.max_tangency_residual) <= self.tolerance


def _fd_divergence(g, pts, step=1e-5):
    div = np.zeros(pts.shape[:-1])
    for d in range(3):
        e = np.zeros(3)
        e[d] = step
        div += (g(pts + e)[..., d] - g(pts - e)[..., d]) / (2 * step)
    return div


def _face_hat_terms(loops, rule_q):
    """Bilinear nodal hats on each face: values (F, Q, 4) and surface gradients (F, Q, 4, 3)."""
    x, w = np.polynomial.legendre.leggauss(rule_q)
    x = (x + 1) / 2
    S, T = np.meshgrid(x, x, indexing="ij")
    s, t = S.ravel(), T.ravel()
    N = np.column_stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
    dNs = np.column_stack([-(1 - t), (1 - t), t, -t])
    dNt = np.column_stack([-(1 - s), -s, s, (1 - s)])
    a_s = np.einsum("qv,fvd->fqd", dNs, loops)
    a_t = np.einsum("qv,fvd->fqd", dNt, loops)
    G = np.stack([np.stack([(a_s * a_s).sum(-1), (a_s * a_t).sum(-1)], -1),
                  np.stack([(a_t * a_s).sum(-1), (a_t * a_t).sum(-1)], -1)], -2)
    Ginv = np.linalg.inv(G)
    # surface gradient = [a_s a_t] G^-1 [dN/ds, dN/dt]
    coef = np.einsum("fqab,qvb->fqva", Ginv, np.stack([dNs, dNt], -1))
    grad = coef[..., 0, None] * a_s[:, :, None, :] + coef[..., 1, None] * a_t[:, :, None, :]
    return N, grad


def check_compatibility(data, mesh, q: int = DEFAULT_ORDER, tolerance: float = 1e-6,
                        probe_limit: int | None = None) -> CompatibilityReport:
    """Diagnose the data compatibility conditions; logs warnings, never raises.

    - div g = 0, by central differences at cell quadrature points
    - <g.n, rho> + <chi x n, grad rho x n> = 0 for nodal hat probes rho on the boundary
    - chi . n = 0 and chi = n x (chi x n) on the boundary
    """
    from .quadrature import cell_rule_batch

    rule = cell_rule_batch(mesh.vertices[mesh.elements], q)
    max_div = float(np.abs(_fd_divergence(data.g, rule.points)).max())

    bfaces = mesh.boundary_faces
    owners = mesh.face_elements[bfaces, 0]
    local = np.argmax(mesh.element_faces[owners] == bfaces[:, None], axis=1)
    normals = mesh.outward_normals[owners, local][:, None, :]
    loops = mesh.vertices[mesh.face_vertices[bfaces]]
    frule = face_rule_batch(loops, q)
    nb = np.broadcast_to(normals, frule.points.shape)
    chi = np.asarray(data.chi(frule.points, normals), dtype=float)
    max_normal = float(np.abs((chi * nb).sum(-1)).max())
    back = np.cross(nb, np.cross(chi, nb))
    max_tang = float(np.linalg.norm(chi - back, axis=-1).max())

    hat, grad = _face_hat_terms(loops, q)
    gn = (np.asarray(data.g(frule.points)) * nb).sum(-1)
    chixn = np.cross(chi, nb)
    term = np.einsum("fq,qv,fq->fv", gn, hat, frule.weights)
    grad_x_n = np.cross(grad, nb[:, :, None, :])
    term += np.einsum("fqd,fqvd,fq->fv", chixn, grad_x_n, frule.weights)
    verts = mesh.face_vertices[bfaces]
    residual = np.zeros(len(mesh.vertices))
    np.add.at(residual, verts.ravel(), term.ravel())
    probes = np.unique(verts)
    if probe_limit is not None:
        probes = probes[:probe_limit]
    max_flux = float(np.abs(residual[probes]).max()) if probes.size else 0.0

    report = CompatibilityReport(max_div, max_flux, max_normal, max_tang, tolerance)
    for name in ("max_div_g", "max_flux_residual", "max_normal_chi", "max_tangency_residual"):
        value = getattr(report, name)
        if value > tolerance:
            log.warning("compatibility check %s = %.3e exceeds %.1e", name, value, tolerance)
    return report
