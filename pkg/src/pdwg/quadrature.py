"""Tensor-product Gauss-Legendre rules mapped onto hexahedra and their faces."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import HEX_FACES

DEFAULT_ORDER = 4
SINGULAR_ORDER = 6


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (..., Q, 3) physical points
    weights: np.ndarray  # (..., Q) physical weights (Jacobian included)

    def integrate(self, values):
        """Sum ``values`` (shape (..., Q) or (..., Q, k)) against the weights."""
        values = np.asarray(values)
        if values.ndim == self.weights.ndim:
            return np.einsum("...q,...q->...", values, self.weights)
        return np.einsum("...qk,...q->...k", values, self.weights)


@lru_cache(maxsize=None)
def gauss_legendre_01(q: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    if q < 1:
        raise ValueError(f"quadrature order must be >= 1, got {q}")
    x, w = np.polynomial.legendre.leggauss(q)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _reference_cell(q: int):
    x, w = gauss_legendre_01(q)
    S, T, U = np.meshgrid(x, x, x, indexing="ij")
    ref = np.column_stack([S.ravel(), T.ravel(), U.ravel()])
    wts = np.einsum("i,j,k->ijk", w, w, w).ravel()
    shape = np.empty((len(ref), 8))
    dshape = np.empty((len(ref), 8, 3))
    for v in range(8):
        bits = np.array([v & 1, (v >> 1) & 1, (v >> 2) & 1])
        f = np.where(bits, ref, 1.0 - ref)
        df = np.where(bits, 1.0, -1.0)
        shape[:, v] = f.prod(axis=1)
        dshape[:, v, 0] = df[0] * f[:, 1] * f[:, 2]
        dshape[:, v, 1] = f[:, 0] * df[1] * f[:, 2]
        dshape[:, v, 2] = f[:, 0] * f[:, 1] * df[2]
    return shape, dshape, wts


@lru_cache(maxsize=None)
def _reference_face(q: int):
    x, w = gauss_legendre_01(q)
    S, T = np.meshgrid(x, x, indexing="ij")
    s, t = S.ravel(), T.ravel()
    # Bilinear map over a quad loop (p0, p1, p2, p3).
    shape = np.column_stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
    ds = np.column_stack([-(1 - t), (1 - t), t, -t])
    dt = np.column_stack([-(1 - s), -s, s, (1 - s)])
    return shape, ds, dt, np.outer(w, w).ravel()


def cell_rule_batch(corners: np.ndarray, q: int = DEFAULT_ORDER) -> QuadratureRule:
    """Rules for many hexahedra at once; ``corners`` has shape (E, 8, 3)."""
    shape, dshape, wts = _reference_cell(int(q))
    pts = np.einsum("qv,evd->eqd", shape, corners)
    J = np.einsum("qvk,evd->eqdk", dshape, corners)
    return QuadratureRule(pts, wts * np.abs(np.linalg.det(J)))


def face_rule_batch(loops: np.ndarray, q: int = DEFAULT_ORDER) -> QuadratureRule:
    """Rules for many quadrilaterals at once; ``loops`` has shape (F, 4, 3)."""
    shape, ds, dt, wts = _reference_face(int(q))
    pts = np.einsum("qv,fvd->fqd", shape, loops)
    a_s = np.einsum("qv,fvd->fqd", ds, loops)
    a_t = np.einsum("qv,fvd->fqd", dt, loops)
    jac = np.linalg.norm(np.cross(a_s, a_t), axis=2)
    return QuadratureRule(pts, wts * jac)


def cell_rule(mesh, element: int, q: int = DEFAULT_ORDER) -> QuadratureRule:
    """Gauss rule with q^3 points on one element of ``mesh``."""
    rule = cell_rule_batch(mesh.vertices[mesh.elements[[element]]], q)
    return QuadratureRule(rule.points[0], rule.weights[0])


def face_rule(mesh, face: int, q: int = DEFAULT_ORDER) -> QuadratureRule:
    """Gauss rule with q^2 points on one face of ``mesh``."""
    rule = face_rule_batch(mesh.vertices[mesh.face_vertices[[face]]], q)
    return QuadratureRule(rule.points[0], rule.weights[0])


def element_corner_loops(corners: np.ndarray) -> np.ndarray:
    """Face loops (E, 6, 4, 3) of hexahedra given their (E, 8, 3) corners."""
    return corners[:, HEX_FACES]
