"""Exact solutions used in the convergence studies, with closed-form data.

Every field takes points of shape (..., 3) and returns (..., 3) vectors or
(...,) scalars, so they evaluate directly on stacked quadrature points.
For eps = I the data are f = div u and g = curl u; the boundary data are
chi = u x n and the hole fluxes alpha_i = int_{Gamma_i} eps u . n.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .quadrature import DEFAULT_ORDER, SINGULAR_ORDER, face_rule_batch

PI = np.pi


def _xyz(p):
    p = np.asarray(p, dtype=float)
    return p[..., 0], p[..., 1], p[..., 2]


def _stack(*components):
    return np.stack(np.broadcast_arrays(*components), axis=-1)


def _off_axis(x, y):
    r2 = x * x + y * y
    if np.any(r2 == 0.0):
        raise ValueError("evaluation on the singular axis r = 0")
    return r2


# u1: vanishes on the boundary of the unit cube.
def _u1(p):
    x, y, z = _xyz(p)
    return _stack(y * (1 - y) * z * (1 - z), x * (1 - x) * z * (1 - z), x * (1 - x) * y * (1 - y))


def _g1(p):
    x, y, z = _xyz(p)
    return _stack(2 * x * (1 - x) * (z - y), 2 * y * (1 - y) * (x - z), 2 * z * (1 - z) * (y - x))


def _zero_scalar(p):
    return np.zeros(np.shape(p)[:-1])


def _zero_vector(p):
    return np.zeros(np.shape(p))


def _u2(p):
    x, y, z = _xyz(p)
    return _stack(
        np.sin(PI * x) * np.sin(PI * y) * np.sin(PI * z), x * y * z, (x + 1) * (y + 1) * (z + 1)
    )


def _f2(p):
    x, y, z = _xyz(p)
    return PI * np.cos(PI * x) * np.sin(PI * y) * np.sin(PI * z) + x * z + (x + 1) * (y + 1)


def _g2(p):
    x, y, z = _xyz(p)
    return _stack(
        (x + 1) * (z + 1) - x * y,
        PI * np.sin(PI * x) * np.sin(PI * y) * np.cos(PI * z) - (y + 1) * (z + 1),
        y * z - PI * np.sin(PI * x) * np.cos(PI * y) * np.sin(PI * z),
    )


# u3: third component r^(2/3) sin(2 theta) (1-x)(1-y) = 2 x y (1-x)(1-y) r^(-4/3).
def _w3(x, y):
    r2 = _off_axis(x, y)
    return 2 * x * y * (1 - x) * (1 - y) * r2 ** (-2.0 / 3.0)


def _w3_grad(x, y):
    r2 = _off_axis(x, y)
    P = x * y * (1 - x) * (1 - y)
    a = r2 ** (-2.0 / 3.0)
    b = (4.0 / 3.0) * P * r2 ** (-5.0 / 3.0)
    dx = 2 * (y * (1 - y) * (1 - 2 * x) * a - b * x)
    dy = 2 * (x * (1 - x) * (1 - 2 * y) * a - b * y)
    return dx, dy


def _u3(p):
    x, y, z = _xyz(p)
    return _stack(y * (1 - y) * z * (1 - z), x * (1 - x) * z * (1 - z), _w3(x, y))


def _g3(p):
    x, y, z = _xyz(p)
    wx, wy = _w3_grad(x, y)
    return _stack(
        wy - x * (1 - x) * (1 - 2 * z),
        y * (1 - y) * (1 - 2 * z) - wx,
        (1 - 2 * x) * z * (1 - z) - (1 - 2 * y) * z * (1 - z),
    )


# u4 = grad(r^(2/3) sin(2 theta / 3)) = (2/3) r^(-1/3) (-sin(theta/3), cos(theta/3), 0);
# curl of a gradient vanishes and the potential is harmonic, so f = 0 and g = 0.
def _u4(p):
    x, y, z = _xyz(p)
    r2 = _off_axis(x, y)
    theta = np.arctan2(y, x)
    c = (2.0 / 3.0) * r2 ** (-1.0 / 6.0)
    return _stack(-c * np.sin(theta / 3.0), c * np.cos(theta / 3.0), np.zeros_like(z))


def _u5(p):
    x, y, z = _xyz(p)
    return _stack(x + y + z, x - z, x + 3 * y)


def _f5(p):
    return np.ones(np.shape(p)[:-1])


def _g5(p):
    return _stack(4.0 + _zero_scalar(p), 0.0, 0.0)


def _u6(p):
    x, y, z = _xyz(p)
    return _stack(np.sin(x) * np.sin(y) * np.sin(z), x * y * z, (x + 1) * (y + 1) * (z + 1))


def _f6(p):
    x, y, z = _xyz(p)
    return np.cos(x) * np.sin(y) * np.sin(z) + x * z + (x + 1) * (y + 1)


def _g6(p):
    x, y, z = _xyz(p)
    return _stack(
        (x + 1) * (z + 1) - x * y,
        np.sin(x) * np.sin(y) * np.cos(z) - (y + 1) * (z + 1),
        y * z - np.sin(x) * np.cos(y) * np.sin(z),
    )


_CONST = np.array([1.0, 2.0, 3.0])


def _uconst(p):
    return np.broadcast_to(_CONST, np.shape(p)).copy()


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact field u with f = div(eps u) and g = curl u for eps = I."""

    name: str
    u: Callable
    f: Callable
    g: Callable
    regularity: str
    singular_axis: bool = False

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return {"u": self.u(x), "f": self.f(x), "g": self.g(x)}

    def data(self, alphas=()) -> "ManufacturedData":
        return ManufacturedData(
            u=self.u, f=self.f, g=self.g, alphas=tuple(alphas),
            singular_axis=self.singular_axis, name=self.name,
        )


SOLUTIONS = {
    "u1": ManufacturedSolution("u1", _u1, _zero_scalar, _g1, "smooth, zero tangential trace"),
    "u2": ManufacturedSolution("u2", _u2, _f2, _g2, "smooth"),
    "u3": ManufacturedSolution("u3", _u3, _zero_scalar, _g3, "H^(5/3-e)", singular_axis=True),
    "u4": ManufacturedSolution("u4", _u4, _zero_scalar, _zero_vector, "H^(2/3-e)", singular_axis=True),
    "u5": ManufacturedSolution("u5", _u5, _f5, _g5, "linear"),
    "u6": ManufacturedSolution("u6", _u6, _f6, _g6, "smooth"),
    "const": ManufacturedSolution("const", _uconst, _zero_scalar, _zero_vector, "constant"),
}


def get_solution(name: str) -> ManufacturedSolution:
    try:
        return SOLUTIONS[name]
    except KeyError:
        raise KeyError(f"unknown solution {name!r}; choose from {sorted(SOLUTIONS)}") from None


def evaluate(name: str, x):
    return get_solution(name).evaluate(x)


@dataclass(frozen=True)
class ManufacturedData:
    """Right-hand side data of a div-curl problem.

    ``chi(points, normals)`` defaults to u x n. ``alphas[i]`` is the flux
    through hole component i + 1. ``u`` is optional and only used for errors.
    """

    f: Callable
    g: Callable
    u: Callable | None = None
    chi_fn: Callable | None = None
    alphas: tuple = field(default_factory=tuple)
    singular_axis: bool = False
    name: str = "custom"

    def chi(self, points, normals):
        if self.chi_fn is not None:
            return self.chi_fn(points, normals)
        return np.cross(self.u(points), np.broadcast_to(normals, np.shape(points)))

    def with_alphas(self, alphas) -> "ManufacturedData":
        return replace(self, alphas=tuple(float(a) for a in alphas))


def zero_data() -> ManufacturedData:
    return ManufacturedData(f=_zero_scalar, g=_zero_vector, u=_zero_vector)


def project(mesh, name_or_field, q: int = DEFAULT_ORDER) -> np.ndarray:
    """Cell averages (E, 3) of a vector field: the L2 projection onto constants."""
    from .element import touches_axis
    from .quadrature import cell_rule_batch

    sol = SOLUTIONS.get(name_or_field) if isinstance(name_or_field, str) else None
    if isinstance(name_or_field, str) and sol is None:
        get_solution(name_or_field)
    fn = sol.u if sol is not None else name_or_field
    orders = np.full(mesh.n_elements, int(q))
    if sol is not None and sol.singular_axis:
        orders[touches_axis(mesh)] = max(int(q), SINGULAR_ORDER)
    out = np.empty((mesh.n_elements, 3))
    for order in np.unique(orders):
        sel = np.nonzero(orders == order)[0]
        rule = cell_rule_batch(mesh.vertices[mesh.elements[sel]], order)
        out[sel] = rule.integrate(fn(rule.points)) / mesh.volumes[sel, None]
    return out


def hole_fluxes(mesh, name_or_field, eps=None, q: int = DEFAULT_ORDER) -> list[float]:
    """alpha_i = int_{Gamma_i} (eps u) . n with n pointing out of the domain (into hole i)."""
    fn = get_solution(name_or_field).u if isinstance(name_or_field, str) else name_or_field
    eps = np.eye(3) if eps is None else np.asarray(eps, dtype=float)
    alphas = []
    for faces in mesh.boundary_components[1:]:
        owners = mesh.face_elements[faces, 0]
        local = np.argmax(mesh.element_faces[owners] == faces[:, None], axis=1)
        normals = mesh.outward_normals[owners, local]
        rule = face_rule_batch(mesh.vertices[mesh.face_vertices[faces]], q)
        flux = np.einsum("ij,fqj,fi->fq", eps, fn(rule.points), normals)
        alphas.append(float(rule.integrate(flux).sum()))
    return alphas
