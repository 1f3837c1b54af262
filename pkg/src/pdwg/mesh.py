"""Hexahedral meshes: structured generators, JSON import/export and topology.

Corners of a hexahedron are stored in tensor-product order, i.e. corner
``i + 2*j + 4*k`` sits at the (i, j, k) vertex of the reference cube.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

# Local faces as closed vertex loops: x-, x+, y-, y+, z-, z+.
HEX_FACES = np.array(
    [
        [0, 2, 6, 4],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 3, 7, 6],
        [0, 1, 3, 2],
        [4, 5, 7, 6],
    ]
)

_GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


class MeshError(ValueError):
    """Raised for malformed or geometrically invalid meshes."""


class DomainTag(str, enum.Enum):
    UNIT_CUBE = "UnitCube"
    DOMAIN_A = "DomainA"
    DOMAIN_B = "DomainB"
    DOMAIN_C = "DomainC"
    IMPORTED = "Imported"


@dataclass(frozen=True)
class Face:
    id: int
    vertex_ids: tuple[int, int, int, int]
    area: float
    oriented_normal: np.ndarray
    adjacent_elements: tuple[int, ...]
    boundary_component: int | None


@dataclass(frozen=True)
class Element:
    id: int
    vertex_ids: tuple[int, ...]
    face_ids: tuple[int, ...]
    volume: float
    diameter: float
    outward_normals: np.ndarray
    centroid: np.ndarray


class Mesh:
    """Immutable hexahedral mesh with derived geometry held in numpy arrays.

    Array attributes (E elements, F faces):

    - ``vertices`` (V, 3), ``elements`` (E, 8)
    - ``element_faces`` (E, 6) global face ids per local face
    - ``outward_normals`` (E, 6, 3) unit normals pointing out of each element
    - ``volumes``, ``diameters`` (E,), ``centroids`` (E, 3)
    - ``face_vertices`` (F, 4), ``face_areas`` (F,), ``face_centroids`` (F, 3)
    - ``face_normals`` (F, 3) prescribed orientation shared by both sides
    - ``face_elements`` (F, 2), second column -1 on the boundary
    - ``face_component`` (F,), boundary component index or -1 for interior faces
    """

    def __init__(self, vertices, elements, domain_tag=DomainTag.IMPORTED):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        elements = np.ascontiguousarray(elements, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if elements.ndim != 2 or elements.shape[1] != 8:
            raise MeshError("elements must be an (n, 8) array of hexahedron corners")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        bad = (elements < 0) | (elements >= len(vertices))
        if bad.any():
            e, corner = (int(i) for i in np.argwhere(bad)[0])
            local = int(np.nonzero((HEX_FACES == corner).any(axis=1))[0][0])
            raise MeshError(
                f"element {e} face {local} references missing vertex {int(elements[e, corner])}"
            )
        self.vertices = vertices
        self.elements = elements
        self.domain_tag = DomainTag(domain_tag)
        self._build_faces()
        self._build_geometry()
        self.boundary_components = detect_boundary_components(self)
        self.face_component = np.full(self.n_faces, -1, dtype=np.int64)
        for c, ids in enumerate(self.boundary_components):
            self.face_component[ids] = c
        for arr in vars(self).values():
            if isinstance(arr, np.ndarray):
                arr.flags.writeable = False

    # -- construction -------------------------------------------------------

    def _build_faces(self):
        E = len(self.elements)
        loops = self.elements[:, HEX_FACES]  # (E, 6, 4)
        keys = np.sort(loops.reshape(-1, 4), axis=1)
        uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
        counts = np.bincount(inverse, minlength=len(uniq))
        if np.any(counts > 2):
            f = int(np.nonzero(counts > 2)[0][0])
            raise MeshError(f"face {f} is shared by more than two elements")
        self.element_faces = inverse.reshape(E, 6)
        self.face_vertices = loops.reshape(-1, 4)[first]
        owner = np.repeat(np.arange(E), 6)
        face_elements = np.full((len(uniq), 2), -1, dtype=np.int64)
        # Stable sort puts the lower element id first for every face.
        order = np.argsort(inverse, kind="stable")
        sorted_faces = inverse[order]
        sorted_owner = owner[order]
        starts = np.r_[0, np.nonzero(np.diff(sorted_faces))[0] + 1]
        face_elements[:, 0] = sorted_owner[starts]
        second = np.nonzero(counts == 2)[0]
        face_elements[second, 1] = sorted_owner[starts[second] + 1]
        self.face_elements = face_elements

    def _build_geometry(self):
        V = self.vertices
        fv = V[self.face_vertices]  # (F, 4, 3)
        # Vector area of a planar quad from its diagonals.
        vec_area = 0.5 * np.cross(fv[:, 2] - fv[:, 0], fv[:, 3] - fv[:, 1])
        area = np.linalg.norm(vec_area, axis=1)
        if np.any(area <= 0.0):
            f = int(np.nonzero(area <= 0.0)[0][0])
            raise MeshError(f"face {f} has zero area")
        normal = vec_area / area[:, None]
        scale = np.max(np.linalg.norm(fv - fv.mean(axis=1, keepdims=True), axis=2), axis=1)
        offplane = np.abs(np.einsum("fkd,fd->fk", fv - fv[:, :1], normal)).max(axis=1)
        if np.any(offplane > 1e-10 * scale):
            f = int(np.nonzero(offplane > 1e-10 * scale)[0][0])
            raise MeshError(f"face {f} is not planar")
        # Prescribed orientation: the dominant component is positive.
        dominant = np.argmax(np.abs(normal), axis=1)
        sign = np.sign(normal[np.arange(len(normal)), dominant])
        self.face_normals = normal * sign[:, None]
        self.face_areas = area
        self.face_centroids = fv.mean(axis=1)

        ev = V[self.elements]  # (E, 8, 3)
        self.volumes = _hex_volumes(ev)
        if np.any(self.volumes <= 0.0):
            e = int(np.nonzero(self.volumes <= 0.0)[0][0])
            raise MeshError(f"element {e} is inverted or degenerate (volume {self.volumes[e]:.3e})")
        self.centroids = ev.mean(axis=1)
        diffs = ev[:, :, None, :] - ev[:, None, :, :]
        self.diameters = np.sqrt((diffs**2).sum(axis=3)).max(axis=(1, 2))

        n = self.face_normals[self.element_faces]  # (E, 6, 3)
        away = self.face_centroids[self.element_faces] - self.centroids[:, None, :]
        flip = np.where(np.einsum("efd,efd->ef", n, away) < 0.0, -1.0, 1.0)
        self.outward_normals = n * flip[:, :, None]
        self.orientation_signs = flip

    # -- views ---------------------------------------------------------------

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def meshsize(self) -> float:
        return float(self.diameters.max())

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.nonzero(self.face_elements[:, 1] < 0)[0]

    @property
    def interior_faces(self) -> np.ndarray:
        return np.nonzero(self.face_elements[:, 1] >= 0)[0]

    @property
    def n_holes(self) -> int:
        """Number of interior boundary components (second Betti number L)."""
        return len(self.boundary_components) - 1

    def face(self, i: int) -> Face:
        adj = tuple(int(e) for e in self.face_elements[i] if e >= 0)
        comp = int(self.face_component[i])
        return Face(
            id=int(i),
            vertex_ids=tuple(int(v) for v in self.face_vertices[i]),
            area=float(self.face_areas[i]),
            oriented_normal=self.face_normals[i].copy(),
            adjacent_elements=adj,
            boundary_component=comp if comp >= 0 else None,
        )

    def element(self, i: int) -> Element:
        return Element(
            id=int(i),
            vertex_ids=tuple(int(v) for v in self.elements[i]),
            face_ids=tuple(int(f) for f in self.element_faces[i]),
            volume=float(self.volumes[i]),
            diameter=float(self.diameters[i]),
            outward_normals=self.outward_normals[i].copy(),
            centroid=self.centroids[i].copy(),
        )

    def __repr__(self):
        return (
            f"Mesh({self.domain_tag.value}, elements={self.n_elements}, faces={self.n_faces}, "
            f"components={len(self.boundary_components)}, h={self.meshsize:.4g})"
        )

    # -- serialization ---------------------------------------------------------

    def to_json(self) -> dict:
        return {"vertices": self.vertices.tolist(), "elements": self.elements.tolist()}

    def export(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def _hex_volumes(ev: np.ndarray) -> np.ndarray:
    """Signed volumes of trilinear hexahedra; 2-point Gauss is exact for det J."""
    vol = np.zeros(len(ev))
    for a in _GAUSS2:
        for b in _GAUSS2:
            for c in _GAUSS2:
                dN = _trilinear_shape_grad(a, b, c)  # (8, 3)
                J = np.einsum("evd,vk->edk", ev, dN)
                vol += np.linalg.det(J)
    return vol / 8.0


def _trilinear_shape_grad(a, b, c):
    """Derivatives of the 8 trilinear shape functions on [-1, 1]^3 mapped to [0, 1]^3."""
    s = np.array([(a + 1) / 2, (b + 1) / 2, (c + 1) / 2])
    grad = np.empty((8, 3))
    for v in range(8):
        bits = (v & 1, (v >> 1) & 1, (v >> 2) & 1)
        w = [s[d] if bits[d] else 1.0 - s[d] for d in range(3)]
        dw = [1.0 if bits[d] else -1.0 for d in range(3)]
        grad[v] = [dw[0] * w[1] * w[2], w[0] * dw[1] * w[2], w[0] * w[1] * dw[2]]
    return grad


def detect_boundary_components(mesh: Mesh) -> list[np.ndarray]:
    """Edge-connected components of the boundary faces, exterior first.

    The exterior component is the one touching the boundary vertex with the
    lexicographically largest coordinates; the rest follow by smallest face id.
    """
    bfaces = np.nonzero(mesh.face_elements[:, 1] < 0)[0]
    if bfaces.size == 0:
        return []
    loops = mesh.face_vertices[bfaces]
    edges = np.sort(np.stack([loops, np.roll(loops, -1, axis=1)], axis=2), axis=2).reshape(-1, 2)
    _, edge_id = np.unique(edges, axis=0, return_inverse=True)
    edge_id = edge_id.reshape(-1)
    owner = np.repeat(np.arange(len(bfaces)), 4)
    incidence = coo_matrix(
        (np.ones(len(owner)), (owner, edge_id)), shape=(len(bfaces), edge_id.max() + 1)
    ).tocsr()
    ncomp, labels = connected_components(incidence @ incidence.T, directed=False)

    bverts = np.unique(loops)
    coords = mesh.vertices[bverts]
    top = bverts[np.lexsort(coords.T[::-1])[-1]]
    exterior = labels[np.nonzero((loops == top).any(axis=1))[0][0]]
    comps = [bfaces[labels == c] for c in range(ncomp)]
    order = sorted(range(ncomp), key=lambda c: (c != exterior, comps[c][0]))
    return [comps[c] for c in order]


def structured_box(lower, upper, cells, holes=(), domain_tag=DomainTag.IMPORTED) -> Mesh:
    """Tensor grid of ``cells`` hexahedra over a box, minus cells centred in any hole box."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    nx, ny, nz = (int(c) for c in cells)
    axes = [np.linspace(lower[d], upper[d], c + 1) for d, c in enumerate((nx, ny, nz))]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    elements = np.column_stack(
        [vid(I + (v & 1), J + ((v >> 1) & 1), K + ((v >> 2) & 1)) for v in range(8)]
    )
    centroids = vertices[elements].mean(axis=1)
    keep = np.ones(len(elements), dtype=bool)
    for lo, hi in holes:
        inside = np.all((centroids >= np.asarray(lo)) & (centroids <= np.asarray(hi)), axis=1)
        keep &= ~inside
    elements = elements[keep]
    used, elements = np.unique(elements, return_inverse=True)
    return Mesh(vertices[used], elements.reshape(-1, 8), domain_tag)


def build_unit_cube_mesh(n: int) -> Mesh:
    """Partition (0, 1)^3 into n^3 congruent cubes."""
    if int(n) != n or n < 1:
        raise MeshError(f"unit cube resolution must be a positive integer, got {n!r}")
    return structured_box((0, 0, 0), (1, 1, 1), (n, n, n), domain_tag=DomainTag.UNIT_CUBE)


# Bounding box and hole boxes of the multiply connected test domains.
DOMAINS = {
    DomainTag.DOMAIN_A: ((-2, -2, -2), (2, 2, 2), [((-1, -1, -2), (1, 1, 2))]),
    DomainTag.DOMAIN_B: ((-2, -2, -2), (2, 2, 2), [((-1, -1, -1), (1, 1, 1))]),
    DomainTag.DOMAIN_C: (
        (-2, -2, 0),
        (2, 6, 1),
        [((-1.5, -1.5, 0), (1.5, 1.5, 1)), ((-1.5, 2.5, 0), (1.5, 5.5, 1))],
    ),
}


def _domain_tag(domain) -> DomainTag:
    if isinstance(domain, DomainTag):
        return domain
    key = str(domain).lower()
    aliases = {
        "cube": DomainTag.UNIT_CUBE, "unitcube": DomainTag.UNIT_CUBE, "unit_cube": DomainTag.UNIT_CUBE,
        "a": DomainTag.DOMAIN_A, "b": DomainTag.DOMAIN_B, "c": DomainTag.DOMAIN_C,
    }
    return aliases[key] if key in aliases else DomainTag(domain)


def check_resolution(domain, n: int) -> None:
    """Raise MeshError unless ``n`` cells per unit length meshes ``domain`` exactly."""
    tag = _domain_tag(domain)
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise MeshError(f"resolution must be a positive integer, got {n!r}")
    if tag == DomainTag.UNIT_CUBE:
        return
    if tag not in DOMAINS:
        raise MeshError(f"no generator for domain {tag.value}")
    lower, _, holes = DOMAINS[tag]
    lower = np.asarray(lower, dtype=float)
    for lo, hi in holes:
        for plane in (np.asarray(lo), np.asarray(hi)):
            offset = (plane - lower) * n
            if np.any(np.abs(offset - np.round(offset)) > 1e-9):
                raise MeshError(f"{tag.value}: n={n} does not place hole faces on grid planes")


def build_domain_mesh(tag, n: int) -> Mesh:
    """Mesh one of the holed test domains with ``n`` cells per unit length."""
    tag = _domain_tag(tag)
    check_resolution(tag, n)
    if tag == DomainTag.UNIT_CUBE:
        return build_unit_cube_mesh(n)
    lower, upper, holes = DOMAINS[tag]
    lower = np.asarray(lower, dtype=float)
    cells = np.round((np.asarray(upper) - lower) * n).astype(int)
    return structured_box(lower, upper, cells, holes, domain_tag=tag)


def build_mesh(domain: str, n: int) -> Mesh:
    """Dispatch on the CLI domain names ``cube``, ``a``, ``b``, ``c``."""
    return build_domain_mesh(domain, n)


def import_mesh(path) -> Mesh:
    """Load a mesh from the JSON format ``{"vertices": [...], "elements": [...]}``."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict) or "vertices" not in raw or "elements" not in raw:
        raise MeshError(f"{path}: expected keys 'vertices' and 'elements'")
    try:
        vertices = np.asarray(raw["vertices"], dtype=float)
        elements = np.asarray(raw["elements"], dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise MeshError(f"{path}: malformed arrays ({exc})") from exc
    if vertices.ndim != 2 or vertices.shape[1:] != (3,):
        raise MeshError(f"{path}: vertices must be a list of [x, y, z]")
    if elements.ndim != 2 or elements.shape[1:] != (8,):
        raise MeshError(f"{path}: elements must be lists of 8 vertex ids")
    return Mesh(vertices, elements, DomainTag.IMPORTED)
