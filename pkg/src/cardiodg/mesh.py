"""Structured triangulations of the unit square and their affine maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

MAX_LEVEL = 12


@dataclass(frozen=True)
class Triangulation:
    """Conforming triangulation with face connectivity.

    Element ``k`` has CCW vertices ``elements[k]``; its local edge ``e`` joins
    local vertices ``e`` and ``(e + 1) % 3``. Interior faces store
    ``(elem1, elem2, edge1, edge2)`` with ``normals`` pointing from elem1 into
    elem2. Boundary faces store ``(elem, edge)`` with outward normals.
    """

    vertices: np.ndarray
    elements: np.ndarray
    interior_faces: np.ndarray
    interior_normals: np.ndarray
    interior_lengths: np.ndarray
    interior_h: np.ndarray
    boundary_faces: np.ndarray
    boundary_normals: np.ndarray
    boundary_lengths: np.ndarray
    boundary_h: np.ndarray
    level: int

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_coords(self) -> np.ndarray:
        """Vertex coordinates, shape (n_elements, 3, 2)."""
        return self.vertices[self.elements]

    def areas(self) -> np.ndarray:
        c = self.element_coords()
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def diameters(self) -> np.ndarray:
        c = self.element_coords()
        d = [np.linalg.norm(c[:, k] - c[:, (k + 1) % 3], axis=1) for k in range(3)]
        return np.max(d, axis=0)

    def centroids(self) -> np.ndarray:
        return self.element_coords().mean(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters().max())


def _edge_geometry(coords, edge):
    a = coords[np.arange(len(edge)), edge]
    b = coords[np.arange(len(edge)), (edge + 1) % 3]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    # CCW element: outward normal is the tangent rotated clockwise
    normal = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    return normal, length


def build_triangulation(vertices, elements, level: int = -1) -> Triangulation:
    """Build face connectivity for a CCW triangulation."""
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=np.int64)
    owners: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for k, tri in enumerate(elements):
        for e in range(3):
            key = tuple(sorted((int(tri[e]), int(tri[(e + 1) % 3]))))
            owners.setdefault(key, []).append((k, e))
    interior = []
    boundary = []
    for key in sorted(owners):
        sides = owners[key]
        if len(sides) == 1:
            boundary.append(sides[0])
        elif len(sides) == 2:
            (k1, e1), (k2, e2) = sorted(sides)
            interior.append((k1, k2, e1, e2))
        else:
            raise ValueError(f"edge {key} shared by {len(sides)} elements")
    interior = np.array(interior, dtype=np.int64).reshape(-1, 4)
    boundary = np.array(boundary, dtype=np.int64).reshape(-1, 2)

    coords = vertices[elements]
    tmp = Triangulation(
        vertices, elements, interior, None, None, None, boundary, None, None, None, level
    )
    if np.any(tmp.areas() <= 0.0):
        raise ValueError("elements must have positive (counter-clockwise) area")
    diam = tmp.diameters()
    n_int, l_int = _edge_geometry(coords[interior[:, 0]], interior[:, 2])
    n_bnd, l_bnd = _edge_geometry(coords[boundary[:, 0]], boundary[:, 1])
    h_int = np.minimum(diam[interior[:, 0]], diam[interior[:, 1]])
    h_bnd = diam[boundary[:, 0]]
    for arr in (vertices, elements, interior, boundary, n_int, l_int, n_bnd, l_bnd, h_int, h_bnd):
        arr.setflags(write=False)
    return Triangulation(
        vertices, elements, interior, n_int, l_int, h_int, boundary, n_bnd, l_bnd, h_bnd, level
    )


def unit_square_mesh(level: int) -> Triangulation:
    """Uniform mesh of (0,1)^2 with 2^level squares per side.

    Every square is cut along its (0,0)-(1,1) diagonal, so the mesh is
    invariant under the swap (x, y) -> (y, x).
    """
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"refinement level must lie in [0, {MAX_LEVEL}], got {level}")
    n = 2**level
    g = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(g, g, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    elements = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10 = v00 + 1
            v01 = v00 + n + 1
            v11 = v01 + 1
            elements.append((v00, v10, v11))
            # ordered so that its reference map is the mirror of the lower triangle's
            elements.append((v00, v11, v01))
    return build_triangulation(vertices, elements, level)


@dataclass(frozen=True)
class AffineMaps:
    """Per-element affine maps x = x0 + J (xi, eta), stacked over elements."""

    origin: np.ndarray  # (n, 2)
    jac: np.ndarray  # (n, 2, 2)
    det: np.ndarray  # (n,) |det J|
    inv: np.ndarray  # (n, 2, 2) J^{-1}
    inv_t: np.ndarray  # (n, 2, 2) J^{-T}

    def __len__(self):
        return len(self.det)

    def to_physical(self, k, ref_points):
        ref_points = np.asarray(ref_points, dtype=float)
        return self.origin[k] + ref_points @ self.jac[k].T

    def to_reference(self, k, points):
        points = np.asarray(points, dtype=float)
        return (points - self.origin[k]) @ self.inv[k].T

    def push_gradients(self, k, ref_grads):
        """Physical gradients J^{-T} grad_ref; last axis of ``ref_grads`` has length 2."""
        return ref_grads @ self.inv[k]


def build_affine_maps(mesh: Triangulation) -> AffineMaps:
    c = mesh.element_coords()
    jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(np.abs(det) <= 1e-300):
        raise ValueError("degenerate element with zero area")
    inv = np.empty_like(jac)
    inv[:, 0, 0] = jac[:, 1, 1] / det
    inv[:, 1, 1] = jac[:, 0, 0] / det
    inv[:, 0, 1] = -jac[:, 0, 1] / det
    inv[:, 1, 0] = -jac[:, 1, 0] / det
    return AffineMaps(c[:, 0].copy(), jac, np.abs(det), inv, np.transpose(inv, (0, 2, 1)).copy())


@dataclass(frozen=True)
class FaceTrace:
    """Quadrature on one face, seen from each adjacent element."""

    points: np.ndarray  # physical nodes (nq, 2)
    weights: np.ndarray  # physical weights, sum = face length
    normal: np.ndarray
    ref1: np.ndarray  # reference coordinates in elem1
    ref2: np.ndarray | None  # reference coordinates in elem2 (None on the boundary)


def face_trace_nodes(mesh, maps, face, n_points: int, boundary: bool = False) -> FaceTrace:
    """Gauss nodes of an interior (or boundary) face in both elements' coordinates."""
    if boundary:
        if not 0 <= face < len(mesh.boundary_faces):
            raise IndexError(f"no boundary face {face}")
        k1, e1 = mesh.boundary_faces[face]
        k2 = None
        normal = mesh.boundary_normals[face]
    else:
        if not 0 <= face < len(mesh.interior_faces):
            raise IndexError(f"no interior face {face}")
        k1, k2, e1, _ = mesh.interior_faces[face]
        normal = mesh.interior_normals[face]
    tri = mesh.vertices[mesh.elements[k1]]
    a, b = tri[e1], tri[(e1 + 1) % 3]
    s, w = roots_legendre(n_points)
    t = 0.5 * (s + 1.0)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    length = float(np.linalg.norm(b - a))
    ref1 = maps.to_reference(k1, pts)
    ref2 = None if k2 is None else maps.to_reference(k2, pts)
    return FaceTrace(pts, 0.5 * w * length, normal.copy(), ref1, ref2)
