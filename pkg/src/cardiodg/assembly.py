"""Discrete DG space and assembly of mass, stiffness, reaction and forcing.

Global degrees of freedom are element-major: the coefficient of local mode
``m`` on element ``k`` sits at index ``k * n_loc + m``. On element ``k`` the
basis functions are the reference Dubiner modes composed with the inverse
affine map, so the mass matrix is ``|det J_k|`` times the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import sqrt

import numpy as np

from . import kernels
from .mesh import AffineMaps, Triangulation, build_affine_maps
from .sparse import SparseMatrix
from .specfun import (
    DubinerBasis,
    dubiner_eval,
    dubiner_indices,
    make_quad_rule,
    tabulate_basis,
    tabulate_edges,
)

# coefficient of the (0, 0) mode representing the constant 1 (phi_00 = sqrt 2)
CONSTANT_MODE = 1.0 / sqrt(2.0)


class DGSpace:
    """Mesh, affine maps and tabulated basis for piecewise P^p functions."""

    def __init__(
        self,
        mesh: Triangulation,
        p: int,
        volume_degree: int | None = None,
        face_points: int | None = None,
        symmetric_quadrature: bool = True,
        reaction_degree: int | None = None,
    ):
        self.mesh = mesh
        self.p = int(p)
        self.maps: AffineMaps = build_affine_maps(mesh)
        self.symmetric_quadrature = symmetric_quadrature
        rule = make_quad_rule(volume_degree or 2 * p + 2, symmetric=symmetric_quadrature)
        self.basis: DubinerBasis = tabulate_basis(self.p, rule)
        # (V - 1)(V - a) phi_j phi_k has degree 4p
        self.reaction_degree = reaction_degree or max(4 * self.p, 2 * self.p + 2)
        self.n_face_points = face_points or 2 * p + 2
        self.edge_values, self.edge_grads, self.edge_weights = tabulate_edges(
            self.p, self.n_face_points
        )

    @property
    def n_loc(self) -> int:
        return self.basis.n_loc

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @property
    def n_dofs(self) -> int:
        return self.n_elements * self.n_loc

    @cached_property
    def nodes(self) -> np.ndarray:
        """Physical volume quadrature nodes, (n_elements, nq, 2)."""
        ref = self.basis.rule.points
        return self.maps.origin[:, None, :] + np.einsum("qd,ekd->eqk", ref, self.maps.jac)

    @cached_property
    def wdet(self) -> np.ndarray:
        """Physical volume weights, (n_elements, nq)."""
        return self.maps.det[:, None] * self.basis.rule.weights[None, :]

    @cached_property
    def reaction_basis(self) -> DubinerBasis:
        """Basis tabulated on the rule used for the reaction matrix."""
        if self.reaction_degree == self.basis.rule.degree:
            return self.basis
        rule = make_quad_rule(self.reaction_degree, symmetric=self.symmetric_quadrature)
        return tabulate_basis(self.p, rule)

    @cached_property
    def reaction_wdet(self) -> np.ndarray:
        return self.maps.det[:, None] * self.reaction_basis.rule.weights[None, :]

    @cached_property
    def phys_grads(self) -> np.ndarray:
        """Physical basis gradients at volume nodes, (n_elements, nq, n_loc, 2)."""
        return np.einsum("qmd,edk->eqmk", self.basis.grads, self.maps.inv)

    def reshape(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs, dtype=float).reshape(self.n_elements, self.n_loc)

    def values_at_nodes(self, coeffs) -> np.ndarray:
        return self.reshape(coeffs) @ self.basis.values.T

    def grads_at_nodes(self, coeffs) -> np.ndarray:
        return np.einsum("em,eqmd->eqd", self.reshape(coeffs), self.phys_grads)

    def boundary_nodes(self):
        """Physical nodes (nB, nq, 2), weights (nB, nq) and local traces (nB, nq, n_loc)."""
        mesh = self.mesh
        k, e = mesh.boundary_faces[:, 0], mesh.boundary_faces[:, 1]
        coords = mesh.element_coords()[k]
        a = coords[np.arange(len(k)), e]
        b = coords[np.arange(len(k)), (e + 1) % 3]
        t = self._edge_params()
        pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        w = mesh.boundary_lengths[:, None] * self.edge_weights[None, :]
        return pts, w, self.edge_values[e, 0]

    def _edge_params(self) -> np.ndarray:
        from scipy.special import roots_legendre

        s, _ = roots_legendre(self.n_face_points)
        return 0.5 * (s + 1.0)

    def interior_traces(self, coeffs):
        """Traces of a field on interior faces from each side, (nF, nq) twice."""
        c = self.reshape(coeffs)
        f = self.mesh.interior_faces
        v1 = np.einsum("fqm,fm->fq", self.edge_values[f[:, 2], 0], c[f[:, 0]])
        v2 = np.einsum("fqm,fm->fq", self.edge_values[f[:, 3], 1], c[f[:, 1]])
        return v1, v2

    def cell_averages(self, coeffs) -> np.ndarray:
        """Mean value of the field over each element."""
        return self.reshape(coeffs)[:, 0] / CONSTANT_MODE

    @cached_property
    def mean_weights(self) -> np.ndarray:
        """d_j = integral of basis function j over the domain."""
        return (self.wdet @ self.basis.values).ravel()

    @cached_property
    def constant_vector(self) -> np.ndarray:
        """Modal coefficients of the constant function 1."""
        out = np.zeros((self.n_elements, self.n_loc))
        out[:, 0] = CONSTANT_MODE
        return out.ravel()


@dataclass
class ModalField:
    """Coefficients of a DG function, element-major then local Dubiner order."""

    coeffs: np.ndarray
    space: DGSpace = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError(
                f"expected {self.space.n_dofs} coefficients, got {self.coeffs.shape}"
            )

    def copy(self) -> "ModalField":
        return ModalField(self.coeffs.copy(), self.space)


class DiffusionTensor(np.ndarray):
    """Constant symmetric positive semi-definite 2x2 conductivity."""

    def __new__(cls, value):
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            arr = float(arr) * np.eye(2)
        if arr.shape != (2, 2):
            raise ValueError(f"diffusion tensor must be 2x2, got shape {arr.shape}")
        if arr[0, 1] != arr[1, 0]:
            raise ValueError("diffusion tensor must be symmetric")
        if np.linalg.eigvalsh(arr).min() < -1e-14 * max(1.0, np.abs(arr).max()):
            raise ValueError("diffusion tensor must be positive semi-definite")
        obj = arr.copy().view(cls)
        obj.setflags(write=False)
        return obj


@dataclass(frozen=True)
class PenaltySpec:
    """Interior-penalty parameters: face penalty is alpha p^2 / h_F."""

    alpha: float = 10.0
    theta: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"penalty alpha must be positive, got {self.alpha}")
        if self.theta not in (-1, 0, 1):
            raise ValueError(f"theta must be -1, 0 or 1, got {self.theta}")

    def face_penalty(self, p: int, h_face) -> np.ndarray:
        return self.alpha * p**2 / np.asarray(h_face, dtype=float)


def _block_triplets(elems_r, elems_c, blocks, n_loc):
    shape = (len(elems_r), n_loc, n_loc)
    j = np.arange(n_loc)
    rows = np.broadcast_to(elems_r[:, None, None] * n_loc + j[None, :, None], shape)
    cols = np.broadcast_to(elems_c[:, None, None] * n_loc + j[None, None, :], shape)
    return rows.ravel(), cols.ravel(), np.asarray(blocks).ravel()


def block_diagonal(space: DGSpace, blocks) -> SparseMatrix:
    e = np.arange(space.n_elements)
    r, c, v = _block_triplets(e, e, blocks, space.n_loc)
    return SparseMatrix.from_triplets(space.n_dofs, space.n_dofs, r, c, v)


def block_diagonal_positions(A: SparseMatrix, space: DGSpace) -> np.ndarray:
    """Offsets of every element-diagonal block entry in ``A.data``, (n_el, n_loc, n_loc)."""
    e = np.arange(space.n_elements)
    r, c, _ = _block_triplets(e, e, np.zeros((space.n_elements, space.n_loc, space.n_loc)), space.n_loc)
    return A.positions(r, c).reshape(space.n_elements, space.n_loc, space.n_loc)


def mass_blocks(space: DGSpace) -> np.ndarray:
    v = space.basis.values
    return np.einsum("eq,qj,qk->ejk", space.wdet, v, v, optimize=True)


def assemble_mass(space: DGSpace) -> SparseMatrix:
    """Mass matrix, element blocks by quadrature (diagonal up to rounding)."""
    return block_diagonal(space, mass_blocks(space))


def stiffness_parts(space: DGSpace, sigma, pen: PenaltySpec):
    """Triplet arrays of the volume (K), consistency (W) and penalty (S) parts.

    ``[K]_jk = int grad phi_k . Sigma grad phi_j``,
    ``[W]_jk = int_F [[phi_k]] . {{Sigma grad phi_j}}``,
    ``[S]_jk = int_F gamma [[phi_k]] . [[phi_j]]`` on interior faces.
    """
    sigma = DiffusionTensor(sigma)
    n_loc = space.n_loc
    maps = space.maps
    mesh = space.mesh

    g = np.einsum("eij,jk,elk->eil", maps.inv, sigma, maps.inv)  # J^-1 Sigma J^-T
    grads = space.basis.grads
    K = np.einsum("eq,qjd,edf,qkf->ejk", space.wdet, grads, g, grads, optimize=True)
    el = np.arange(space.n_elements)
    K_trip = _block_triplets(el, el, K, n_loc)

    faces = mesh.interior_faces
    if len(faces) == 0:
        empty = (np.zeros(0, int), np.zeros(0, int), np.zeros(0))
        return K_trip, empty, empty
    k1, k2, e1, e2 = faces.T
    n = mesh.interior_normals
    w = mesh.interior_lengths[:, None] * space.edge_weights[None, :]
    gamma = pen.face_penalty(space.p, mesh.interior_h) * np.einsum("fi,ij,fj->f", n, sigma, n)
    vals = (space.edge_values[e1, 0], space.edge_values[e2, 1])
    sn = n @ sigma  # Sigma n (Sigma symmetric)
    flux = tuple(
        np.einsum("fqmd,fd->fqm", space.edge_grads[e, o], np.einsum("fij,fj->fi", maps.inv[k], sn))
        for e, o, k in ((e1, 0, k1), (e2, 1, k2))
    )
    elems = (k1, k2)
    sign = (1.0, -1.0)
    W_r, W_c, W_v, S_r, S_c, S_v = [], [], [], [], [], []
    for r in range(2):
        for s in range(2):
            Wb = np.einsum("fq,fqj,fqk->fjk", w, 0.5 * flux[r], sign[s] * vals[s], optimize=True)
            Sb = np.einsum(
                "fq,fqj,fqk->fjk", w * gamma[:, None], sign[r] * vals[r], sign[s] * vals[s],
                optimize=True,
            )
            for blocks, R, C, V in ((Wb, W_r, W_c, W_v), (Sb, S_r, S_c, S_v)):
                rr, cc, vv = _block_triplets(elems[r], elems[s], blocks, n_loc)
                R.append(rr)
                C.append(cc)
                V.append(vv)
    W_trip = tuple(np.concatenate(x) for x in (W_r, W_c, W_v))
    S_trip = tuple(np.concatenate(x) for x in (S_r, S_c, S_v))
    return K_trip, W_trip, S_trip


def assemble_stiffness(space: DGSpace, sigma, pen: PenaltySpec) -> SparseMatrix:
    """Interior-penalty stiffness ``A = K - W^T - theta W + S``.

    Face terms are summed over interior faces only; Neumann data enters
    through the forcing vector.
    """
    (kr, kc, kv), (wr, wc, wv), (sr, sc, sv) = stiffness_parts(space, sigma, pen)
    rows = np.concatenate([kr, wc, wr, sr])
    cols = np.concatenate([kc, wr, wc, sc])
    vals = np.concatenate([kv, -wv, -pen.theta * wv, sv])
    return SparseMatrix.from_triplets(space.n_dofs, space.n_dofs, rows, cols, vals)


def reaction_blocks(space: DGSpace, V, chi_m: float, kappa: float, a: float) -> np.ndarray:
    """Element blocks of ``int chi_m kappa (V-1)(V-a) phi_k phi_j``."""
    coeffs = V.coeffs if isinstance(V, ModalField) else V
    return kernels.reaction_blocks(
        space.reaction_basis.values, space.reaction_wdet, space.reshape(coeffs), chi_m * kappa, a
    )


def assemble_reaction(space: DGSpace, V, params) -> SparseMatrix:
    """Nonlinear reaction matrix C(V); block diagonal by element."""
    return block_diagonal(space, reaction_blocks(space, V, params.chi_m, params.kappa, params.a))


def assemble_forcing(space: DGSpace, t: float, source=None, flux=None) -> np.ndarray:
    """Load vector ``int I phi_j + int_{boundary} b phi_j``.

    ``source(x, y, t)`` and ``flux(x, y, t, nx, ny)`` are vectorized callables;
    either may be None (treated as zero).
    """
    R = np.zeros((space.n_elements, space.n_loc))
    if source is not None:
        x = space.nodes
        f = np.broadcast_to(source(x[..., 0], x[..., 1], t), space.wdet.shape)
        R += (space.wdet * f) @ space.basis.values
    if flux is not None and len(space.mesh.boundary_faces):
        pts, w, traces = space.boundary_nodes()
        nrm = space.mesh.boundary_normals
        b = flux(pts[..., 0], pts[..., 1], t, nrm[:, 0:1], nrm[:, 1:2])
        b = np.broadcast_to(b, w.shape)
        contrib = np.einsum("fq,fqm->fm", w * b, traces)
        np.add.at(R, space.mesh.boundary_faces[:, 0], contrib)
    return R.ravel()


def modal_project(space: DGSpace, f) -> ModalField:
    """L2 projection; the mass matrix is diagonal so each coefficient is a moment.

    ``f(x, y)`` is vectorized.
    """
    x = space.nodes
    vals = np.broadcast_to(f(x[..., 0], x[..., 1]), space.wdet.shape)
    # int_K f phi_j / |det J_K| = reference-quadrature moment
    coeffs = (vals * space.basis.rule.weights[None, :]) @ space.basis.values
    return ModalField(coeffs.ravel(), space)


def evaluate_field(V: ModalField, element: int, ref_point) -> float:
    """Value of the modal expansion at a reference point of ``element``."""
    xi, eta = ref_point
    c = V.space.reshape(V.coeffs)[element]
    return float(
        sum(c[m] * dubiner_eval(i, j, xi, eta) for m, (i, j) in enumerate(dubiner_indices(V.space.p)))
    )
