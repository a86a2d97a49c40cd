"""Jacobi polynomials, the Dubiner modal basis on the reference triangle,
and collapsed-coordinate quadrature.

The reference triangle is ``K = {(xi, eta): xi, eta >= 0, xi + eta <= 1}``.
It is the image of the square ``[-1, 1]^2`` under the collapse map
``xi = (1 + a)(1 - b)/4, eta = (1 + b)/2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np
from scipy.special import roots_jacobi, roots_legendre, binom

__all__ = [
    "QuadRule",
    "DubinerBasis",
    "jacobi_eval",
    "jacobi_deriv",
    "collapse",
    "dubiner_indices",
    "dubiner_eval",
    "dubiner_grad",
    "make_quad_rule",
    "tabulate_basis",
    "edge_quad_points",
    "REFERENCE_VERTICES",
    "REFERENCE_EDGE_LENGTHS",
]

REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# edge k joins reference vertex k to vertex (k + 1) % 3
REFERENCE_EDGE_LENGTHS = np.array([1.0, sqrt(2.0), 1.0])


def _jacobi_explicit(n, alpha, beta, x):
    # P_n = sum_s C(n+alpha, n-s) C(n+beta, s) ((x-1)/2)^s ((x+1)/2)^(n-s)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for s in range(n + 1):
        out = out + binom(n + alpha, n - s) * binom(n + beta, s) * (
            (x - 1.0) / 2.0
        ) ** s * ((x + 1.0) / 2.0) ** (n - s)
    return out


def jacobi_eval(n, alpha, beta, x):
    """Evaluate the Jacobi polynomial P_n^{(alpha, beta)} at ``x``.

    Uses the three-term recurrence. ``x`` may be a scalar or an array; the
    result has the same shape.
    """
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim == 0
    p_prev = np.ones_like(x_arr)
    if n == 0:
        return float(p_prev) if scalar else p_prev
    ab = alpha + beta
    p_cur = 0.5 * ((ab + 2.0) * x_arr + (alpha - beta))
    for k in range(2, n + 1):
        c = 2.0 * k + ab
        denom = 2.0 * k * (k + ab) * (c - 2.0)
        if denom == 0.0:
            # recurrence degenerates for alpha + beta in {-1, -2}
            out = _jacobi_explicit(n, alpha, beta, x_arr)
            return float(out) if scalar else out
        a1 = (c - 1.0) * (c * (c - 2.0) * x_arr + alpha * alpha - beta * beta)
        a2 = 2.0 * (k + alpha - 1.0) * (k + beta - 1.0) * c
        p_prev, p_cur = p_cur, (a1 * p_cur - a2 * p_prev) / denom
    return float(p_cur) if scalar else p_cur


def jacobi_deriv(n, alpha, beta, x):
    """Derivative d/dx P_n^{(alpha, beta)}(x) = (n+alpha+beta+1)/2 P_{n-1}^{(alpha+1, beta+1)}(x)."""
    x_arr = np.asarray(x, dtype=float)
    if n == 0:
        out = np.zeros_like(x_arr)
    else:
        out = 0.5 * (n + alpha + beta + 1.0) * np.asarray(
            jacobi_eval(n - 1, alpha + 1.0, beta + 1.0, x_arr)
        )
    return float(out) if x_arr.ndim == 0 else out


def collapse(a, b):
    """Map square coordinates (a, b) in [-1, 1]^2 onto the reference triangle."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    xi = 0.25 * (1.0 + a) * (1.0 - b)
    eta = 0.5 * (1.0 + b)
    if xi.ndim == 0:
        return float(xi), float(eta)
    return xi, eta


def dubiner_indices(p: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i + j <= p, ordered by total degree then by i."""
    return [(i, s - i) for s in range(p + 1) for i in range(s + 1)]


def _normalization(i: int, j: int) -> float:
    return sqrt(2.0 * (2 * i + 1) * (i + j + 1))


def _check_interior(eta):
    if np.any(np.asarray(eta) >= 1.0):
        raise ValueError("Dubiner basis is undefined on the collapsed vertex (eta >= 1)")


def dubiner_eval(i: int, j: int, xi, eta):
    """Orthonormal Dubiner function phi_{i,j} at points of the reference triangle."""
    _check_interior(eta)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    one_m_eta = 1.0 - eta
    a = 2.0 * xi / one_m_eta - 1.0
    b = 2.0 * eta - 1.0
    out = (
        _normalization(i, j)
        * one_m_eta**i
        * np.asarray(jacobi_eval(i, 0.0, 0.0, a))
        * np.asarray(jacobi_eval(j, 2.0 * i + 1.0, 0.0, b))
    )
    return float(out) if out.ndim == 0 else out


def dubiner_grad(i: int, j: int, xi, eta):
    """Reference gradient (d/dxi, d/deta) of phi_{i,j}."""
    _check_interior(eta)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    c = _normalization(i, j)
    one_m_eta = 1.0 - eta
    a = 2.0 * xi / one_m_eta - 1.0
    b = 2.0 * eta - 1.0
    pa = np.asarray(jacobi_eval(i, 0.0, 0.0, a))
    dpa = np.asarray(jacobi_deriv(i, 0.0, 0.0, a))
    pb = np.asarray(jacobi_eval(j, 2.0 * i + 1.0, 0.0, b))
    dpb = np.asarray(jacobi_deriv(j, 2.0 * i + 1.0, 0.0, b))
    # (1 - eta)^(i-1) only appears multiplied by i or by dpa, both zero when i == 0
    pow_im1 = one_m_eta ** (i - 1) if i > 0 else np.zeros_like(eta)
    d_xi = c * 2.0 * pow_im1 * dpa * pb
    d_eta = c * (
        -i * pow_im1 * pa * pb
        + pow_im1 * (1.0 + a) * dpa * pb
        + one_m_eta**i * pa * 2.0 * dpb
    )
    if d_xi.ndim == 0:
        return float(d_xi), float(d_eta)
    return d_xi, d_eta


@dataclass(frozen=True)
class QuadRule:
    """Quadrature on the reference triangle (weights sum to its area, 1/2)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_points(self) -> int:
        return len(self.weights)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.points[:, 0], self.points[:, 1])))


def make_quad_rule(exactness_degree: int, symmetric: bool = False) -> QuadRule:
    """Collapsed tensor rule exact for polynomials of total degree ``exactness_degree``.

    Gauss-Legendre in ``a`` and Gauss-Jacobi with weight ``(1 - b)`` in ``b``;
    the collapse Jacobian ``(1 - b)/8`` is absorbed by the Jacobi weight.

    With ``symmetric=True`` the rule is averaged with its image under
    ``xi <-> eta``. Exactness is unchanged; the node set becomes invariant
    under the swap, which keeps mirrored elements on the unit-square mesh
    sampled at mirrored points.
    """
    if exactness_degree < 0:
        raise ValueError(f"exactness degree must be >= 0, got {exactness_degree}")
    n = exactness_degree // 2 + 1
    a, wa = roots_legendre(n)
    b, wb = roots_jacobi(n, 1.0, 0.0)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    xi, eta = collapse(aa.ravel(), bb.ravel())
    weights = np.outer(wa, wb).ravel() / 8.0
    points = np.column_stack([xi, eta])
    if symmetric:
        points = np.vstack([points, points[:, ::-1]])
        weights = np.concatenate([weights, weights]) / 2.0
    return QuadRule(np.ascontiguousarray(points), weights, exactness_degree)


@dataclass(frozen=True)
class DubinerBasis:
    """Dubiner basis of degree ``p`` tabulated at the nodes of ``rule``.

    ``values`` has shape (n_points, n_loc); ``grads`` has shape
    (n_points, n_loc, 2) and holds reference gradients.
    """

    p: int
    rule: QuadRule
    indices: tuple
    values: np.ndarray
    grads: np.ndarray

    @property
    def n_loc(self) -> int:
        return len(self.indices)

    def gram(self) -> np.ndarray:
        w = self.rule.weights[:, None]
        return self.values.T @ (w * self.values)


def _tabulate_points(p: int, xi, eta):
    idx = dubiner_indices(p)
    vals = np.empty((len(xi), len(idx)))
    grads = np.empty((len(xi), len(idx), 2))
    for m, (i, j) in enumerate(idx):
        vals[:, m] = dubiner_eval(i, j, xi, eta)
        gx, gy = dubiner_grad(i, j, xi, eta)
        grads[:, m, 0] = gx
        grads[:, m, 1] = gy
    return vals, grads


def tabulate_basis(p: int, rule: QuadRule) -> DubinerBasis:
    """Values and reference gradients of all (p+1)(p+2)/2 modes at the rule nodes."""
    if p < 0:
        raise ValueError(f"polynomial degree must be >= 0, got {p}")
    vals, grads = _tabulate_points(p, rule.points[:, 0], rule.points[:, 1])
    vals.setflags(write=False)
    grads.setflags(write=False)
    return DubinerBasis(p, rule, tuple(dubiner_indices(p)), vals, grads)


def edge_quad_points(edge_id: int, n_points: int):
    """Gauss-Legendre nodes on a reference edge, ordered from vertex k to k+1.

    Returns ``(points, weights)``; weights sum to the reference edge length.
    """
    if edge_id not in (0, 1, 2):
        raise ValueError(f"edge id must be 0, 1 or 2, got {edge_id}")
    s, w = roots_legendre(n_points)
    t = 0.5 * (s + 1.0)
    start = REFERENCE_VERTICES[edge_id]
    end = REFERENCE_VERTICES[(edge_id + 1) % 3]
    points = start[None, :] + t[:, None] * (end - start)[None, :]
    weights = 0.5 * w * REFERENCE_EDGE_LENGTHS[edge_id]
    return points, weights


def tabulate_edges(p: int, n_points: int):
    """Basis traces on every reference edge in both orientations.

    Returns arrays indexed ``[edge, orientation]`` where orientation 1 lists
    the nodes in reverse order: values (3, 2, nq, n_loc) and gradients
    (3, 2, nq, n_loc, 2), plus the 1D weights on [0, 1] (sum 1).
    """
    vals = []
    grads = []
    for e in range(3):
        pts, _ = edge_quad_points(e, n_points)
        v, g = _tabulate_points(p, pts[:, 0], pts[:, 1])
        vals.append([v, v[::-1]])
        grads.append([g, g[::-1]])
    _, w = roots_legendre(n_points)
    return np.array(vals), np.array(grads), 0.5 * w
