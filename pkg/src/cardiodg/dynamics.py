"""FitzHugh-Nagumo ionic model and semi-implicit monodomain/bidomain steppers.

Each time step runs, in this order:

1. gating update ``w^{n+1} = (w^n + dt eps V^n) / (1 + dt eps Gamma)``;
2. reaction matrix ``C(V^n)`` and forcing ``R(t^{n+1})``;
3. one linear solve for the potential(s), with the ionic cubic frozen at
   ``V^n`` and ``w^{n+1}`` entering explicitly;
4. (bidomain) gauge fix of the extracellular potential to zero mean.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import (
    DGSpace,
    DiffusionTensor,
    ModalField,
    PenaltySpec,
    assemble_forcing,
    assemble_mass,
    assemble_stiffness,
    block_diagonal,
    block_diagonal_positions,
    reaction_blocks,
)
from .sparse import SolverError, SolverReport, SparseMatrix, block_jacobi, gmres_solve

log = logging.getLogger(__name__)

ELLIPTIC_SHIFT = 1e-3


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical constants; defaults are the verification setup.

    ``gamma`` is the FitzHugh-Nagumo recovery coefficient, not the penalty.
    ``sigma`` is the monodomain conductivity; ``sigma_i``/``sigma_e`` are the
    bidomain ones.
    """

    chi_m: float = 1e5
    C_m: float = 1.0
    kappa: float = 19.5
    a: float = 1.3e-2
    eps: float = 1.2
    gamma: float = 0.1
    sigma: np.ndarray = field(default_factory=lambda: 0.12 * np.eye(2))
    sigma_i: np.ndarray = field(default_factory=lambda: 0.12 * np.eye(2))
    sigma_e: np.ndarray = field(default_factory=lambda: 0.12 * np.eye(2))
    theta: int = 1
    alpha: float = 10.0
    dt: float = 1e-4
    T: float = 3e-3

    def __post_init__(self):
        for name in ("chi_m", "C_m", "kappa", "dt", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if not 0 < self.a < 1:
            raise ValueError(f"a must lie in (0, 1), got {self.a}")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-8 * max(1.0, self.T / self.dt):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        for name in ("sigma", "sigma_i", "sigma_e"):
            object.__setattr__(self, name, DiffusionTensor(getattr(self, name)))
        PenaltySpec(self.alpha, self.theta)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def penalty(self) -> PenaltySpec:
        return PenaltySpec(self.alpha, self.theta)

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def i_ion(V, w, params: ModelParams):
    """FitzHugh-Nagumo current kappa V (V - a)(V - 1) + w."""
    return params.kappa * V * (V - params.a) * (V - 1.0) + w


def gating_step(w, V, dt: float, eps: float, gamma: float):
    """Implicit-in-w, explicit-in-V update of the recovery variable.

    Works on coefficient vectors or ModalFields; the mass matrix cancels.
    """
    if isinstance(w, ModalField):
        return ModalField(gating_step(w.coeffs, V.coeffs, dt, eps, gamma), w.space)
    return (np.asarray(w) + dt * eps * np.asarray(V)) / (1.0 + dt * eps * gamma)


@dataclass(frozen=True)
class Forcing:
    """Applied current ``source(x, y, t)`` and Neumann flux ``flux(x, y, t, nx, ny)``."""

    source: Optional[Callable] = None
    flux: Optional[Callable] = None

    def vector(self, space: DGSpace, t: float, source_sign: float = 1.0) -> np.ndarray:
        src = self.source
        if src is not None and source_sign != 1.0:
            orig = src

            def src(x, y, t):
                return source_sign * orig(x, y, t)

        return assemble_forcing(space, t, src, self.flux)


NO_FORCING = Forcing()


@dataclass
class MonodomainState:
    V: np.ndarray
    w: np.ndarray
    n: int = 0

    def copy(self):
        return MonodomainState(self.V.copy(), self.w.copy(), self.n)


@dataclass
class BidomainState:
    phi_i: np.ndarray
    phi_e: np.ndarray
    w: np.ndarray
    n: int = 0

    @property
    def V(self) -> np.ndarray:
        return self.phi_i - self.phi_e

    def copy(self):
        return BidomainState(self.phi_i.copy(), self.phi_e.copy(), self.w.copy(), self.n)


class IncompatibleForcingError(ValueError):
    """Bidomain data violate the compatibility condition
    int I_i - int I_e = -int b_i - int b_e."""


@dataclass(frozen=True)
class SolverOptions:
    rel_tol: float = 1e-10
    max_iter: int = 2000
    restart: int = 30
    compat_tol: float = 1e-8
    # "block": exact inverse of each element's diagonal block; "diagonal": Jacobi
    preconditioner: str = "block"

    def __post_init__(self):
        if self.preconditioner not in ("block", "diagonal", "none"):
            raise ValueError(f"preconditioner must be 'block', 'diagonal' or 'none', got {self.preconditioner!r}")


class _SteppingBase:
    def __init__(self, space: DGSpace, params: ModelParams, options: SolverOptions | None):
        self.space = space
        self.params = params
        self.options = options or SolverOptions()
        self.M = assemble_mass(space)
        self.last_report: SolverReport | None = None
        self.pc_blocks = space.reshape(np.arange(space.n_dofs))

    @property
    def time_coeff(self) -> float:
        return self.params.chi_m * self.params.C_m / self.params.dt

    def _solve(self, A, rhs, x0, kernel=None, step=None):
        o = self.options
        pc = self._preconditioner(A)
        x, report = gmres_solve(
            A, rhs, x0=x0, rel_tol=o.rel_tol, max_iter=o.max_iter, restart=o.restart,
            preconditioner=pc, kernel=kernel,
        )
        self.last_report = report
        if not report.converged:
            raise SolverError(
                f"linear solve failed at step {step}: {report.iterations} iterations, "
                f"relative residual {report.residual:.3e}",
                report,
            )
        return x

    def _preconditioner(self, A):
        o = self.options
        if o.preconditioner == "block":
            return block_jacobi(A, self.pc_blocks)
        return None if o.preconditioner == "none" else "diagonal"

    def _reaction(self, V):
        p = self.params
        return reaction_blocks(self.space, V, p.chi_m, p.kappa, p.a)


class MonodomainSolver(_SteppingBase):
    """Preassembled monodomain operator; one linear solve per step.

    ``[(chi C/dt) M + A + C(V^n)] V^{n+1}
        = R(t^{n+1}) + (chi C/dt) M V^n - chi M w^{n+1}``.
    """

    def __init__(self, space, params, forcing: Forcing = NO_FORCING, options=None):
        super().__init__(space, params, options)
        self.forcing = forcing
        self.A = assemble_stiffness(space, params.sigma, params.penalty)
        base = self.A + self.M.scaled(self.time_coeff)
        self.base = base
        self._pos = block_diagonal_positions(base, space)

    def system_matrix(self, V) -> SparseMatrix:
        data = self.base.data.copy()
        data[self._pos.ravel()] += self._reaction(V).ravel()
        return self.base.with_data(data)

    def step(self, state: MonodomainState) -> MonodomainState:
        p = self.params
        t_next = (state.n + 1) * p.dt
        w1 = gating_step(state.w, state.V, p.dt, p.eps, p.gamma)
        system = self.system_matrix(state.V)
        rhs = (
            self.forcing.vector(self.space, t_next)
            + self.M.matvec(self.time_coeff * state.V - p.chi_m * w1)
        )
        V1 = self._solve(system, rhs, state.V, step=state.n + 1)
        return MonodomainState(V1, w1, state.n + 1)

    def initial_state(self, V0, w0) -> MonodomainState:
        return MonodomainState(_coeffs(self.space, V0), _coeffs(self.space, w0), 0)


class BidomainSolver(_SteppingBase):
    """Preassembled bidomain operator on (phi_i, phi_e).

    The second block row is the extracellular equation multiplied by -1, so
    its load vector is ``-int I_e phi + int b_e phi``. The block system

        [[D + A_i + C, -D - C], [-D - C, D + A_e + C]] (phi_i, phi_e) = (r_i, r_e),
        D = (chi C_m / dt) M,

    is singular along (1, 1). It is solved in the equivalent form obtained
    with the unknowns (V, phi_e) and the rows (r_i / c, r_i + r_e),
    c = chi C_m / dt:

        [[M + (A_i + C)/c, A_i/c], [A_i, A_i + A_e]] (V, phi_e) = (r_i / c, r_i + r_e).

    Both rows are then O(1), so the relative residual test resolves the
    elliptic part (phi_i + phi_e) as well as V. The kernel (0, 1) is deflated
    and phi_e is shifted so that ``sum_j phi_e,j d_j = 0``.
    """

    def __init__(
        self,
        space,
        params,
        forcing_i: Forcing = NO_FORCING,
        forcing_e: Forcing = NO_FORCING,
        options=None,
    ):
        super().__init__(space, params, options)
        self.forcing_i = forcing_i
        self.forcing_e = forcing_e
        self.A_i = assemble_stiffness(space, params.sigma_i, params.penalty)
        self.A_e = assemble_stiffness(space, params.sigma_e, params.penalty)
        c = self.time_coeff
        self.base = _stack_blocks(
            space,
            {
                (0, 0): self.M + self.A_i.scaled(1.0 / c),
                (0, 1): self.A_i.scaled(1.0 / c),
                (1, 0): self.A_i,
                (1, 1): self.A_i + self.A_e,
            },
        )
        er, ec, _ = _element_pattern(space)
        self._pos = self.base.positions(er, ec)
        one = space.constant_vector
        self.kernel = np.concatenate([np.zeros_like(one), one])
        self.block_kernel = np.concatenate([one, one])
        self._elliptic_lu = None

    def _preconditioner(self, A):
        """Block lower-triangular: element blocks for the V row, a sparse LU
        of the (constant, slightly shifted) elliptic operator for phi_e."""
        if self.options.preconditioner != "block":
            return super()._preconditioner(A)
        n = self.space.n_dofs
        if self._elliptic_lu is None:
            # the shift only regularizes the constant mode, which GMRES deflates
            shifted = self.A_i + self.A_e + self.M.scaled(ELLIPTIC_SHIFT)
            csc = sp.csr_matrix((shifted.data, shifted.indices, shifted.indptr), shape=shifted.shape).tocsc()
            self._elliptic_lu = splu(csc)
        top = block_jacobi(_sub_block(A, 0, n), self.pc_blocks)
        lu, A_i = self._elliptic_lu, self.A_i

        def apply(v):
            y1 = top(v[:n])
            y2 = lu.solve(v[n:] - A_i.matvec(y1))
            return np.concatenate([y1, y2])

        return apply

    def block_matrix(self, V) -> SparseMatrix:
        """The (phi_i, phi_e) block operator with C(V) included."""
        Cm = block_diagonal(self.space, self._reaction(V))
        DC = self.M.scaled(self.time_coeff) + Cm
        return _stack_blocks(
            self.space,
            {(0, 0): DC + self.A_i, (0, 1): DC.scaled(-1.0), (1, 0): DC.scaled(-1.0), (1, 1): DC + self.A_e},
        )

    def system_matrix(self, V) -> SparseMatrix:
        """The (V, phi_e) operator actually handed to GMRES."""
        data = self.base.data.copy()
        data[self._pos] += self._reaction(V).ravel() / self.time_coeff
        return self.base.with_data(data)

    def block_rhs(self, state: BidomainState, w1, t_next) -> np.ndarray:
        p = self.params
        coupling = self.M.matvec(self.time_coeff * state.V - p.chi_m * w1)
        r_i = self.forcing_i.vector(self.space, t_next)
        r_e = self.forcing_e.vector(self.space, t_next, source_sign=-1.0)
        return np.concatenate([r_i + coupling, r_e - coupling])

    def step(self, state: BidomainState) -> BidomainState:
        p = self.params
        n = self.space.n_dofs
        t_next = (state.n + 1) * p.dt
        w1 = gating_step(state.w, state.V, p.dt, p.eps, p.gamma)
        rhs = self.block_rhs(state, w1, t_next)
        rnorm = np.linalg.norm(rhs)
        if rnorm > 0:
            k = self.block_kernel
            defect = abs(np.dot(k, rhs)) / (np.linalg.norm(k) * rnorm)
            if defect > self.options.compat_tol:
                raise IncompatibleForcingError(
                    f"step {state.n + 1}: right-hand side violates the compatibility "
                    f"condition int I_i - int I_e = -int b_i - int b_e "
                    f"(relative kernel component {defect:.3e})"
                )
        r_i, r_e = rhs[:n], rhs[n:]
        b = np.concatenate([r_i / self.time_coeff, r_i + r_e])
        x0 = np.concatenate([state.V, state.phi_e])
        system = self.system_matrix(state.V)
        x = self._solve(system, b, x0, kernel=self.kernel, step=state.n + 1)
        V, phi_e = x[:n], x[n:]
        phi_e = phi_e - mean_shift(self.space, phi_e) * self.space.constant_vector
        return BidomainState(V + phi_e, phi_e, w1, state.n + 1)

    def initial_state(self, phi_i0, phi_e0, w0) -> BidomainState:
        return BidomainState(
            _coeffs(self.space, phi_i0), _coeffs(self.space, phi_e0), _coeffs(self.space, w0), 0
        )


def _sub_block(A: SparseMatrix, start: int, size: int) -> SparseMatrix:
    rows = A.row_indices()
    keep = (rows >= start) & (rows < start + size) & (A.indices >= start) & (A.indices < start + size)
    return SparseMatrix.from_triplets(size, size, rows[keep] - start, A.indices[keep] - start, A.data[keep])


def _stack_blocks(space: DGSpace, blocks) -> SparseMatrix:
    """2x2 block matrix; every block gets at least the element-diagonal pattern."""
    n = space.n_dofs
    pattern = SparseMatrix.from_triplets(n, n, *_element_pattern(space))
    rows, cols, vals = [], [], []
    for (bi, bj), blk in blocks.items():
        blk = blk + pattern
        rows.append(blk.row_indices() + bi * n)
        cols.append(blk.indices + bj * n)
        vals.append(blk.data)
    return SparseMatrix.from_triplets(
        2 * n, 2 * n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def _element_pattern(space: DGSpace):
    n_loc = space.n_loc
    e = np.arange(space.n_elements)
    j = np.arange(n_loc)
    shape = (space.n_elements, n_loc, n_loc)
    r = np.broadcast_to(e[:, None, None] * n_loc + j[None, :, None], shape).ravel()
    c = np.broadcast_to(e[:, None, None] * n_loc + j[None, None, :], shape).ravel()
    return r, c, np.zeros(r.size)


def _coeffs(space: DGSpace, value) -> np.ndarray:
    if isinstance(value, ModalField):
        return value.coeffs.copy()
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * space.constant_vector
    if arr.shape != (space.n_dofs,):
        raise ValueError(f"expected {space.n_dofs} coefficients, got {arr.shape}")
    return arr.copy()


def monodomain_step(solver: MonodomainSolver, state: MonodomainState) -> MonodomainState:
    return solver.step(state)


def bidomain_step(solver: BidomainSolver, state: BidomainState) -> BidomainState:
    return solver.step(state)


def mean_shift(space: DGSpace, coeffs) -> float:
    """Constant c such that ``coeffs - c * 1`` has zero weighted sum with d_j."""
    d = space.mean_weights
    return float(np.dot(coeffs, d) / np.dot(space.constant_vector, d))


def enforce_zero_mean(phi):
    """Subtract the constant that makes ``sum_j phi_j d_j`` vanish."""
    space = phi.space
    return ModalField(phi.coeffs - mean_shift(space, phi.coeffs) * space.constant_vector, space)


def check_compatibility(space: DGSpace, I_i, I_e, b_i, b_e, t: float = 0.0, degree: int = 24) -> float:
    """Signed defect ``int I_i - int I_e + int b_i + int b_e`` at time ``t``.

    Sources are ``f(x, y, t)``; fluxes ``b(x, y, t, nx, ny)``; None means zero.
    Integrals use an element rule of the given exactness and 12-point edges.
    """
    fine = DGSpace(space.mesh, 1, volume_degree=degree, face_points=12)
    x = fine.nodes
    terms = []
    for f, sign in ((I_i, 1.0), (I_e, -1.0)):
        if f is not None:
            vals = np.broadcast_to(f(x[..., 0], x[..., 1], t), fine.wdet.shape)
            terms.append((sign * fine.wdet * vals).ravel())
    if len(space.mesh.boundary_faces):
        pts, w, _ = fine.boundary_nodes()
        nrm = space.mesh.boundary_normals
        for b in (b_i, b_e):
            if b is not None:
                vals = np.broadcast_to(b(pts[..., 0], pts[..., 1], t, nrm[:, 0:1], nrm[:, 1:2]), w.shape)
                terms.append((w * vals).ravel())
    # the terms are large and cancel; compensated summation keeps the defect at rounding level
    return math.fsum(np.concatenate(terms)) if terms else 0.0


def monodomain_reduce(sigma_i, xi: float, I_i=None, I_e=None):
    """Monodomain conductivity and current for ``Sigma_e = xi Sigma_i``.

    Returns ``(xi/(1+xi) Sigma_i, I)`` with ``I = (xi I_i + I_e)/(1 + xi)``
    (None when both currents are None).
    """
    if not xi > 0:
        raise ValueError(f"proportionality factor must be positive, got {xi}")
    sigma = DiffusionTensor(xi / (1.0 + xi) * np.asarray(sigma_i, dtype=float))
    if I_i is None and I_e is None:
        return sigma, None
    zero = lambda x, y, t: 0.0 * x  # noqa: E731
    fi = I_i or zero
    fe = I_e or zero

    def current(x, y, t):
        return (xi * fi(x, y, t) + fe(x, y, t)) / (1.0 + xi)

    return sigma, current
