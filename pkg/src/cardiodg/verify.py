"""Manufactured solutions, error norms and convergence drivers."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import DGSpace, PenaltySpec, modal_project
from .dynamics import (
    BidomainSolver,
    Forcing,
    ModelParams,
    MonodomainSolver,
    SolverOptions,
    i_ion,
)
from .mesh import unit_square_mesh

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
NORMS = ("Linf", "L2", "H1", "DG")


def derive_gating_constant(eps: float, gamma: float, decay: float = 5.0) -> float:
    """k such that w = k V solves dw/dt = eps (V - gamma w) when V ~ exp(-decay t)."""
    denom = eps * gamma - decay
    if denom == 0.0:
        raise ZeroDivisionError("eps * gamma equals the decay rate; no separable gating solution")
    return eps / denom


@dataclass(frozen=True)
class ExactSolution:
    """phi_i = amp_i S exp(-decay t), phi_e = amp_e S exp(-decay t),
    S = sin(2 pi x) sin(2 pi y); w = k (phi_i - phi_e)."""

    params: ModelParams = field(default_factory=ModelParams)
    amp_i: float = 2.0
    amp_e: float = 1.0
    decay: float = 5.0

    @property
    def k(self) -> float:
        return derive_gating_constant(self.params.eps, self.params.gamma, self.decay)

    @property
    def amp_v(self) -> float:
        return self.amp_i - self.amp_e

    def _time(self, t):
        return np.exp(-self.decay * t)

    @staticmethod
    def shape(x, y):
        return np.sin(TWO_PI * x) * np.sin(TWO_PI * y)

    @staticmethod
    def shape_grad(x, y):
        return (
            TWO_PI * np.cos(TWO_PI * x) * np.sin(TWO_PI * y),
            TWO_PI * np.sin(TWO_PI * x) * np.cos(TWO_PI * y),
        )

    @staticmethod
    def shape_div_flux(x, y, sigma):
        """div(sigma grad S) for a constant tensor."""
        s = np.sin(TWO_PI * x) * np.sin(TWO_PI * y)
        sxy = TWO_PI**2 * np.cos(TWO_PI * x) * np.cos(TWO_PI * y)
        return -(TWO_PI**2) * (sigma[0, 0] + sigma[1, 1]) * s + 2.0 * sigma[0, 1] * sxy

    def phi_i(self, x, y, t):
        return self.amp_i * self.shape(x, y) * self._time(t)

    def phi_e(self, x, y, t):
        return self.amp_e * self.shape(x, y) * self._time(t)

    def V(self, x, y, t):
        return self.amp_v * self.shape(x, y) * self._time(t)

    def dV_dt(self, x, y, t):
        return -self.decay * self.V(x, y, t)

    def w(self, x, y, t):
        return self.k * self.V(x, y, t)

    def dw_dt(self, x, y, t):
        return -self.decay * self.w(x, y, t)

    def grad(self, amp, x, y, t):
        gx, gy = self.shape_grad(x, y)
        c = amp * self._time(t)
        return c * gx, c * gy

    def _ionic(self, x, y, t):
        p = self.params
        return p.chi_m * p.C_m * self.dV_dt(x, y, t) + p.chi_m * i_ion(
            self.V(x, y, t), self.w(x, y, t), p
        )

    def _flux(self, amp, sigma):
        def b(x, y, t, nx, ny):
            gx, gy = self.grad(amp, x, y, t)
            return (sigma[0, 0] * gx + sigma[0, 1] * gy) * nx + (sigma[1, 0] * gx + sigma[1, 1] * gy) * ny

        return b

    def monodomain_forcing(self) -> Forcing:
        """I = chi C dV/dt - div(Sigma grad V) + chi I_ion(V, w); b = Sigma grad V . n."""
        sigma = self.params.sigma

        def source(x, y, t):
            return self._ionic(x, y, t) - self.amp_v * self._time(t) * self.shape_div_flux(x, y, sigma)

        return Forcing(source, self._flux(self.amp_v, sigma))

    def bidomain_forcing(self) -> tuple[Forcing, Forcing]:
        """Intracellular and extracellular applied currents and fluxes."""
        si, se = self.params.sigma_i, self.params.sigma_e

        def source_i(x, y, t):
            return self._ionic(x, y, t) - self.amp_i * self._time(t) * self.shape_div_flux(x, y, si)

        def source_e(x, y, t):
            return self._ionic(x, y, t) + self.amp_e * self._time(t) * self.shape_div_flux(x, y, se)

        return Forcing(source_i, self._flux(self.amp_i, si)), Forcing(source_e, self._flux(self.amp_e, se))


def manufacture_forcing(exact: ExactSolution, model: str):
    if model == "mono":
        return exact.monodomain_forcing()
    if model == "bi":
        return exact.bidomain_forcing()
    raise ValueError(f"model must be 'mono' or 'bi', got {model!r}")


def error_norms(space: DGSpace, coeffs, u, grad_u, pen: PenaltySpec, extra_degree: int = 4):
    """L-infinity, L2, H1 and DG norms of ``u_h - u``.

    ``u(x, y)`` and ``grad_u(x, y) -> (gx, gy)`` are vectorized. Volume terms
    use an element rule of degree 2p + 2 + extra_degree; the DG norm adds
    ``alpha p^2 / h_F`` times the squared jump on interior faces (the exact
    solution is continuous).
    """
    ev = DGSpace(space.mesh, space.p, volume_degree=2 * space.p + 2 + extra_degree,
                 face_points=space.n_face_points)
    x = ev.nodes
    e = ev.values_at_nodes(coeffs) - u(x[..., 0], x[..., 1])
    g = ev.grads_at_nodes(coeffs)
    gx, gy = grad_u(x[..., 0], x[..., 1])
    eg = (g[..., 0] - gx) ** 2 + (g[..., 1] - gy) ** 2
    l2_sq = float(np.sum(ev.wdet * e**2))
    grad_sq = float(np.sum(ev.wdet * eg))
    jump_sq = 0.0
    if len(space.mesh.interior_faces):
        v1, v2 = space.interior_traces(coeffs)
        mesh = space.mesh
        w = mesh.interior_lengths[:, None] * space.edge_weights[None, :]
        pen_f = pen.face_penalty(space.p, mesh.interior_h)
        jump_sq = float(np.sum(pen_f[:, None] * w * (v1 - v2) ** 2))
    return {
        "Linf": float(np.abs(e).max()),
        "L2": math.sqrt(l2_sq),
        "H1": math.sqrt(l2_sq + grad_sq),
        "DG": math.sqrt(grad_sq + jump_sq),
    }


@dataclass
class ConvergenceRow:
    sigma: int
    h: float
    errors: dict
    slopes: dict = field(default_factory=dict)
    p: int = 0


def _target_fields(exact: ExactSolution, field_name: str, T: float):
    amp = {"V": exact.amp_v, "phi_i": exact.amp_i, "phi_e": exact.amp_e}[field_name]
    u = lambda x, y: amp * exact.shape(x, y) * np.exp(-exact.decay * T)  # noqa: E731
    gu = lambda x, y: exact.grad(amp, x, y, T)  # noqa: E731
    return u, gu


def run_manufactured(model: str, p: int, level: int, params: ModelParams | None = None,
                     options: SolverOptions | None = None, field_name: str = "V"):
    """Integrate the manufactured problem to T and return the error norms."""
    params = params or ModelParams()
    exact = ExactSolution(params)
    space = DGSpace(unit_square_mesh(level), p)
    w0 = modal_project(space, lambda x, y: exact.w(x, y, 0.0))
    if model == "mono":
        solver = MonodomainSolver(space, params, exact.monodomain_forcing(), options)
        state = solver.initial_state(modal_project(space, lambda x, y: exact.V(x, y, 0.0)), w0)
    elif model == "bi":
        fi, fe = exact.bidomain_forcing()
        solver = BidomainSolver(space, params, fi, fe, options)
        state = solver.initial_state(
            modal_project(space, lambda x, y: exact.phi_i(x, y, 0.0)),
            modal_project(space, lambda x, y: exact.phi_e(x, y, 0.0)),
            w0,
        )
    else:
        raise ValueError(f"model must be 'mono' or 'bi', got {model!r}")
    for _ in range(params.n_steps):
        state = solver.step(state)
    T = params.n_steps * params.dt
    if model == "bi" and field_name == "phi_e":
        # exact phi_e has zero mean, so the gauge matches
        coeffs = state.phi_e
    elif model == "bi" and field_name == "phi_i":
        coeffs = state.phi_i
    else:
        coeffs = state.V
    u, gu = _target_fields(exact, field_name, T)
    return error_norms(space, coeffs, u, gu, params.penalty)


def observed_slopes(rows):
    """Fill each row's slope against the previous row (log error / log h)."""
    for prev, row in zip(rows, rows[1:]):
        row.slopes = {
            k: math.log(prev.errors[k] / row.errors[k]) / math.log(prev.h / row.h) for k in NORMS
        }
    if rows:
        rows[0].slopes = {}
    return rows


def fit_slope(h, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    return float(np.polyfit(np.log(h), np.log(errors), 1)[0])


def run_h_convergence(model: str, p: int, levels, params: ModelParams | None = None,
                      options: SolverOptions | None = None, field_name: str = "V"):
    rows = []
    for level in levels:
        errs = run_manufactured(model, p, level, params, options, field_name)
        log.info("%s p=%d sigma=%d: %s", model, p, level, errs)
        rows.append(ConvergenceRow(level, 2.0**-level, errs, p=p))
    return observed_slopes(rows)


def run_p_convergence(model: str, degrees=(1, 2, 3, 4, 5), level: int = 3,
                      params: ModelParams | None = None, options: SolverOptions | None = None,
                      field_name: str = "V"):
    rows = []
    for p in degrees:
        errs = run_manufactured(model, p, level, params, options, field_name)
        log.info("%s p=%d sigma=%d: %s", model, p, level, errs)
        rows.append(ConvergenceRow(level, 2.0**-level, errs, p=p))
    return rows
