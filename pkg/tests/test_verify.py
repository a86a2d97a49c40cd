import math

import numpy as np
import pytest

from cardiodg.assembly import DGSpace, modal_project
from cardiodg.dynamics import ModelParams, i_ion
from cardiodg.mesh import unit_square_mesh
from cardiodg.verify import (
    ConvergenceRow,
    ExactSolution,
    derive_gating_constant,
    error_norms,
    fit_slope,
    manufacture_forcing,
    observed_slopes,
    run_manufactured,
)
from fd import d1, div_flux, grad

ANISO = ModelParams(
    sigma=np.array([[0.12, 0.02], [0.02, 0.1]]),
    sigma_i=np.array([[0.15, 0.01], [0.01, 0.1]]),
    sigma_e=np.array([[0.08, -0.02], [-0.02, 0.12]]),
)


def test_gating_constant():
    assert derive_gating_constant(1.2, 0.1) == pytest.approx(1.2 / (0.12 - 5))
    with pytest.raises(ZeroDivisionError):
        derive_gating_constant(50.0, 0.1)


def random_points(n=100, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random(n), rng.random(n), rng.random(n) * 3e-3


def _rel(res, *terms):
    return np.abs(res) / (sum(np.abs(t) for t in terms) + 1e-300)


@pytest.mark.parametrize("params", [ModelParams(), ANISO])
def test_monodomain_forcing_has_zero_pde_residual(params):
    ex = ExactSolution(params)
    f = ex.monodomain_forcing()
    x, y, t = random_points()
    V = ex.V
    Vt = d1(lambda s: V(x, y, s), t, 1e-4)
    div = div_flux(V, params.sigma, x, y, t)
    ion = params.chi_m * i_ion(V(x, y, t), ex.w(x, y, t), params)
    lhs = params.chi_m * params.C_m * Vt - div + ion
    rhs = f.source(x, y, t)
    assert _rel(lhs - rhs, params.chi_m * params.C_m * Vt, div, ion, rhs).max() <= 1e-6


@pytest.mark.parametrize("params", [ModelParams(), ANISO])
def test_bidomain_forcing_has_zero_pde_residual(params):
    ex = ExactSolution(params)
    fi, fe = ex.bidomain_forcing()
    x, y, t = random_points(seed=1)
    Vt = d1(lambda s: ex.V(x, y, s), t, 1e-4)
    cap = params.chi_m * params.C_m * Vt
    ion = params.chi_m * i_ion(ex.V(x, y, t), ex.w(x, y, t), params)
    div_i = div_flux(ex.phi_i, params.sigma_i, x, y, t)
    div_e = div_flux(ex.phi_e, params.sigma_e, x, y, t)
    r1 = cap - div_i + ion - fi.source(x, y, t)
    r2 = -cap - div_e - ion + fe.source(x, y, t)
    assert _rel(r1, cap, div_i, ion, fi.source(x, y, t)).max() <= 1e-6
    assert _rel(r2, cap, div_e, ion, fe.source(x, y, t)).max() <= 1e-6


def test_boundary_fluxes_match_normal_derivative():
    params = ANISO
    ex = ExactSolution(params)
    fi, _ = ex.bidomain_forcing()
    s = np.linspace(0.05, 0.95, 7)
    for x, y, nx, ny in ((s, 0 * s, 0.0, -1.0), (1 + 0 * s, s, 1.0, 0.0)):
        gx, gy = grad(ex.phi_i, x, y, 1e-3)
        want = (params.sigma_i @ np.array([gx, gy])).T @ np.array([nx, ny])
        assert np.allclose(fi.flux(x, y, 1e-3, nx, ny), want, atol=1e-8)


def test_gating_ode_residual():
    params = ModelParams()
    ex = ExactSolution(params)
    x, y, t = random_points(seed=2)
    res = ex.dw_dt(x, y, t) - params.eps * (ex.V(x, y, t) - params.gamma * ex.w(x, y, t))
    assert np.abs(res).max() <= 1e-12
    fd = d1(lambda s: ex.w(x, y, s), t, 1e-4)
    assert np.allclose(fd, ex.dw_dt(x, y, t), rtol=1e-8, atol=1e-10)


def test_manufacture_forcing_dispatch():
    ex = ExactSolution()
    assert manufacture_forcing(ex, "mono").source is not None
    assert len(manufacture_forcing(ex, "bi")) == 2
    with pytest.raises(ValueError):
        manufacture_forcing(ex, "tri")


def test_error_norms_vanish_for_representable_field():
    space = DGSpace(unit_square_mesh(2), 2)
    u = lambda x, y: 1 + x * y - y**2  # noqa: E731
    gu = lambda x, y: (y, x - 2 * y)  # noqa: E731
    errs = error_norms(space, modal_project(space, u).coeffs, u, gu, ModelParams().penalty)
    assert max(errs.values()) < 1e-12


def test_error_norms_of_constant_offset():
    space = DGSpace(unit_square_mesh(1), 1)
    u = lambda x, y: 0 * x  # noqa: E731
    gu = lambda x, y: (0 * x, 0 * x)  # noqa: E731
    errs = error_norms(space, 0.5 * space.constant_vector, u, gu, ModelParams().penalty)
    assert errs["Linf"] == pytest.approx(0.5)
    assert errs["L2"] == pytest.approx(0.5)
    assert errs["H1"] == pytest.approx(0.5)
    assert errs["DG"] == pytest.approx(0.0, abs=1e-12)


def test_slopes():
    h = np.array([0.5, 0.25, 0.125])
    assert fit_slope(h, 3 * h**2) == pytest.approx(2.0)
    rows = [ConvergenceRow(s, 2.0**-s, {k: 2.0**-s for k in ("Linf", "L2", "H1", "DG")}) for s in (1, 2, 3)]
    observed_slopes(rows)
    assert rows[0].slopes == {}
    assert all(v == pytest.approx(1.0) for v in rows[2].slopes.values())


def test_run_manufactured_small_and_bad_model():
    errs = run_manufactured("mono", 1, 1)
    assert set(errs) == {"Linf", "L2", "H1", "DG"}
    with pytest.raises(ValueError):
        run_manufactured("tri", 1, 1)


def test_bidomain_potentials_are_resolved():
    # both potentials, not only their difference, converge
    e3 = run_manufactured("bi", 2, 2, field_name="phi_e")["L2"]
    e4 = run_manufactured("bi", 2, 3, field_name="phi_e")["L2"]
    assert math.log2(e3 / e4) > 2.5
