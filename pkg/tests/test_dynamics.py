import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cardiodg.assembly import DGSpace, modal_project
from cardiodg.dynamics import (
    BidomainSolver,
    Forcing,
    IncompatibleForcingError,
    ModelParams,
    MonodomainSolver,
    SolverOptions,
    check_compatibility,
    gating_step,
    i_ion,
    mean_shift,
    monodomain_reduce,
)
from cardiodg.mesh import unit_square_mesh
from cardiodg.sparse import SolverError
from cardiodg.verify import ExactSolution


def bump(x, y, t):
    return 2e7 * np.exp(-40 * ((x - 0.3) ** 2 + (y - 0.6) ** 2)) * (t <= 3e-4)


def test_ionic_current():
    p = ModelParams()
    assert i_ion(0.5, 0.2, p) == pytest.approx(19.5 * 0.5 * (0.5 - 0.013) * (-0.5) + 0.2)
    assert i_ion(0.0, 0.0, p) == 0.0


@given(w=st.floats(-2, 2), V=st.floats(-2, 2), dt=st.floats(1e-5, 1e-1), eps=st.floats(0, 50), g=st.floats(0, 1))
def test_gating_step_solves_backward_euler_in_w(w, V, dt, eps, g):
    w1 = gating_step(np.array([w]), np.array([V]), dt, eps, g)[0]
    # (w1 - w)/dt = eps (V - g w1)
    assert (w1 - w) / dt == pytest.approx(eps * (V - g * w1), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize(
    "bad", [dict(dt=-1e-4), dict(T=0.0), dict(a=1.5), dict(T=1e-3, dt=3e-4), dict(eps=-1.0), dict(theta=3)]
)
def test_params_validation(bad):
    with pytest.raises(ValueError):
        ModelParams(**bad)


def test_params_step_count():
    assert ModelParams().n_steps == 30
    assert ModelParams(dt=1e-3, T=0.4).n_steps == 400


@pytest.mark.parametrize("V0,w0", [(0.7, 0.1), (-0.2, 0.0), (1.3, -0.4)])
def test_constant_state_follows_scalar_recurrence(V0, w0):
    params = ModelParams(dt=1e-3, T=5e-3, C_m=1e-2, eps=40.0)
    space = DGSpace(unit_square_mesh(2), 2)
    mono = MonodomainSolver(space, params)
    bi = BidomainSolver(space, params)
    sm = mono.initial_state(V0, w0)
    sb = bi.initial_state(V0, 0.0, w0)
    V, w = V0, w0
    c = params.chi_m * params.C_m / params.dt
    for _ in range(params.n_steps):
        w = (w + params.dt * params.eps * V) / (1 + params.dt * params.eps * params.gamma)
        V = (c * V - params.chi_m * w) / (c + params.chi_m * params.kappa * (V - 1) * (V - params.a))
        sm = mono.step(sm)
        sb = bi.step(sb)
        for state in (sm, sb):
            assert np.allclose(space.values_at_nodes(state.V), V, rtol=1e-9, atol=1e-10)
            assert np.allclose(space.values_at_nodes(state.w), w, rtol=1e-9, atol=1e-10)


@pytest.mark.parametrize("model", ["mono", "bi"])
def test_quiescence(model):
    params = ModelParams(T=1e-2)
    space = DGSpace(unit_square_mesh(2), 2)
    if model == "mono":
        solver = MonodomainSolver(space, params)
        state = solver.initial_state(0.0, 0.0)
    else:
        solver = BidomainSolver(space, params)
        state = solver.initial_state(0.0, 0.0, 0.0)
    for _ in range(100):
        state = solver.step(state)
    assert np.abs(state.V).max() == 0.0 and np.abs(state.w).max() == 0.0


def _bidomain_state(space, solver):
    rng = np.random.default_rng(5)
    pi = modal_project(space, lambda x, y: 0.8 * np.exp(-10 * ((x - 0.4) ** 2 + y**2)))
    pe = modal_project(space, lambda x, y: 0.1 * np.cos(np.pi * x))
    return solver.initial_state(pi, pe, 0.05 * rng.random(space.n_dofs))


def test_gauge_shift_leaves_transmembrane_potential_unchanged():
    params = ModelParams()
    space = DGSpace(unit_square_mesh(3), 2)
    f = Forcing(bump)
    solver = BidomainSolver(space, params, f, f)
    s0 = _bidomain_state(space, solver)
    shifted = type(s0)(s0.phi_i + 3.7 * space.constant_vector, s0.phi_e + 3.7 * space.constant_vector, s0.w, 0)
    a, b = solver.step(s0), solver.step(shifted)
    assert np.abs(a.V - b.V).max() <= 1e-10
    assert abs(np.dot(a.phi_e, space.mean_weights)) <= 1e-12
    assert abs(np.dot(b.phi_e, space.mean_weights)) <= 1e-12


def test_bidomain_solution_satisfies_block_system():
    params = ModelParams()
    space = DGSpace(unit_square_mesh(3), 2)
    f = Forcing(bump)
    solver = BidomainSolver(space, params, f, f)
    s0 = _bidomain_state(space, solver)
    s1 = solver.step(s0)
    B = solver.block_matrix(s0.V)
    rhs = solver.block_rhs(s0, s1.w, params.dt)
    res = B @ np.concatenate([s1.phi_i, s1.phi_e]) - rhs
    assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(rhs)
    # the block operator annihilates (1, 1)
    one = space.constant_vector
    assert np.abs(B @ np.concatenate([one, one])).max() <= 1e-13 * np.abs(B.data).max()


def test_equal_conductivities_reduce_to_monodomain():
    # Sigma_e = Sigma_i and I_i = I_e = I: the discrete V solves the monodomain
    # problem with Sigma_i / 2 and current I
    params = ModelParams(dt=1e-4, T=1e-3)
    space = DGSpace(unit_square_mesh(3), 2)
    f = Forcing(bump)
    bi = BidomainSolver(space, params, f, f)
    sigma, current = monodomain_reduce(params.sigma_i, 1.0, bump, bump)
    mono = MonodomainSolver(space, params.with_(sigma=sigma), Forcing(current))
    sb, sm = bi.initial_state(0.0, 0.0, 0.0), mono.initial_state(0.0, 0.0)
    for _ in range(params.n_steps):
        sb, sm = bi.step(sb), mono.step(sm)
    assert np.abs(sm.V).max() > 1e-3
    assert np.abs(sb.V - sm.V).max() <= 1e-7 * np.abs(sm.V).max()


def test_monodomain_reduce():
    s, cur = monodomain_reduce(0.12 * np.eye(2), 3.0, lambda x, y, t: 4.0 + 0 * x, None)
    assert np.allclose(s, 0.09 * np.eye(2))
    assert cur(np.zeros(1), np.zeros(1), 0.0)[0] == pytest.approx(3.0)
    assert monodomain_reduce(np.eye(2), 1.0)[1] is None
    with pytest.raises(ValueError):
        monodomain_reduce(np.eye(2), 0.0)


def test_incompatible_forcing_is_rejected():
    params = ModelParams()
    space = DGSpace(unit_square_mesh(2), 1)
    solver = BidomainSolver(space, params, Forcing(lambda x, y, t: 1e3 + 0 * x), Forcing())
    with pytest.raises(IncompatibleForcingError):
        solver.step(solver.initial_state(0.0, 0.0, 0.0))
    assert check_compatibility(space, lambda x, y, t: 1.0 + 0 * x, None, None, None) == pytest.approx(1.0)


def test_manufactured_forcing_is_compatible():
    ex = ExactSolution(ModelParams())
    fi, fe = ex.bidomain_forcing()
    space = DGSpace(unit_square_mesh(3), 2)
    for t in (0.0, 1e-3, 3e-3):
        d = check_compatibility(space, fi.source, fe.source, fi.flux, fe.flux, t)
        assert abs(d) <= 1e-10


def test_mean_shift_removes_weighted_mean():
    space = DGSpace(unit_square_mesh(2), 2)
    v = np.random.default_rng(0).normal(size=space.n_dofs)
    v0 = v - mean_shift(space, v) * space.constant_vector
    assert abs(np.dot(v0, space.mean_weights)) < 1e-13


@pytest.mark.parametrize("pc", ["block", "diagonal", "none"])
def test_preconditioners_agree(pc):
    params = ModelParams(dt=1e-3, T=2e-3, C_m=1e-2, eps=40.0)
    space = DGSpace(unit_square_mesh(2), 2)
    ref = MonodomainSolver(space, params, Forcing(bump))
    other = MonodomainSolver(space, params, Forcing(bump), SolverOptions(preconditioner=pc))
    a = ref.step(ref.initial_state(0.0, 0.0))
    b = other.step(other.initial_state(0.0, 0.0))
    assert np.allclose(a.V, b.V, rtol=1e-8, atol=1e-10)


def test_solver_failure_names_step():
    params = ModelParams()
    space = DGSpace(unit_square_mesh(3), 2)
    solver = MonodomainSolver(
        space, params, Forcing(bump), SolverOptions(rel_tol=1e-15, max_iter=1, preconditioner="none")
    )
    with pytest.raises(SolverError, match="step 1"):
        solver.step(solver.initial_state(0.0, 0.0))


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(preconditioner="ilu")
