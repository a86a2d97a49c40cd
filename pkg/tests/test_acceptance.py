"""Acceptance criteria 1-10, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line with the measured
quantities; the lines are repeated in the pytest terminal summary.  Run with
``python tests/test_acceptance.py`` to get just the report.
"""
import time

import numpy as np
import pytest

from cardiodg.app.config import parse_config_text
from cardiodg.app.diagnostics import front_radii, mirror_defect
from cardiodg.app.runner import run_simulation
from cardiodg.assembly import (
    DGSpace,
    PenaltySpec,
    assemble_mass,
    assemble_reaction,
    assemble_stiffness,
    modal_project,
)
from cardiodg.dynamics import (
    BidomainSolver,
    Forcing,
    ModelParams,
    MonodomainSolver,
    check_compatibility,
    i_ion,
)
from cardiodg.mesh import unit_square_mesh
from cardiodg.specfun import make_quad_rule, tabulate_basis
from cardiodg.verify import ExactSolution, fit_slope, run_h_convergence, run_p_convergence
from fd import d1, div_flux
from oracles import dense_mass, dense_reaction, dense_stiffness

REPORT = []


def report(n, ok, detail, elapsed):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f} s) {detail}"
    print(line, flush=True)
    REPORT.append(line)
    assert ok, line


def test_criterion_01_gram_matrix():
    t0 = time.perf_counter()
    worst = 0.0
    for p in range(9):
        G = tabulate_basis(p, make_quad_rule(2 * p)).gram()
        worst = max(worst, np.abs(G - np.eye(len(G))).max())
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-12 and dt < 1.0, f"max |G - I| = {worst:.2e} for p <= 8", dt)


def test_criterion_02_assembly_oracle():
    t0 = time.perf_counter()
    m = unit_square_mesh(0)
    sigma = np.array([[0.12, 0.03], [0.03, 0.2]])
    unit = ModelParams(chi_m=1.0, kappa=1.0)
    reference = ModelParams()
    worst = {"M": 0.0, "A": 0.0, "C": 0.0, "C_rel": 0.0}
    for p in (1, 2):
        space = DGSpace(m, p)
        worst["M"] = max(worst["M"], np.abs(assemble_mass(space).to_dense()
                                            - dense_mass(m.vertices, m.elements, p)).max())
        for theta in (-1, 0, 1):
            A = assemble_stiffness(space, sigma, PenaltySpec(10.0, theta)).to_dense()
            ref = dense_stiffness(m.vertices, m.elements, p, sigma, 10.0, theta)
            worst["A"] = max(worst["A"], np.abs(A - ref).max())
        rng = np.random.default_rng(p)
        fields = [
            np.zeros(space.n_dofs),
            modal_project(space, lambda x, y: 0.3 + x - 0.5 * y).coeffs,
            rng.normal(size=space.n_dofs),
        ]
        for V in fields:
            C = assemble_reaction(space, V, unit).to_dense()
            ref = dense_reaction(m.vertices, m.elements, p, V, 1.0, 1.0, unit.a)
            worst["C"] = max(worst["C"], np.abs(C - ref).max())
            # same comparison at chi_m * kappa = 1.95e6, relative to the largest entry
            Cp = assemble_reaction(space, V, reference).to_dense()
            refp = dense_reaction(m.vertices, m.elements, p, V, reference.chi_m, reference.kappa, reference.a)
            worst["C_rel"] = max(worst["C_rel"], np.abs(Cp - refp).max() / np.abs(refp).max())
    dt = time.perf_counter() - t0
    ok = max(worst["M"], worst["A"], worst["C"], worst["C_rel"]) <= 1e-12 and dt < 5.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(2, ok, f"max-abs oracle differences: {detail}", dt)


def test_criterion_03_structural_identities():
    t0 = time.perf_counter()
    off = asym = ones = 0.0
    sigma = np.array([[0.12, 0.03], [0.03, 0.2]])
    for level, p in ((0, 1), (2, 2), (3, 3), (3, 5)):
        space = DGSpace(unit_square_mesh(level), p)
        M = assemble_mass(space).to_dense()
        off = max(off, np.abs(M - np.diag(np.diag(M))).max())
        A = assemble_stiffness(space, sigma, PenaltySpec(10.0, 1)).to_dense()
        asym = max(asym, np.abs(A - A.T).max())
        for theta in (-1, 0, 1):
            At = assemble_stiffness(space, sigma, PenaltySpec(10.0, theta))
            ones = max(ones, np.abs(At @ space.constant_vector).max())
    dt = time.perf_counter() - t0
    ok = off <= 1e-13 and asym <= 1e-12 and ones <= 1e-10
    report(3, ok, f"M off-diagonal {off:.1e}, |A - A^T| {asym:.1e}, |A 1| {ones:.1e}", dt)


def _slopes(rows):
    h = [r.h for r in rows]
    return {k: fit_slope(h, [r.errors[k] for r in rows]) for k in rows[0].errors}


def _slope_check(model):
    results, ok = [], True
    for p, levels in ((1, (3, 4, 5)), (2, (2, 3, 4))):
        rows = run_h_convergence(model, p, levels)
        s = _slopes(rows)
        ok &= abs(s["L2"] - (p + 1)) <= 0.3 and abs(s["Linf"] - (p + 1)) <= 0.3
        ok &= abs(s["H1"] - p) <= 0.3 and abs(s["DG"] - p) <= 0.3
        results.append((p, rows, s))
    return ok, results


def _slope_text(results):
    return "; ".join(
        f"p={p}: " + " ".join(f"{k} {v:.2f}" for k, v in s.items()) for p, _, s in results
    )


def test_criterion_04_monodomain_h_convergence():
    t0 = time.perf_counter()
    ok, results = _slope_check("mono")
    l2 = results[0][1][-1].errors["L2"]  # sigma = 5, p = 1
    ok &= 1.269e-3 / 3 <= l2 <= 3 * 1.269e-3
    dt = time.perf_counter() - t0
    report(4, ok and dt < 180, f"slopes {_slope_text(results)}; L2(sigma=5, p=1) = {l2:.3e}", dt)


def test_criterion_05_bidomain_h_convergence():
    t0 = time.perf_counter()
    ok, results = _slope_check("bi")
    l2 = results[1][1][-1].errors["L2"]  # sigma = 4, p = 2
    ok &= 3.011e-4 / 3 <= l2 <= 3 * 3.011e-4
    dt = time.perf_counter() - t0
    report(5, ok and dt < 300, f"slopes {_slope_text(results)}; L2(sigma=4, p=2) = {l2:.3e}", dt)


def test_criterion_06_p_convergence():
    t0 = time.perf_counter()
    ok, parts = True, []
    for model in ("mono", "bi"):
        rows = run_p_convergence(model, (2, 3, 4, 5), 3)
        for k in rows[0].errors:
            e = [r.errors[k] for r in rows]
            ok &= all(b < a for a, b in zip(e, e[1:]))
        l2 = rows[-1].errors["L2"]
        ok &= l2 <= 2.5e-3
        parts.append(f"{model}: L2 " + " ".join(f"{r.errors['L2']:.2e}" for r in rows))
    dt = time.perf_counter() - t0
    report(6, ok and dt < 180, "; ".join(parts) + " (p = 2..5)", dt)


def test_criterion_07_manufactured_integrity():
    t0 = time.perf_counter()
    params = ModelParams()
    ex = ExactSolution(params)
    rng = np.random.default_rng(7)
    x, y, t = rng.random(100), rng.random(100), rng.random(100) * params.T

    def rel(res, *terms):
        return (np.abs(res) / (sum(np.abs(v) for v in terms) + 1e-300)).max()

    Vt = d1(lambda s: ex.V(x, y, s), t, 1e-4)
    cap = params.chi_m * params.C_m * Vt
    ion = params.chi_m * i_ion(ex.V(x, y, t), ex.w(x, y, t), params)
    fm = ex.monodomain_forcing()
    div = div_flux(ex.V, params.sigma, x, y, t)
    pde = rel(cap - div + ion - fm.source(x, y, t), cap, div, ion, fm.source(x, y, t))
    fi, fe = ex.bidomain_forcing()
    div_i = div_flux(ex.phi_i, params.sigma_i, x, y, t)
    div_e = div_flux(ex.phi_e, params.sigma_e, x, y, t)
    pde = max(pde, rel(cap - div_i + ion - fi.source(x, y, t), cap, div_i, ion, fi.source(x, y, t)))
    pde = max(pde, rel(-cap - div_e - ion + fe.source(x, y, t), cap, div_e, ion, fe.source(x, y, t)))
    gating = np.abs(ex.dw_dt(x, y, t) - params.eps * (ex.V(x, y, t) - params.gamma * ex.w(x, y, t))).max()
    space = DGSpace(unit_square_mesh(3), 2)
    compat = max(abs(check_compatibility(space, fi.source, fe.source, fi.flux, fe.flux, s))
                 for s in np.linspace(0.0, params.T, 7))
    dt = time.perf_counter() - t0
    ok = pde <= 1e-6 and gating <= 1e-12 and compat <= 1e-10
    report(7, ok, f"relative PDE residual {pde:.1e}, gating residual {gating:.1e}, "
                  f"compatibility defect {compat:.1e}", dt)


def test_criterion_08_gauge():
    t0 = time.perf_counter()
    params = ModelParams()
    space = DGSpace(unit_square_mesh(3), 2)
    bump = lambda x, y, t: 2e7 * np.exp(-40 * ((x - 0.3) ** 2 + (y - 0.6) ** 2))  # noqa: E731
    f = Forcing(bump)
    solver = BidomainSolver(space, params, f, f)
    rng = np.random.default_rng(5)
    pi = modal_project(space, lambda x, y: 0.8 * np.exp(-10 * ((x - 0.4) ** 2 + y**2))).coeffs
    pe = modal_project(space, lambda x, y: 0.1 * np.cos(np.pi * x)).coeffs
    s0 = solver.initial_state(pi, pe, 0.05 * rng.random(space.n_dofs))
    one = space.constant_vector
    dv = mean = 0.0
    for c in (3.7, -120.0):
        shifted = type(s0)(s0.phi_i + c * one, s0.phi_e + c * one, s0.w, 0)
        a, b = solver.step(s0), solver.step(shifted)
        dv = max(dv, np.abs(a.V - b.V).max())
        mean = max(mean, abs(a.phi_e @ space.mean_weights), abs(b.phi_e @ space.mean_weights))
    dt = time.perf_counter() - t0
    report(8, dv <= 1e-10 and mean <= 1e-12,
           f"|V(shifted) - V| {dv:.1e}, weighted mean of phi_e {mean:.1e}", dt)


STIMULUS_INI = "[run]\nmodel = mono\nscenario = stimulus\n"


def test_criterion_09_stimulus_propagation(tmp_path):
    t0 = time.perf_counter()
    cfg = parse_config_text(STIMULUS_INI)
    res = run_simulation(cfg, tmp_path)
    dt = time.perf_counter() - t0
    space = res.space
    cell_max = [float(space.cell_averages(s.fields["Vm"]).max()) for s in res.snapshots]
    cell_min = [float(space.cell_averages(s.fields["Vm"]).min()) for s in res.snapshots]
    point_max = max(r["Vm_max"] for r in res.summary)
    point_min = min(r["Vm_min"] for r in res.summary)
    mirror = max(mirror_defect(space, s.fields["Vm"]) for s in res.snapshots)
    radii = np.array([front_radii(space, s.fields["Vm"]) for s in res.snapshots])
    growth = np.diff(radii, axis=0)
    outward = bool((growth >= 0).all() and (growth.max(axis=1) > 0).all())
    ok_a = all(0.95 <= v <= 1.05 for v in cell_max)
    ok_b = min(cell_min) < 0
    ok = ok_a and ok_b and mirror <= 1e-8 and outward and dt < 600
    detail = (
        f"(a) element-mean max per snapshot {min(cell_max):.3f}..{max(cell_max):.3f}, "
        f"(b) element-mean min {min(cell_min):.3f}, (c) mirror defect {mirror:.1e}, "
        f"(d) diagonal front radius " + " ".join(f"{r:.3f}" for r in radii[:, 0])
        + f" outward={outward}; pointwise range [{point_min:.2f}, {point_max:.2f}]"
    )
    report(9, ok, detail, dt)


@pytest.mark.parametrize("model", ["mono", "bi"])
def test_criterion_10_quiescence(model):
    t0 = time.perf_counter()
    params = ModelParams(T=1e-2)
    space = DGSpace(unit_square_mesh(3), 2)
    if model == "mono":
        solver = MonodomainSolver(space, params)
        state = solver.initial_state(0.0, 0.0)
    else:
        solver = BidomainSolver(space, params)
        state = solver.initial_state(0.0, 0.0, 0.0)
    for _ in range(100):
        state = solver.step(state)
    fields = [state.V, state.w] + ([state.phi_i, state.phi_e] if model == "bi" else [])
    worst = max(np.abs(f).max() for f in fields)
    report(10, worst <= 1e-14, f"{model}: max |state| after 100 steps {worst:.1e}", time.perf_counter() - t0)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
