"""Scenario setup and the time loop behind ``cardiodg solve``."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..assembly import DGSpace, modal_project
from ..dynamics import NO_FORCING, BidomainSolver, Forcing, MonodomainSolver
from ..mesh import unit_square_mesh
from ..verify import ExactSolution, run_h_convergence, run_p_convergence
from .config import RunConfig
from .output import (
    sample_lattice,
    write_convergence_csv,
    write_p_convergence_csv,
    write_summary_csv,
    write_vtk,
)

log = logging.getLogger(__name__)


@dataclass
class Snapshot:
    step: int
    t: float
    fields: dict  # name -> modal coefficients


@dataclass
class RunResult:
    config: RunConfig
    space: DGSpace
    snapshots: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    files: list = field(default_factory=list)
    final_state: object = None


def build_problem(config: RunConfig):
    """Space, stepper and initial state for the configured scenario."""
    params = config.params
    space = DGSpace(unit_square_mesh(config.sigma), config.p)
    if config.scenario == "manufactured":
        exact = ExactSolution(params)
        w0 = modal_project(space, lambda x, y: exact.w(x, y, 0.0))
        if config.model == "mono":
            solver = MonodomainSolver(space, params, exact.monodomain_forcing(), config.solver)
            state = solver.initial_state(modal_project(space, lambda x, y: exact.V(x, y, 0.0)), w0)
        else:
            fi, fe = exact.bidomain_forcing()
            solver = BidomainSolver(space, params, fi, fe, config.solver)
            state = solver.initial_state(
                modal_project(space, lambda x, y: exact.phi_i(x, y, 0.0)),
                modal_project(space, lambda x, y: exact.phi_e(x, y, 0.0)),
                w0,
            )
        return space, solver, state

    # stimulus / custom: tissue at rest, isolated boundary, optional applied current
    forcing = NO_FORCING if config.stimulus is None else Forcing(config.stimulus, None)
    if config.model == "mono":
        solver = MonodomainSolver(space, params, forcing, config.solver)
        state = solver.initial_state(0.0, 0.0)
    else:
        # the same current enters and leaves, so the Neumann problem stays compatible
        solver = BidomainSolver(space, params, forcing, forcing, config.solver)
        state = solver.initial_state(0.0, 0.0, 0.0)
    return space, solver, state


def _fields(config: RunConfig, state) -> dict:
    out = {"Vm": state.V.copy(), "w": state.w.copy()}
    if config.model == "bi":
        out["phi_i"] = state.phi_i.copy()
        out["phi_e"] = state.phi_e.copy()
    return out


def run_simulation(config: RunConfig, out_dir=None, write_files: bool = True) -> RunResult:
    """Integrate N = T/dt steps, writing VTK snapshots and a run-summary CSV.

    Raises SolverError (with the failing step) if a linear solve does not converge.
    """
    out_dir = Path(out_dir) if out_dir is not None else config.out_dir
    space, solver, state = build_problem(config)
    result = RunResult(config, space)
    snap_steps = set(config.snapshot_steps())
    total = 0
    dt = config.params.dt
    for _ in range(config.n_steps):
        state = solver.step(state)
        total += solver.last_report.iterations
        if state.n not in snap_steps:
            continue
        t = state.n * dt
        snap = Snapshot(state.n, t, _fields(config, state))
        result.snapshots.append(snap)
        v_pts = sample_lattice(space, state.V)
        v_cell = space.cell_averages(state.V)
        rec = {
            "step": state.n,
            "t": t,
            "iterations": solver.last_report.iterations,
            "residual": solver.last_report.residual,
            "total_iterations": total,
            "Vm_min": float(v_pts.min()),
            "Vm_max": float(v_pts.max()),
            "Vm_cell_min": float(v_cell.min()),
            "Vm_cell_max": float(v_cell.max()),
        }
        result.summary.append(rec)
        log.info("step %d t=%.4g: %d iterations, Vm in [%.4f, %.4f]", state.n, t,
                 rec["iterations"], rec["Vm_min"], rec["Vm_max"])
        if write_files:
            result.files.append(write_vtk(snap.fields, space, out_dir / f"snapshot_{state.n:06d}.vtk"))
    if write_files:
        result.files.append(write_summary_csv(result.summary, out_dir / "summary.csv"))
    result.final_state = state
    return result


def run_convergence(config: RunConfig, out_dir=None, write_files: bool = True):
    """Manufactured-solution study; h-refinement at degree p or p-refinement at level sigma."""
    out_dir = Path(out_dir) if out_dir is not None else config.out_dir
    if config.convergence_kind == "h":
        rows = run_h_convergence(config.model, config.p, config.levels, config.params,
                                 config.solver, config.field_name)
        path = out_dir / f"convergence_{config.model}_p{config.p}.csv"
        files = [write_convergence_csv(rows, path)] if write_files else []
    else:
        rows = run_p_convergence(config.model, config.degrees, config.sigma, config.params,
                                 config.solver, config.field_name)
        path = out_dir / f"p_convergence_{config.model}_sigma{config.sigma}.csv"
        files = [write_p_convergence_csv(rows, path)] if write_files else []
    return rows, files
