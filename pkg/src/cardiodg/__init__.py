"""High-order discontinuous Galerkin solvers for the monodomain and bidomain
cardiac models with FitzHugh-Nagumo ionics on a modal triangle basis."""
from .assembly import (
    DGSpace,
    DiffusionTensor,
    ModalField,
    PenaltySpec,
    assemble_forcing,
    assemble_mass,
    assemble_reaction,
    assemble_stiffness,
    evaluate_field,
    modal_project,
)
from .dynamics import (
    BidomainSolver,
    BidomainState,
    Forcing,
    IncompatibleForcingError,
    ModelParams,
    MonodomainSolver,
    MonodomainState,
    SolverOptions,
    check_compatibility,
    gating_step,
    i_ion,
)
from .kernels import BACKEND
from .mesh import Triangulation, build_affine_maps, unit_square_mesh
from .sparse import SolverError, SolverReport, SparseMatrix, gmres_solve
from .specfun import DubinerBasis, QuadRule, dubiner_eval, make_quad_rule, tabulate_basis

__version__ = "0.1.0"
