"""Penalty and optimal-control experiments for elliptic quasivariational inequalities."""

from .contact import ContactModel, ElasticityData, assemble_contact, contact_rectangle
from .control import ControlSpace, OptimalPair, SeparableCost, optimal_pair_sweep, optimize_control, reduced_cost
from .core import (
    ConstraintSet,
    FrictionFunctional,
    GalerkinProblem,
    HypothesisError,
    OperatorSpec,
    TraceLaw,
    TraceMap,
    validate_hypotheses,
    vi_residual,
)
from .heat import HeatData, HeatModel, assemble_heat, complementarity_check, heat_cost, unit_square
from .linalg import ConvergenceError, GramInner, cg_solve, csr, inner, spmv
from .penalty import ConvergenceTable, PenaltySchedule, PenaltySpec, penalty_sweep
from .solvers import Solution, SolverParams, solve_qvi, solve_vi_frozen, uniqueness_check

__version__ = "0.1.0"

__all__ = [
    "ConstraintSet",
    "ContactModel",
    "ControlSpace",
    "ConvergenceError",
    "ConvergenceTable",
    "ElasticityData",
    "FrictionFunctional",
    "GalerkinProblem",
    "GramInner",
    "HeatData",
    "HeatModel",
    "HypothesisError",
    "OperatorSpec",
    "OptimalPair",
    "PenaltySchedule",
    "PenaltySpec",
    "SeparableCost",
    "Solution",
    "SolverParams",
    "TraceLaw",
    "TraceMap",
    "assemble_contact",
    "assemble_heat",
    "cg_solve",
    "complementarity_check",
    "contact_rectangle",
    "csr",
    "heat_cost",
    "inner",
    "optimal_pair_sweep",
    "optimize_control",
    "penalty_sweep",
    "reduced_cost",
    "solve_qvi",
    "solve_vi_frozen",
    "spmv",
    "uniqueness_check",
    "unit_square",
    "validate_hypotheses",
    "vi_residual",
]
