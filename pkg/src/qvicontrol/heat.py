"""Stationary heat transfer with a unilateral constraint on the temperature.

Temperature ``u >= 0`` in the unit square, ``u = 0`` on ``x = 0``, ``u = b``
on ``x = 1`` and prescribed outward flux ``q`` on ``y = 0`` and ``y = 1``.
The penalized version replaces ``u = b`` by the Robin condition
``-du/dnu = (u - b) / lambda``.

Discretization: P1 elements, nodes on ``x = 0`` are eliminated; the state
space carries the ``H^1`` Gram (stiffness + mass) and the control space is
``L^2`` over all mesh nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .control import SeparableCost
from .core import ConstraintSet, FrictionFunctional, GalerkinProblem, OperatorSpec, TraceLaw, TraceMap
from .linalg import GramInner, as_vec
from .mesh import Mesh2D, boundary_weights, mass_matrix, rectangle, selection, stiffness_matrix
from .penalty import PenaltySchedule, PenaltySpec, penalty_sweep
from .solvers import SolverParams

__all__ = [
    "HeatData",
    "HeatModel",
    "assemble_heat",
    "complementarity_check",
    "heat_cost",
    "heat_labels",
    "robin_limit_experiment",
    "unit_square",
]

DIRICHLET, PRESCRIBED, FLUX = 1, 2, 3


def heat_labels(x, y, tol=1e-12):
    if x < tol:
        return DIRICHLET
    if x > 1.0 - tol:
        return PRESCRIBED
    return FLUX


def unit_square(n):
    """``n x n`` structured mesh of the unit square with heat boundary labels."""
    return rectangle(n, n, 1.0, 1.0, heat_labels)


@dataclass(frozen=True, eq=False)
class HeatData:
    """Nodal data: internal energy ``f``, boundary temperature ``b``, flux ``q``.

    Scalars are broadcast to every node; ``b`` is read on the prescribed
    boundary only and ``q`` on the flux boundary only.
    """

    f: np.ndarray
    b: np.ndarray
    q: np.ndarray

    @classmethod
    def constant(cls, n_nodes, f=0.0, b=0.0, q=0.0):
        return cls(*(np.full(n_nodes, float(v)) for v in (f, b, q)))

    @classmethod
    def from_functions(cls, mesh: Mesh2D, f, b, q):
        x, y = mesh.nodes.T
        ev = lambda g: np.broadcast_to(np.asarray(g(x, y) if callable(g) else g, dtype=float), x.shape).copy()
        return cls(ev(f), ev(b), ev(q))

    def checked(self, n_nodes):
        return HeatData(*(as_vec(v, n_nodes, name) for v, name in ((self.f, "f"), (self.b, "b"), (self.q, "q"))))

    def to_dict(self):
        return {"f": np.asarray(self.f).tolist(), "b": np.asarray(self.b).tolist(), "q": np.asarray(self.q).tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["f"], float), np.asarray(d["b"], float), np.asarray(d["q"], float))


@dataclass(frozen=True, eq=False)
class HeatModel:
    """Assembled heat problem together with its penalty and dof bookkeeping."""

    mesh: Mesh2D
    data: HeatData
    problem: GalerkinProblem
    penalty: PenaltySpec
    state_nodes: np.ndarray
    lift: object  # sparse (n_nodes x n_state) inclusion

    def full(self, u):
        """Nodal temperature on the whole mesh (zero on the Dirichlet side)."""
        return self.lift @ np.asarray(u, dtype=float)

    def boundary_gap(self, u):
        """``||u - b||`` in the lumped ``L^2`` norm of the prescribed boundary."""
        g = self.penalty.G.argument(u)
        return float(np.sqrt(self.penalty.G.weights @ (g * g)))

    @cached_property
    def mass(self):
        return mass_matrix(self.mesh)


def assemble_heat(mesh: Mesh2D, data: HeatData, enforce_smallness=True):
    """Assemble the obstacle problem and its Robin penalty.

    Returns
    -------
    HeatModel
        ``model.problem`` lives on ``K = {v >= 0, v = b on x = 1}`` and
        ``model.penalty`` carries ``K_tilde = {v >= 0}`` with the boundary
        penalty ``int (u - b) v`` over the prescribed boundary.
    """
    n_nodes = mesh.n_nodes
    data = data.checked(n_nodes)
    dirichlet = mesh.label_nodes(DIRICHLET)
    if dirichlet.size == 0:
        raise ValueError("the Dirichlet boundary is empty; the problem is not coercive")
    state = np.setdiff1d(np.arange(n_nodes), dirichlet)
    pos = np.full(n_nodes, -1)
    pos[state] = np.arange(state.size)
    n = state.size

    K_full = stiffness_matrix(mesh)
    M_full = mass_matrix(mesh)
    L = K_full[state][:, state].tocsr()
    gram_x = GramInner((L + M_full[state][:, state]).tocsr())
    gram_y = GramInner(M_full)
    lift = selection(n_nodes, state)

    flux_w = boundary_weights(mesh, FLUX)
    constant = (flux_w * data.q)[state]
    A = OperatorSpec(L, (), constant)

    gamma2 = np.setdiff1d(mesh.label_nodes(PRESCRIBED), dirichlet)
    b2 = data.b[gamma2]
    if np.any(b2 < 0):
        raise ValueError("boundary temperature must be nonnegative (otherwise K is empty)")
    lower = np.zeros(n)
    K = ConstraintSet(n, lower=lower, pins=list(zip(pos[gamma2].tolist(), b2.tolist())))
    K_tilde = ConstraintSet(n, lower=lower)
    w2 = boundary_weights(mesh, PRESCRIBED)[gamma2]
    G = TraceLaw(n, pos[gamma2], 1.0, w2, 1.0, offsets=b2, truncated=False)

    p = GalerkinProblem(gram_x, gram_y, A, K, FrictionFunctional.zero(), TraceMap(lift), data.f,
                        enforce_smallness=enforce_smallness)
    return HeatModel(mesh, data, p, PenaltySpec(K_tilde, G), state, lift)


def complementarity_check(u, p: GalerkinProblem):
    """Largest ``|min(u_i - lower_i, r_i)|`` over the unpinned dofs.

    ``r`` is the dual residual ``A u - F``.  Zero exactly when ``u`` solves
    the discrete complementarity system ``u >= 0, r >= 0, u r = 0``.  For
    two-sided bounds this is the natural residual ``u - P_K(u - r)``.
    """
    u = as_vec(u, p.n)
    r = p.residual(u)
    vals = u - np.clip(u - r, p.K.lower, p.K.upper)
    return float(np.max(np.abs(vals[~p.K.pinned]), initial=0.0))


def robin_limit_experiment(mesh: Mesh2D, data: HeatData, sched: PenaltySchedule, params: SolverParams = None,
                           f_seq=None, threads=1):
    """Penalty sweep of the Robin approximation.

    Extra columns: ``boundary_gap`` (``||u_n - b||`` on the prescribed side)
    and ``complementarity`` of each penalized solve.
    """
    model = assemble_heat(mesh, data)
    p = model.problem

    def extra(u, p_lam):
        return {"boundary_gap": model.boundary_gap(u), "complementarity": complementarity_check(u, p_lam)}

    return penalty_sweep(p, model.penalty, sched, params, f_seq=f_seq, extra=extra, threads=threads)


def heat_cost(model: HeatModel, omega=1.0, delta=1e-3, target=None):
    """``omega int (u - phi)^2 + delta int f^2`` with mass-matrix quadrature."""
    n_nodes = model.mesh.n_nodes
    target = np.zeros(n_nodes) if target is None else target
    return SeparableCost(model.lift, model.mass, target, omega, delta, model.mass)
