"""Frictional contact of a plane-strain elastic body with a layered foundation.

The body occupies ``[0, W] x [0, H]``; it is clamped on ``x = 0``, loaded by
tractions on the top and right sides and touches the foundation along
``y = 0``.  The outward normal there is ``-e2``, so ``u_nu = -u_y`` and
``u_tau = u_x``:

* normal compliance ``p(u_nu) = c_p (u_nu)_+`` enters the operator,
* the rigid part of the layer gives the nodal bound ``u_nu <= k``,
* friction ``mu p(eta_nu) |v_tau|`` is frozen in the outer fixed point,
* the penalized foundation replaces the bound by ``u_nu <= k_tilde`` plus
  the penalty ``(1/lambda) q(u_nu - k)`` with ``q(r) = c_q r_+``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .control import SeparableCost
from .core import ConstraintSet, FrictionFunctional, GalerkinProblem, OperatorSpec, TraceLaw, TraceMap
from .linalg import GramInner, as_vec, extreme_eigenvalues
from .mesh import (Mesh2D, boundary_weights, elasticity_matrix, hooke_plane_strain, lame_parameters, mass_matrix,
                   rectangle, strain_gram)
from .penalty import PenaltySchedule, PenaltySpec, penalty_sweep
from .solvers import Solution, SolverParams

__all__ = [
    "ContactDofMap",
    "ContactModel",
    "ElasticityData",
    "assemble_contact",
    "contact_labels",
    "contact_rectangle",
    "coulomb_fixed_point_diagnostics",
    "layered_foundation_experiment",
]

CLAMPED, TRACTION, CONTACT = 1, 2, 3


def contact_labels(x, y, tol=1e-12):
    if x < tol:
        return CLAMPED
    if y < tol:
        return CONTACT
    return TRACTION


def contact_rectangle(nx=16, ny=8, width=2.0, height=1.0):
    return rectangle(nx, ny, width, height, contact_labels)


@dataclass(frozen=True, eq=False)
class ElasticityData:
    """Material, foundation, loads and cost weights.

    ``f0`` (body force) and ``f2`` (traction, read on the traction boundary)
    are nodal arrays of shape ``(n_nodes, 2)``; ``theta`` is the nodal target
    for ``u_nu`` on the contact boundary.  ``c_p=None`` picks the compliance
    slope ``0.5 m_F / (d0^2 max(mu, 1))`` so that the smallness condition holds
    with margin.
    """

    f0: np.ndarray
    f2: np.ndarray
    theta: np.ndarray = None
    E: float = 1.0
    poisson: float = 0.3
    c_p: float = None
    mu: float = 0.0
    k: float = 0.05
    k_tilde: float = 0.1
    c_q: float = 1.0
    a0: float = 1.0
    a2: float = 1.0
    a3: float = 1.0

    def __post_init__(self):
        if not 0 < self.k <= self.k_tilde:
            raise ValueError("need 0 < k <= k_tilde")
        if self.mu < 0 or self.c_q <= 0 or (self.c_p is not None and self.c_p < 0):
            raise ValueError("mu, c_p must be nonnegative and c_q positive")
        if min(self.a0, self.a2, self.a3) <= 0:
            raise ValueError("cost weights must be positive")
        if not (self.E > 0 and -1.0 < self.poisson < 0.5):
            raise ValueError("invalid elastic moduli")

    @classmethod
    def uniform(cls, mesh: Mesh2D, body=(0.0, 0.0), traction=(0.0, 0.0), top_only=True, **kw):
        """Constant body force and traction; the traction acts on ``y = H`` only by default."""
        n = mesh.n_nodes
        f0 = np.tile(np.asarray(body, dtype=float), (n, 1))
        f2 = np.tile(np.asarray(traction, dtype=float), (n, 1))
        if top_only:
            f2[mesh.nodes[:, 1] < mesh.nodes[:, 1].max() - 1e-12] = 0.0
        return cls(f0, f2, **kw)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        for name in ("f0", "f2", "theta"):
            if d[name] is not None:
                d[name] = np.asarray(d[name]).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for name in ("f0", "f2", "theta"):
            if d.get(name) is not None:
                d[name] = np.asarray(d[name], dtype=float)
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ContactDofMap:
    """Contact-boundary bookkeeping: nodes, state dofs, directions and weights."""

    nodes: np.ndarray
    normal_dofs: np.ndarray
    tangent_dofs: np.ndarray
    weights: np.ndarray
    normal: tuple = (0.0, -1.0)
    tangent: tuple = (1.0, 0.0)

    def normal_displacement(self, u):
        return -np.asarray(u)[self.normal_dofs]

    def tangential_displacement(self, u):
        return np.asarray(u)[self.tangent_dofs]


@dataclass(frozen=True, eq=False)
class ContactModel:
    mesh: Mesh2D
    data: ElasticityData
    problem: GalerkinProblem
    penalty: PenaltySpec
    cost: SeparableCost
    dofs: ContactDofMap
    state_dofs: np.ndarray
    lift: sp.csr_matrix
    c_p: float
    m_elastic: float

    def full(self, u):
        """Nodal displacements ``(n_nodes, 2)`` including the clamped nodes."""
        return (self.lift @ np.asarray(u, dtype=float)).reshape(-1, 2)

    def gap(self, u):
        """``k - u_nu`` at the contact nodes."""
        return self.data.k - self.dofs.normal_displacement(u)

    def slip(self, u):
        return np.abs(self.dofs.tangential_displacement(u))

    def penetration(self, u):
        """``||(u_nu - k)_+||`` in the lumped ``L^2(Gamma_3)`` norm."""
        g = np.maximum(-self.gap(u), 0.0)
        return float(np.sqrt(self.dofs.weights @ (g * g)))

    def complementarity(self, u, p: GalerkinProblem = None):
        """Largest ``|min(k - u_nu, reaction)|`` at the contact nodes.

        ``reaction`` is the normal component of the dual residual, i.e. the
        contact force beyond the compliance (and penalty) response.  Against
        the penalized problem, whose bound is ``k_tilde``, pass that problem.
        """
        p = p or self.problem
        r = p.residual(np.asarray(u, dtype=float))[self.dofs.normal_dofs]
        bound = p.K.lower[self.dofs.normal_dofs]
        return float(np.max(np.abs(np.minimum(np.asarray(u)[self.dofs.normal_dofs] - bound, r)), initial=0.0))

    def results_csv(self, u, path=None):
        """Per contact node: position, normal displacement, gap, slip, compliance pressure."""
        un = self.dofs.normal_displacement(u)
        law = self.problem.A.laws[0]
        pressure = law.response(law.argument(u))
        buf = ["node,x,normal_displacement,gap,slip,pressure"]
        for i, node in enumerate(self.dofs.nodes):
            buf.append(",".join([str(int(node)), repr(float(self.mesh.nodes[node, 0])), repr(float(un[i])),
                                 repr(float(self.data.k - un[i])), repr(float(abs(u[self.dofs.tangent_dofs[i]]))),
                                 repr(float(pressure[i]))]))
        text = "\n".join(buf) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _trace_bound(weights, normal_dofs, tangent_dofs, n, gram):
    w = np.zeros(n)
    w[normal_dofs] += weights
    w[tangent_dofs] += weights
    return extreme_eigenvalues(sp.diags(w).tocsr(), gram)[1]


def assemble_contact(mesh: Mesh2D, data: ElasticityData, enforce_smallness=True):
    """Assemble the contact problem, its layered-foundation penalty and the tracking cost.

    The state space carries the strain Gram ``int eps(u) . eps(v)``; the load
    space is ``L^2(Omega)^2`` (mass matrix) times ``L^2(Gamma_2)^2`` (lumped
    edge weights), and ``pi`` is the pair (embedding, traction trace).

    Raises
    ------
    HypothesisError
        If ``d0^2 mu c_p >= m_F`` and ``enforce_smallness`` is set.
    """
    n_nodes = mesh.n_nodes
    f0 = np.asarray(data.f0, dtype=float).reshape(n_nodes, 2)
    f2 = np.asarray(data.f2, dtype=float).reshape(n_nodes, 2)
    clamped = mesh.label_nodes(CLAMPED)
    if clamped.size == 0:
        raise ValueError("the clamped boundary is empty; the problem is not coercive")
    free_nodes = np.setdiff1d(np.arange(n_nodes), clamped)
    state = np.column_stack([2 * free_nodes, 2 * free_nodes + 1]).ravel()
    pos = np.full(2 * n_nodes, -1)
    pos[state] = np.arange(state.size)
    n = state.size

    lam_l, mu_l = lame_parameters(data.E, data.poisson)
    L = elasticity_matrix(mesh, hooke_plane_strain(data.E, data.poisson))[state][:, state].tocsr()
    gram_x = GramInner(strain_gram(mesh)[state][:, state].tocsr())
    lift = sp.csr_matrix((np.ones(n), (state, np.arange(n))), shape=(2 * n_nodes, n))

    cnodes = np.setdiff1d(mesh.label_nodes(CONTACT), clamped)
    w3 = boundary_weights(mesh, CONTACT)[cnodes]
    ndofs = pos[2 * cnodes + 1]
    tdofs = pos[2 * cnodes]
    dmap = ContactDofMap(cnodes, ndofs, tdofs, w3)

    m_elastic = 2.0 * mu_l
    c_p = data.c_p
    if c_p is None:
        d0sq = _trace_bound(w3, ndofs, tdofs, n, gram_x.gram)
        c_p = 0.5 * m_elastic / (d0sq * max(data.mu, 1.0))
    compliance = TraceLaw(n, ndofs, -1.0, w3, c_p)
    A = OperatorSpec(L, (compliance,))
    friction = FrictionFunctional(data.mu, compliance, tdofs, w3) if data.mu > 0 else FrictionFunctional.zero()

    lower = np.full(n, -np.inf)
    lower[ndofs] = -data.k
    K = ConstraintSet(n, lower=lower)
    lower_t = lower.copy()
    lower_t[ndofs] = -data.k_tilde
    G = TraceLaw(n, ndofs, -1.0, w3, data.c_q, offsets=data.k)

    tnodes = mesh.label_nodes(TRACTION)
    w2 = boundary_weights(mesh, TRACTION)[tnodes]
    M2 = sp.kron(mass_matrix(mesh), sp.identity(2)).tocsr()
    W2 = sp.diags(np.repeat(w2, 2))
    gram_y = GramInner(sp.block_diag([M2, W2]).tocsr())
    trace = lift[np.column_stack([2 * tnodes, 2 * tnodes + 1]).ravel()]
    pi = TraceMap(sp.vstack([lift, trace]).tocsr())
    f = np.concatenate([f0.ravel(), f2[tnodes].ravel()])

    p = GalerkinProblem(gram_x, gram_y, A, K, friction, pi, f, enforce_smallness=enforce_smallness)

    theta = np.zeros(n_nodes) if data.theta is None else as_vec(data.theta, n_nodes, "theta")
    observe = sp.csr_matrix((-np.ones(len(ndofs)), (np.arange(len(ndofs)), ndofs)), shape=(len(ndofs), n))
    H = sp.block_diag([data.a0 * M2, data.a2 * W2]).tocsr()
    cost = SeparableCost(observe, sp.diags(w3), theta[cnodes], data.a3, 1.0, H)
    return ContactModel(mesh, data, p, PenaltySpec(ConstraintSet(n, lower=lower_t), G), cost, dmap, state, lift,
                        float(c_p), m_elastic)


def coulomb_fixed_point_diagnostics(sol: Solution):
    """Largest observed outer contraction ratio (0 when the coupling is absent)."""
    return float(max(sol.contraction_estimates, default=0.0))


def layered_foundation_experiment(mesh: Mesh2D, data: ElasticityData, sched: PenaltySchedule,
                                  params: SolverParams = None, threads=1):
    """Penalty sweep towards the rigid layer.

    Extra columns: ``penetration`` ``||(u_nu - k)_+||``, ``max_penetration``
    (largest nodal ``u_nu - k``) and the contact ``complementarity``.
    """
    model = assemble_contact(mesh, data)

    def extra(u, p_lam):
        return {"penetration": model.penetration(u),
                "max_penetration": float(np.max(-model.gap(u), initial=0.0)),
                "complementarity": model.complementarity(u, p_lam)}

    return penalty_sweep(model.problem, model.penalty, sched, params, extra=extra, threads=threads)
