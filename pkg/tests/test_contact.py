import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from qvicontrol.contact import (
    CLAMPED,
    CONTACT,
    TRACTION,
    ElasticityData,
    assemble_contact,
    contact_rectangle,
    coulomb_fixed_point_diagnostics,
    layered_foundation_experiment,
)
from qvicontrol.core import HypothesisError, validate_hypotheses
from qvicontrol.linalg import cg_solve
from qvicontrol.mesh import lame_parameters
from qvicontrol.penalty import PenaltySchedule
from qvicontrol.solvers import SolverParams, solve_qvi

TIGHT = SolverParams(inner_tol=1e-12, outer_tol=1e-12)


@pytest.fixture(scope="module")
def mesh():
    return contact_rectangle(8, 4)


def _model(mesh, **kw):
    kw.setdefault("traction", (0.0, -0.05))
    kw.setdefault("k", 0.02)
    kw.setdefault("k_tilde", 0.2)
    traction = kw.pop("traction")
    return assemble_contact(mesh, ElasticityData.uniform(mesh, traction=traction, **kw))


def test_geometry_labels(mesh):
    x, y = mesh.nodes.T
    assert_allclose(x[mesh.label_nodes(CLAMPED)], 0.0)
    assert_allclose(y[mesh.label_nodes(CONTACT)], 0.0)
    t = mesh.label_nodes(TRACTION)
    assert np.all((y[t] == 1.0) | (x[t] == 2.0))


def test_dof_map(mesh):
    model = _model(mesh, mu=0.3)
    d = model.dofs
    assert d.normal == (0.0, -1.0) and d.tangent == (1.0, 0.0)
    u = np.zeros(model.problem.n)
    u[d.normal_dofs] = -0.1
    u[d.tangent_dofs] = 0.05
    assert_allclose(d.normal_displacement(u), 0.1)
    assert_allclose(d.tangential_displacement(u), 0.05)
    assert_allclose(d.weights.sum(), 2.0 - 0.125)  # the clamped corner node carries half an edge


def test_zero_data_zero_solution(mesh):
    model = _model(mesh, traction=(0.0, 0.0), mu=0.0, c_p=0.0)
    assert_array_equal(solve_qvi(model.problem).u, 0.0)


def test_uplift_matches_unconstrained_elasticity(mesh):
    model = _model(mesh, traction=(0.0, 0.05), mu=0.5)
    p = model.problem
    u = solve_qvi(p, TIGHT).u
    assert np.all(model.gap(u) > 0)
    free = cg_solve(p.A.linear, p.load_dual, tol=1e-12)
    assert_allclose(u, free, atol=1e-9)


def test_elastic_monotonicity_constant(mesh):
    model = _model(mesh)
    p = model.problem
    _, mu_l = lame_parameters(1.0, 0.3)
    assert model.m_elastic == 2 * mu_l
    rng = np.random.default_rng(0)
    q = min((u @ p.A.linear @ u) / (u @ p.gram_x.gram @ u) for u in rng.standard_normal((100, p.n)))
    assert q >= model.m_elastic * (1 - 1e-12)
    assert p.m >= model.m_elastic * (1 - 1e-9)


def test_default_compliance_satisfies_smallness(mesh):
    for mu in (0.1, 0.5, 2.0):
        model = _model(mesh, mu=mu)
        d0 = model.problem.constants.d0
        assert d0 ** 2 * mu * model.c_p <= 0.5 * model.m_elastic * (1 + 1e-12)


def test_smallness_violation_rejected(mesh):
    base = _model(mesh, mu=0.5)
    mu_bad = 2 * base.m_elastic / (base.problem.constants.d0 ** 2 * base.c_p)
    with pytest.raises(HypothesisError, match="smallness"):
        _model(mesh, mu=mu_bad, c_p=base.c_p)
    bad = assemble_contact(mesh, ElasticityData.uniform(mesh, mu=mu_bad, c_p=base.c_p, k=0.02, k_tilde=0.2),
                           enforce_smallness=False)
    assert not validate_hypotheses(bad.problem, samples=20).smallness


def test_coulomb_diagnostics(mesh):
    ratios = []
    for mu in (0.0, 0.1, 0.2):
        model = _model(mesh, traction=(0.02, -0.05), mu=mu)
        sol = solve_qvi(model.problem, TIGHT)
        ratios.append(coulomb_fixed_point_diagnostics(sol))
        if mu == 0.0:
            assert sol.outer_iterations <= 2
        rep = validate_hypotheses(model.problem, samples=100)
        assert ratios[-1] <= rep.alpha_hat / rep.m_hat + 0.05
    assert ratios[0] == 0.0
    assert ratios[1] < 0.5
    assert ratios[2] > ratios[1]


def test_contact_complementarity_and_dissipation(mesh):
    model = _model(mesh, traction=(0.02, -0.2), mu=0.5)
    p = model.problem
    params = SolverParams(inner_tol=1e-11, outer_tol=1e-11, dual_tol=1e-11)
    u = solve_qvi(p, params).u
    assert np.any(np.abs(model.gap(u)) < 1e-12)  # the rigid bound is reached
    assert model.complementarity(u) <= 10 * params.inner_tol
    assert p.j.evaluate(u, u) >= 0.0
    assert p.K.contains(u)


def test_layer_sweep_penetration_decreases(mesh):
    data = ElasticityData.uniform(mesh, traction=(0.0, -0.2), mu=0.5, k=0.02, k_tilde=0.2)
    table = layered_foundation_experiment(mesh, data, PenaltySchedule(1.0, 0.25, 6))
    pen = table.column("penetration")
    assert pen[0] > 0
    assert np.all(np.diff(pen) < 0)
    assert_allclose(pen, table.violations)


def test_rigid_layer_equals_reference(mesh):
    data = ElasticityData.uniform(mesh, traction=(0.0, -0.2), mu=0.5, k=0.05, k_tilde=0.05)
    table = layered_foundation_experiment(mesh, data, PenaltySchedule(1.0, 0.25, 3), TIGHT)
    assert np.all(table.distances <= 1e-9)


def test_no_contact_rows_equal_reference(mesh):
    data = ElasticityData.uniform(mesh, traction=(0.0, -1e-4), mu=0.5, k=0.05, k_tilde=0.1)
    table = layered_foundation_experiment(mesh, data, PenaltySchedule(1.0, 0.25, 3), TIGHT)
    assert np.all(table.distances <= 1e-10)
    assert_array_equal(table.column("penetration"), 0.0)


def test_results_csv(mesh):
    model = _model(mesh, mu=0.5)
    u = solve_qvi(model.problem).u
    lines = model.results_csv(u).splitlines()
    assert lines[0] == "node,x,normal_displacement,gap,slip,pressure"
    assert len(lines) == 1 + len(model.dofs.nodes)


def test_tracking_cost(mesh):
    model = _model(mesh, mu=0.5)
    u = solve_qvi(model.problem).u
    un = model.dofs.normal_displacement(u)
    expected = model.data.a3 * float(model.dofs.weights @ (un ** 2))
    assert_allclose(model.cost.tracking(u), expected, rtol=1e-12)


def test_elasticity_data_validation_and_roundtrip(mesh):
    with pytest.raises(ValueError):
        ElasticityData.uniform(mesh, k=0.2, k_tilde=0.1)
    with pytest.raises(ValueError):
        ElasticityData.uniform(mesh, poisson=0.5)
    with pytest.raises(ValueError):
        ElasticityData.uniform(mesh, mu=-1.0)
    data = ElasticityData.uniform(mesh, traction=(0.1, -0.2), mu=0.3)
    back = ElasticityData.from_dict(data.to_dict())
    assert_array_equal(back.f2, data.f2)
    assert back.mu == 0.3 and back.c_p is None
