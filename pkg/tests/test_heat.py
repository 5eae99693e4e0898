import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from qvicontrol.heat import (
    DIRICHLET,
    FLUX,
    PRESCRIBED,
    HeatData,
    assemble_heat,
    complementarity_check,
    heat_cost,
    heat_labels,
    robin_limit_experiment,
    unit_square,
)
from qvicontrol.mesh import rectangle
from qvicontrol.penalty import PenaltySchedule
from qvicontrol.solvers import SolverParams, solve_qvi

from oracles import enumerate_box_qp

TIGHT = SolverParams(inner_tol=1e-13, outer_tol=1e-13)


def _model(n, f=0.0, b=0.0, q=0.0):
    mesh = unit_square(n)
    if callable(f):
        return assemble_heat(mesh, HeatData.from_functions(mesh, f, b, q))
    return assemble_heat(mesh, HeatData.constant(mesh.n_nodes, f, b, q))


def test_labels_partition_boundary():
    mesh = unit_square(4)
    assert_allclose(mesh.nodes[mesh.label_nodes(DIRICHLET), 0], 0.0)
    assert_allclose(mesh.nodes[mesh.label_nodes(PRESCRIBED), 0], 1.0)
    ys = mesh.nodes[mesh.label_nodes(FLUX), 1]
    assert np.all((ys == 0.0) | (ys == 1.0))
    assert heat_labels(0.0, 0.5) == DIRICHLET


def test_problem_structure():
    model = _model(4, b=2.0)
    p = model.problem
    assert p.n == 20
    assert p.K.pin_dofs.size == 5
    assert_allclose(p.K.pin_values, 2.0)
    assert_array_equal(p.K.lower, 0.0)
    assert p.j.kind == "zero"
    # pi is the inclusion into nodal L2 data, so c0 <= 1 against the H1 norm
    assert p.constants.c0 <= 1.0
    L = p.A.linear
    assert abs(L - L.T).max() < 1e-14
    assert np.linalg.eigvalsh(L.toarray())[0] > 0


def test_zero_data_zero_solution():
    model = _model(4)
    assert_array_equal(solve_qvi(model.problem).u, 0.0)


def test_complementarity_trivial_cases():
    model = _model(3, f=-1.0)
    p = model.problem
    assert complementarity_check(np.zeros(p.n), p) == 0.0
    # equation case: a perturbed positive solution, residual smaller than u
    pos = _model(3, f=1.0, b=1.0).problem
    rng = np.random.default_rng(0)
    u = solve_qvi(pos, TIGHT).u + 1e-3 * pos.K.project(rng.random(pos.n)) * ~pos.K.pinned
    r = pos.residual(u)
    free = ~pos.K.pinned
    assert np.all(np.abs(r[free]) < u[free])
    assert_allclose(complementarity_check(u, pos), np.abs(r[free]).max())


def test_complementarity_of_oracle_solution():
    # 4 x 1 strip; eliminate the pinned dofs and enumerate active sets
    mesh = rectangle(4, 1, 1.0, 1.0, heat_labels)
    x = mesh.nodes[:, 0]
    data = HeatData(-30 * np.sin(2 * np.pi * x), np.full(mesh.n_nodes, 0.5), np.zeros(mesh.n_nodes))
    model = assemble_heat(mesh, data)
    p = model.problem
    L = p.A.linear.toarray()
    F = p.load_dual - p.A.constant
    pin, free = p.K.pin_dofs, np.nonzero(~p.K.pinned)[0]
    rhs = F[free] - L[np.ix_(free, pin)] @ p.K.pin_values
    u = np.zeros(p.n)
    u[pin] = p.K.pin_values
    u[free] = enumerate_box_qp(L[np.ix_(free, free)], rhs, np.zeros(free.size), np.full(free.size, np.inf))
    assert complementarity_check(u, p) <= 1e-12
    assert np.any(u[free] < 1e-12)  # the obstacle is active somewhere
    params = SolverParams(inner_tol=1e-11, dual_tol=1e-11)
    v = solve_qvi(p, params).u
    assert complementarity_check(v, p) <= 10 * params.inner_tol
    assert_allclose(v, u, atol=1e-9)


def test_robin_sweep_gap_decreases_every_row():
    mesh = unit_square(8)
    data = HeatData.constant(mesh.n_nodes, f=1.0, b=1.0)
    params = SolverParams(dual_tol=1e-10)
    table = robin_limit_experiment(mesh, data, PenaltySchedule(1.0, 0.25, 8), params)
    gap = table.column("boundary_gap")
    assert np.all(np.diff(gap) < 0)
    assert np.all(table.column("complementarity") <= 10 * params.inner_tol)


def test_robin_sweep_without_contact_with_boundary():
    # f <= 0 and b = 0: the temperature stays zero and the penalty never acts
    mesh = unit_square(6)
    table = robin_limit_experiment(mesh, HeatData.constant(mesh.n_nodes, f=-1.0), PenaltySchedule(1.0, 0.25, 4))
    assert_array_equal(table.distances, 0.0)
    assert_array_equal(table.violations, 0.0)


def test_refinement_consistency():
    def mean_temperature(n):
        model = _model(n, f=lambda x, y: 20 * (x - 0.5), b=1.0)
        u = model.full(solve_qvi(model.problem, TIGHT).u)
        return float(np.ones(model.mesh.n_nodes) @ model.mass @ u)

    coarse, fine = mean_temperature(8), mean_temperature(16)
    assert abs(coarse - fine) <= 0.1 * abs(fine)


def test_positive_data_keeps_obstacle_inactive():
    # f >= 0, q <= 0, b >= 0: the unconstrained solution is already nonnegative
    model = _model(6, f=lambda x, y: 1 + x * y, b=0.5, q=-0.3)
    p = model.problem
    u = solve_qvi(p, TIGHT).u
    free = p.__class__(p.gram_x, p.gram_y, p.A, p.K.__class__(p.n, pins=p.K.pins), p.j, p.pi, p.f)
    assert_allclose(solve_qvi(free, TIGHT).u, u, atol=1e-10)
    assert np.all(u >= 0)


def test_outward_flux_cools():
    hot = solve_qvi(_model(6, f=1.0, b=0.5).problem, TIGHT).u
    cooled = solve_qvi(_model(6, f=1.0, b=0.5, q=1.0).problem, TIGHT).u
    assert np.all(cooled <= hot + 1e-12)
    assert cooled.sum() < hot.sum()


def test_assembly_errors():
    mesh = rectangle(3, 3, 1.0, 1.0, lambda x, y: PRESCRIBED if x > 0.999 else FLUX)
    with pytest.raises(ValueError, match="Dirichlet"):
        assemble_heat(mesh, HeatData.constant(mesh.n_nodes))
    mesh = unit_square(3)
    with pytest.raises(ValueError, match="nonnegative"):
        assemble_heat(mesh, HeatData.constant(mesh.n_nodes, b=-1.0))
    with pytest.raises(ValueError):
        assemble_heat(mesh, HeatData.constant(mesh.n_nodes + 1))


def test_heat_data_roundtrip():
    mesh = unit_square(3)
    data = HeatData.from_functions(mesh, lambda x, y: x + y, 1.0, lambda x, y: y)
    back = HeatData.from_dict(data.to_dict())
    assert_array_equal(back.f, data.f)
    assert_array_equal(back.q, mesh.nodes[:, 1])


def test_cost_vanishes_at_reachable_target():
    model = _model(4, f=1.0, b=1.0)
    u0 = solve_qvi(model.problem.with_load(np.zeros(model.mesh.n_nodes)), TIGHT).u
    cost = heat_cost(model, omega=1.0, delta=1.0, target=model.full(u0))
    assert cost(u0, np.zeros(model.mesh.n_nodes)) == 0.0
