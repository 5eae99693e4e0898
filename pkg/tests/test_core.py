import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from qvicontrol.core import (
    ConstraintSet,
    FrictionFunctional,
    GalerkinProblem,
    HypothesisError,
    OperatorSpec,
    TraceLaw,
    TraceMap,
    apply_A,
    eval_j,
    project,
    validate_hypotheses,
    vi_residual,
)
from qvicontrol.linalg import GramInner

from oracles import box_problem, contact_toy, enumerate_box_qp, random_box_instance


# projection

def test_project_clamps_and_pins():
    assert_array_equal(project(ConstraintSet(2, lower=[0, 0]), [-1.0, 2.0]), [0.0, 2.0])
    assert_array_equal(project(ConstraintSet(2, pins={0: 5.0}), [1.0, 1.0]), [5.0, 1.0])
    k = ConstraintSet(2, lower=[0, 0])
    assert_array_equal(project(k, [0.5, 3.0]), [0.5, 3.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_project_idempotent_and_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    n = 6
    lo = np.where(rng.random(n) < 0.5, -rng.random(n), -np.inf)
    hi = np.where(rng.random(n) < 0.5, rng.random(n), np.inf)
    k = ConstraintSet(n, lo, hi, pins={int(rng.integers(n)): 0.0})
    x, y = 3 * rng.standard_normal((2, n))
    px, py = k.project(x), k.project(y)
    assert_array_equal(k.project(px), px)
    assert k.contains(px)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-14


def test_constraint_set_rejects_empty_sets():
    with pytest.raises(HypothesisError, match="pinned to both"):
        ConstraintSet(2, pins=[(0, 1.0), (0, 2.0)])
    with pytest.raises(HypothesisError, match="lower > upper"):
        ConstraintSet(2, lower=[0, 1], upper=[1, 0])
    with pytest.raises(HypothesisError, match="pins outside"):
        ConstraintSet(2, lower=[0, 0], pins={1: -1.0})
    k = ConstraintSet(3, lower=[0, 0, 0], pins={2: 4.0})
    assert k.contains(k.feasible_point())


def test_constraint_set_dict_roundtrip():
    k = ConstraintSet(3, lower=[0, -np.inf, -1], upper=[np.inf, 2, 1], pins={1: 0.5})
    back = ConstraintSet.from_dict(k.to_dict())
    assert_array_equal(back.lower, k.lower)
    assert_array_equal(back.upper, k.upper)
    assert back.pins == k.pins


# operator

def test_apply_A_linear_part():
    rng = np.random.default_rng(0)
    L = sp.csr_matrix(np.diag([2.0, 3.0, 4.0]))
    g = GramInner(sp.diags([1.0, 2.0, 4.0]).tocsr())
    u = rng.standard_normal(3)
    au = apply_A(OperatorSpec(L), u, g)
    assert_allclose(au, (L @ u) / np.array([1.0, 2.0, 4.0]))
    # Riesz property on basis vectors
    for v in np.eye(3):
        assert_allclose(g.inner(au, v), v @ (L @ u))


def test_compliance_inactive_for_negative_argument():
    law = TraceLaw(3, [1, 2], 1.0, [0.5, 0.25], 3.0)
    op = OperatorSpec(sp.identity(3, format="csr"), (law,))
    u = np.array([1.0, -0.5, 0.0])
    assert_allclose(op.dual(u), u)


def test_compliance_hand_value():
    w = 0.7
    law = TraceLaw(2, [1], 1.0, w, 3.0)
    op = OperatorSpec(sp.csr_matrix((2, 2)), (law,))
    assert_allclose(op.dual([0.0, 2.0]), [0.0, 6.0 * w])
    # sign -1 reads u_nu = -u
    law_down = TraceLaw(2, [1], -1.0, w, 3.0)
    assert_allclose(law_down.dual([0.0, -2.0]), [0.0, -6.0 * w])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_operator_dual_is_energy_gradient(seed):
    rng = np.random.default_rng(seed)
    law = TraceLaw(4, [0, 3], [1.0, -1.0], [0.5, 2.0], 1.5, offsets=[0.1, -0.2])
    op = OperatorSpec(sp.csr_matrix(np.diag([1.0, 2.0, 3.0, 4.0])), (law,), constant=rng.standard_normal(4))
    u = rng.standard_normal(4)
    h = 1e-6
    fd = np.array([(op.energy(u + h * e) - op.energy(u - h * e)) / (2 * h) for e in np.eye(4)])
    assert_allclose(fd, op.dual(u), atol=1e-6)


def test_operator_rejects_bad_input():
    with pytest.raises(ValueError, match="symmetric"):
        OperatorSpec(sp.csr_matrix(np.array([[1.0, 1.0], [0.0, 1.0]])))
    with pytest.raises(ValueError, match="distinct"):
        TraceLaw(3, [0, 0], 1.0, 1.0, 1.0)
    with pytest.raises(ValueError, match="signs"):
        TraceLaw(3, [0], 2.0, 1.0, 1.0)


def test_trace_law_roundtrip():
    law = TraceLaw(5, [1, 4], [-1.0, 1.0], [0.3, 0.2], 2.0, offsets=[0.1, 0.0], truncated=False)
    back = TraceLaw.from_dict(law.to_dict())
    u = np.arange(5.0)
    assert_array_equal(back.dual(u), law.dual(u))


# friction

def _single_node(mu, eps=0.0):
    law = TraceLaw(2, [0], 1.0, 0.4, 1.0)
    return FrictionFunctional(mu, law, [1], [0.4], eps)


def test_eval_j_trivial_cases():
    rng = np.random.default_rng(0)
    eta, v = rng.standard_normal((2, 2))
    assert eval_j(FrictionFunctional.zero(), eta, v) == 0.0
    assert eval_j(_single_node(0.0), eta, v) == 0.0


def test_eval_j_hand_value():
    # p(eta_nu) = 1, |v_tau| = 3
    assert_allclose(eval_j(_single_node(0.6), [1.0, 0.0], [0.0, -3.0]), 0.6 * 0.4 * 3.0)


def test_smoothed_j_vanishes_at_zero_and_is_convex():
    j = _single_node(0.5, eps=1e-2)
    eta = np.array([2.0, 0.0])
    assert j.evaluate(eta, [0.0, 0.0]) == 0.0
    ts = np.linspace(-2, 2, 41)
    vals = np.array([j.evaluate(eta, [0.0, t]) for t in ts])
    assert np.all(np.diff(vals, 2) >= -1e-14)


@pytest.mark.parametrize("eps", [0.0, 1e-3, 0.5])
def test_prox_optimality(eps):
    j = _single_node(1.0, eps)
    y = np.linspace(-3, 3, 25)
    tau = 0.7
    x = j.prox(y, np.full_like(y, tau))
    obj = lambda z: tau * j.phi(z) + 0.5 * (z - y) ** 2
    for d in (1e-5, -1e-5):
        assert np.all(obj(x) <= obj(x + d) + 1e-12)


def test_four_point_inequality_with_certified_alpha():
    p = contact_toy(mu=0.3)
    j, gx = p.j, p.gram_x
    rng = np.random.default_rng(1)
    worst = -np.inf
    for _ in range(1000):
        e1, e2, v1, v2 = 2 * rng.standard_normal((4, 4))
        lhs = j.evaluate(e1, v2) - j.evaluate(e1, v1) + j.evaluate(e2, v1) - j.evaluate(e2, v2)
        worst = max(worst, lhs - p.alpha * gx.norm(e1 - e2) * gx.norm(v1 - v2))
    assert worst <= 1e-12


def test_friction_dissipation_nonnegative():
    p = contact_toy(mu=0.3)
    rng = np.random.default_rng(2)
    assert all(p.j.evaluate(u, u) >= 0 for u in rng.standard_normal((100, 4)))


# problem and hypotheses

def test_identity_problem_hypotheses():
    n = 4
    p = box_problem(np.eye(n), np.ones(n), lower=np.zeros(n))
    rep = validate_hypotheses(p, samples=50, seed=0)
    assert_allclose([rep.m_hat, rep.M_hat], [1.0, 1.0], rtol=1e-12)
    assert rep.alpha_hat == 0.0 and rep.gamma_hat == 0.0
    assert_allclose(rep.c0_hat, 1.0, rtol=1e-12)
    assert rep.smallness and rep.passed
    assert_allclose(p.constants.c0, 1.0)


def test_validate_hypotheses_deterministic():
    p = contact_toy(mu=0.3)
    a = validate_hypotheses(p, samples=30, seed=5)
    b = validate_hypotheses(p, samples=30, seed=5)
    assert (a.m_hat, a.M_hat, a.alpha_hat, a.c0_hat) == (b.m_hat, b.M_hat, b.alpha_hat, b.c0_hat)


def test_sampled_constants_within_certified():
    p = contact_toy(mu=0.3)
    rep = validate_hypotheses(p, samples=200, seed=0)
    assert rep.passed, rep.summary()
    assert rep.m_hat >= p.m * (1 - 1e-9)
    assert rep.M_hat <= p.M * (1 + 1e-9)
    assert 0 < rep.alpha_hat <= p.alpha * (1 + 1e-9)


def test_inflated_friction_is_flagged():
    base = contact_toy(mu=0.3)
    mu_bad = 1.5 * base.m / (base.constants.d0 ** 2 * 1.0)
    with pytest.raises(HypothesisError, match="smallness"):
        contact_toy(mu=mu_bad)
    bad = contact_toy(mu=mu_bad, enforce_smallness=False)
    rep = validate_hypotheses(bad, samples=100, seed=0)
    assert not rep.smallness
    assert not rep.passed
    assert rep.witnesses["alpha"] is not None
    assert any("alpha" in v for v in rep.violations)


def test_problem_rejects_dimension_mismatch():
    with pytest.raises(ValueError, match="trace map"):
        GalerkinProblem(GramInner.identity(2), GramInner.identity(3), OperatorSpec(sp.identity(2, format="csr")),
                        ConstraintSet(2), FrictionFunctional.zero(), TraceMap.identity(2), np.zeros(3))


def test_vi_residual_on_oracle_solution():
    rng = np.random.default_rng(4)
    L, b, lo, hi = random_box_instance(rng, 6)
    p = box_problem(L, b, lo, hi)
    u = p.K.project(enumerate_box_qp(L, b, lo, hi))
    dirs = [u + 3 * rng.standard_normal(6) for _ in range(200)]
    assert vi_residual(p, u, dirs) >= -1e-8
    assert vi_residual(p, u, [u]) == 0.0
    # move one dof off its bound/equation: some direction must detect it
    r = p.residual(u)
    i = int(np.argmax(np.abs(r)))
    bad = u.copy()
    bad[i] += 0.3 * np.sign(r[i])
    bad = p.K.project(bad)
    assert vi_residual(p, bad, dirs + [u]) < 0.0


def test_with_load_keeps_constants():
    p = contact_toy(mu=0.3)
    q = p.with_load(np.ones(4))
    assert q.constants == p.constants
    assert_array_equal(q.f, np.ones(4))
    assert_array_equal(p.f, [0.5, 1.0, 0.8, -1.0])
