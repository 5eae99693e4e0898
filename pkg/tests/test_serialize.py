import dataclasses
import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from qvicontrol.contact import ElasticityData, assemble_contact, contact_rectangle
from qvicontrol.heat import HeatData, assemble_heat, heat_labels
from qvicontrol.mesh import rectangle
from qvicontrol.serialize import (
    csr_from_dict,
    csr_to_dict,
    load_json,
    load_mesh,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    save_json,
    save_mesh,
    save_problem,
)
from qvicontrol.solvers import SolverParams, solve_qvi

PARAMS = SolverParams(inner_tol=1e-12, outer_tol=1e-12)


@pytest.fixture(scope="module")
def heat_model():
    mesh = rectangle(4, 4, 1.0, 1.0, heat_labels)
    data = HeatData.from_functions(mesh, lambda x, y: 5 * np.sin(3 * x) - 1, 1.0, 0.5)
    return assemble_heat(mesh, data)


@pytest.fixture(scope="module")
def contact_model():
    mesh = contact_rectangle(6, 3)
    data = ElasticityData.uniform(mesh, traction=(0.1, -0.3), mu=0.2)
    return assemble_contact(mesh, data)


def _same_problem(p, q):
    for a, b in ((p.gram_x.gram, q.gram_x.gram), (p.gram_y.gram, q.gram_y.gram), (p.pi.pi, q.pi.pi),
                 (p.A.linear, q.A.linear)):
        assert (a != b).nnz == 0
    assert_array_equal(p.A.constant, q.A.constant)
    assert_array_equal(p.f, q.f)
    assert_array_equal(p.K.lower, q.K.lower)
    assert_array_equal(p.K.upper, q.K.upper)
    assert_array_equal(dataclasses.astuple(p.constants), dataclasses.astuple(q.constants))
    assert len(p.A.laws) == len(q.A.laws)


@pytest.mark.parametrize("which", ["heat_model", "contact_model"])
def test_problem_roundtrip_reproduces_solution(which, request, tmp_path):
    p = request.getfixturevalue(which).problem
    save_problem(p, tmp_path / "p.json")
    q = load_problem(tmp_path / "p.json")
    _same_problem(p, q)
    assert_array_equal(solve_qvi(p, PARAMS).u, solve_qvi(q, PARAMS).u)
    # a second write of the loaded problem is byte-identical
    save_problem(q, tmp_path / "q.json")
    assert (tmp_path / "p.json").read_bytes() == (tmp_path / "q.json").read_bytes()


def test_infinite_bounds_are_null(heat_model, tmp_path):
    save_problem(heat_model.problem, tmp_path / "p.json")
    raw = json.loads((tmp_path / "p.json").read_text())
    assert None in raw["constraints"]["upper"]
    assert raw["format"] == "qvicontrol-problem" and raw["version"] == 1


def test_rejects_foreign_files():
    d = problem_to_dict(rectangle_problem())
    d["format"] = "something-else"
    with pytest.raises(ValueError, match="not a problem file"):
        problem_from_dict(d)


def rectangle_problem():
    mesh = rectangle(2, 2, 1.0, 1.0, heat_labels)
    return assemble_heat(mesh, HeatData.constant(mesh.n_nodes, f=1.0)).problem


def test_nonfinite_numbers(tmp_path):
    save_json({"a": [np.inf, -np.inf, np.nan, 1.5], "b": np.float64(2.0)}, tmp_path / "x.json")
    back = load_json(tmp_path / "x.json")
    assert back["a"][:2] == [np.inf, -np.inf] and np.isnan(back["a"][2]) and back["b"] == 2.0


def test_csr_roundtrip():
    rng = np.random.default_rng(0)
    dense = rng.standard_normal((5, 7)) * (rng.random((5, 7)) < 0.4)
    back = csr_from_dict(json.loads(json.dumps(csr_to_dict(dense))))
    assert_array_equal(back.toarray(), dense)


def test_mesh_and_data_roundtrip(contact_model, heat_model, tmp_path):
    save_mesh(contact_model.mesh, tmp_path / "m.json")
    mesh = load_mesh(tmp_path / "m.json")
    assert_array_equal(mesh.nodes, contact_model.mesh.nodes)
    assert_array_equal(mesh.triangles, contact_model.mesh.triangles)
    assert_array_equal(mesh.edge_labels, contact_model.mesh.edge_labels)

    save_json(heat_model.data.to_dict(), tmp_path / "h.json")
    hd = HeatData.from_dict(load_json(tmp_path / "h.json"))
    assert_array_equal(hd.f, heat_model.data.f)

    save_json(contact_model.data.to_dict(), tmp_path / "e.json")
    ed = ElasticityData.from_dict(load_json(tmp_path / "e.json"))
    assert_array_equal(ed.f2, contact_model.data.f2)
    assert ed.mu == contact_model.data.mu and ed.c_p is None
