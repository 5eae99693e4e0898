"""JSON files for problems, meshes and nodal data.

Problem schema (``"format": "qvicontrol-problem"``, ``"version": 1``)::

    {"n": int, "ny": int,
     "gram_x": CSR, "gram_y": CSR, "pi": CSR,
     "operator": {"linear": CSR, "laws": [TraceLaw...], "constant": [...]},
     "constraints": {"n", "lower", "upper", "pins": [[dof, value], ...]},
     "friction": {"kind": "zero"} | {"kind": "tresca_coulomb", ...},
     "load": [...], "constants": {"m", "M", "alpha", "beta", "gamma", "c0", "d0"},
     "enforce_smallness": bool}

with ``CSR = {"shape": [r, c], "data": [...], "indices": [...], "indptr": [...]}``.
Infinite bounds are written as ``null``; other non-finite numbers as the
strings ``"inf"``, ``"-inf"`` or ``"nan"``.  Mesh files
hold ``nodes``, ``triangles``, ``boundary_edges`` and ``edge_labels``; data
files hold the fields of :class:`HeatData` or :class:`ElasticityData`.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
import scipy.sparse as sp

from .core import ConstraintSet, Constants, FrictionFunctional, GalerkinProblem, OperatorSpec, TraceLaw, TraceMap
from .linalg import GramInner
from .mesh import Mesh2D

__all__ = [
    "csr_from_dict",
    "csr_to_dict",
    "load_json",
    "load_mesh",
    "load_problem",
    "problem_from_dict",
    "problem_to_dict",
    "save_json",
    "save_mesh",
    "save_problem",
]

PROBLEM_FORMAT = "qvicontrol-problem"


def csr_to_dict(m):
    m = sp.csr_matrix(m)
    m.sort_indices()
    return {"shape": list(m.shape), "data": m.data.tolist(), "indices": m.indices.tolist(),
            "indptr": m.indptr.tolist()}


def csr_from_dict(d):
    return sp.csr_matrix((np.asarray(d["data"], float), np.asarray(d["indices"], int),
                          np.asarray(d["indptr"], int)), shape=tuple(d["shape"]))


def _encode(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, np.generic):
        return _encode(obj.item())
    return obj


def _decode(obj):
    if obj in ("inf", "-inf", "nan"):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def save_json(obj, path):
    with open(path, "w") as fh:
        json.dump(_encode(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return _decode(json.load(fh))


def problem_to_dict(p: GalerkinProblem):
    return {
        "format": PROBLEM_FORMAT, "version": 1, "n": p.n, "ny": p.gram_y.dim,
        "gram_x": csr_to_dict(p.gram_x.gram), "gram_y": csr_to_dict(p.gram_y.gram), "pi": csr_to_dict(p.pi.pi),
        "operator": {"linear": csr_to_dict(p.A.linear), "laws": [law.to_dict() for law in p.A.laws],
                     "constant": p.A.constant.tolist()},
        "constraints": p.K.to_dict(), "friction": p.j.to_dict(), "load": p.f.tolist(),
        "constants": dataclasses.asdict(p.constants), "enforce_smallness": p.enforce_smallness,
    }


def problem_from_dict(d):
    if d.get("format") != PROBLEM_FORMAT:
        raise ValueError(f"not a problem file (format {d.get('format')!r})")
    op = d["operator"]
    A = OperatorSpec(csr_from_dict(op["linear"]), tuple(TraceLaw.from_dict(x) for x in op["laws"]),
                     np.asarray(op["constant"], float))
    return GalerkinProblem(
        GramInner(csr_from_dict(d["gram_x"])), GramInner(csr_from_dict(d["gram_y"])), A,
        ConstraintSet.from_dict(d["constraints"]), FrictionFunctional.from_dict(d["friction"]),
        TraceMap(csr_from_dict(d["pi"])), np.asarray(d["load"], float),
        constants=Constants(**d["constants"]), enforce_smallness=d["enforce_smallness"])


def save_problem(p: GalerkinProblem, path):
    save_json(problem_to_dict(p), path)


def load_problem(path) -> GalerkinProblem:
    return problem_from_dict(load_json(path))


def save_mesh(mesh: Mesh2D, path):
    save_json(mesh.to_dict(), path)


def load_mesh(path) -> Mesh2D:
    return Mesh2D.from_dict(load_json(path))
