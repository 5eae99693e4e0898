"""Experiment runner: presets, INI configuration, CSV outputs and verdicts.

A configuration is an INI file whose sections and keys are listed in
:data:`SCHEMA`.  ``[experiment] preset = NAME`` starts from a builtin preset
and any other key overrides it.  Every experiment writes its CSV tables, a
``verdict.csv`` (criterion, measured value, threshold, pass flag) and a
``summary.txt`` to the output directory.  Timings are left out of all files
unless ``[experiment] timing = true`` so that reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import copy
import dataclasses
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .contact import ElasticityData, assemble_contact, contact_rectangle, coulomb_fixed_point_diagnostics
from .control import ControlSpace, midpoint_convexity, optimal_pair_sweep, optimize_control, reduced_cost
from .core import validate_hypotheses
from .heat import HeatData, assemble_heat, complementarity_check, heat_cost, heat_labels, unit_square
from .linalg import ConvergenceError
from .mesh import rectangle
from .penalty import PenaltySchedule, non_increasing, penalty_sweep
from .serialize import load_json, load_mesh, load_problem
from .solvers import SolverParams, solve_qvi

__all__ = [
    "ConfigError",
    "Criterion",
    "ExperimentConfig",
    "PRESETS",
    "SCHEMA",
    "Verdict",
    "list_presets",
    "load_config",
    "main",
    "run",
    "validate",
]


class ConfigError(ValueError):
    """Invalid configuration; the message names the field and, when known, the line."""


KINDS = ("robin-sweep", "layer-sweep", "coulomb", "control-uniqueness", "pair-sweep", "hypotheses", "solve")


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit_open(x):
    return 0 < x < 1


# section -> key -> (type, default, check, description)
SCHEMA = {
    "experiment": {
        "kind": (str, None, lambda s: s in KINDS, "one of " + ", ".join(KINDS)),
        "preset": (str, "", None, "builtin preset to start from"),
        "model": (str, "heat", lambda s: s in ("heat", "contact"), "heat or contact"),
        "problem": (str, "", None, "problem JSON file (kind = solve)"),
        "seed": (int, 0, _nonneg, "random seed"),
        "threads": (int, 1, _positive, "worker threads for independent rows"),
        "timing": (bool, False, None, "write wall-clock seconds into the tables"),
    },
    "mesh": {
        "nx": (int, 16, _positive, "cells in x"),
        "ny": (int, 16, _positive, "cells in y"),
        "file": (str, "", None, "mesh JSON file (overrides nx, ny)"),
    },
    "heat": {
        "f_amplitude": (float, 20.0, None, "internal energy f = amplitude * (x - shift)"),
        "f_shift": (float, 0.5, None, "see f_amplitude"),
        "b": (float, 1.0, _nonneg, "temperature on x = 1"),
        "q": (float, 0.0, None, "outward flux on y = 0 and y = 1"),
        "data_file": (str, "", None, "HeatData JSON file (overrides the above)"),
    },
    "contact": {
        "traction_x": (float, 0.0, None, "traction on the top side"),
        "traction_y": (float, -0.05, None, "traction on the top side"),
        "body_x": (float, 0.0, None, "body force"),
        "body_y": (float, 0.0, None, "body force"),
        "mu": (float, 0.5, _nonneg, "friction coefficient"),
        "mu_inflation": (float, 1.5, _positive, "alpha / m of the deliberately violated instance (kind = hypotheses)"),
        "c_p": (float, float("nan"), None, "compliance slope (nan: automatic)"),
        "k": (float, 0.02, _positive, "thickness of the soft layer"),
        "k_tilde": (float, 0.2, _positive, "total layer thickness"),
        "c_q": (float, 1.0, _positive, "slope of the layer penalty"),
        "E": (float, 1.0, _positive, "Young modulus"),
        "poisson": (float, 0.3, lambda x: -1 < x < 0.5, "Poisson ratio"),
        "width": (float, 2.0, _positive, "body width"),
        "height": (float, 1.0, _positive, "body height"),
        "data_file": (str, "", None, "ElasticityData JSON file (overrides the above)"),
    },
    "schedule": {
        "lambda0": (float, 1.0, _positive, "first penalty parameter"),
        "ratio": (float, 0.25, _unit_open, "lambda_{n+1} / lambda_n"),
        "count": (int, 8, _positive, "number of levels"),
        "warm_start": (bool, False, None, "start each level from the previous one"),
    },
    "solver": {
        "inner_tol": (float, 1e-10, _positive, "relative natural-residual tolerance"),
        "outer_tol": (float, 1e-10, _positive, "outer fixed-point tolerance (X-norm)"),
        "max_inner": (int, 20000, _positive, "inner iteration limit"),
        "max_outer": (int, 50, _positive, "outer iteration limit"),
        "metric": (str, "jacobi", lambda s: s in ("jacobi", "gram"), "jacobi or gram"),
        "accelerate": (bool, True, None, "face conjugate-gradient steps"),
        "dual_check": (bool, True, None, "also stop on the unscaled natural residual (dual_tol = inner_tol)"),
    },
    "cost": {
        "omega": (float, 1.0, _nonneg, "tracking weight"),
        "delta": (float, 1e-2, _positive, "control weight"),
        "target_perturbation": (float, 0.5, None, "phi_n = lambda_n * c * x * y"),
        "patches_x": (int, 2, _positive, "control patches in x"),
        "patches_y": (int, 2, _positive, "control patches in y"),
        "starts": (int, 2, _positive, "optimizer starts"),
        "min_step": (float, 1e-7, _positive, "pattern-search resolution"),
        "segments": (int, 100, _positive, "random segments of the convexity check"),
    },
    "criteria": {
        "slack": (float, 0.05, _nonneg, "per-step relative slack of monotonicity checks"),
        "final_ratio": (float, 0.01, _positive, "final / first bound of penalty sweeps"),
        "gap_ratio": (float, 0.05, _positive, "final / first bound of the cost gap"),
        "control_ratio": (float, 0.10, _positive, "final / first bound of |f_n* - f*|"),
        "complementarity_factor": (float, 10.0, _positive, "complementarity <= factor * inner_tol"),
        "max_outer": (int, 25, _positive, "outer iteration budget of the Coulomb check"),
        "ratio_slack": (float, 0.05, _nonneg, "outer ratio <= alpha/m + slack"),
        "uniqueness": (float, 1e-4, _positive, "|f*(seed) - f*(seed + 1)|_Y bound"),
        "convexity": (float, 1e-9, _nonneg, "midpoint convexity tolerance"),
    },
}


def _preset(kind, description, **sections):
    d = {"experiment": {"kind": kind}}
    for sec, vals in sections.items():
        d.setdefault(sec, {}).update(vals)
    return description, d


PRESETS = dict([
    ("heat-trivial", _preset("robin-sweep", "Robin sweep with f = b = q = 0: every row is exactly zero",
                             experiment={"model": "heat"}, mesh={"nx": 8, "ny": 8},
                             heat={"f_amplitude": 0.0, "b": 0.0, "q": 0.0})),
    ("heat-robin-sweep", _preset("robin-sweep", "Robin approximation of the prescribed temperature, 16x16",
                                 experiment={"model": "heat"})),
    ("contact-layer-sweep", _preset("layer-sweep", "stiffening layered foundation under compressive load, 16x8",
                                    experiment={"model": "contact"}, mesh={"nx": 16, "ny": 8})),
    ("contact-coulomb", _preset("coulomb", "outer fixed point of the Coulomb coupling, 16x8",
                                experiment={"model": "contact"}, mesh={"nx": 16, "ny": 8})),
    ("control-uniqueness", _preset("control-uniqueness", "phi = 0 heat control: two seeds, convexity segments",
                                   experiment={"model": "heat"})),
    ("control-pair-sweep", _preset("pair-sweep", "optimal pairs of the Robin problems against the limit",
                                   experiment={"model": "heat"})),
    ("hypotheses", _preset("hypotheses", "constant validation on both presets and an inflated-mu instance",
                           experiment={"model": "contact"}, mesh={"nx": 16, "ny": 8})),
])


def list_presets():
    return list(PRESETS)


@dataclass
class ExperimentConfig:
    """Resolved configuration: ``values[section][key]`` typed per :data:`SCHEMA`."""

    values: dict
    out: str = None
    source: str = "<preset>"

    def __getitem__(self, section):
        return self.values[section]

    @property
    def kind(self):
        return self.values["experiment"]["kind"]


def _parse_value(typ, raw):
    if typ is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if typ is str:
        return raw.strip()
    return typ(raw.strip())


def _line_of(text, section, key):
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].split(":", 1)[0].strip() == key:
            return i
    return None


def _resolve(raw_sections, text="", source="<preset>"):
    def where(sec, key):
        line = _line_of(text, sec, key) if text else None
        return f"{source}:{line}: [{sec}] {key}" if line else f"{source}: [{sec}] {key}"

    values = {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    for sec, keys in raw_sections.items():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, raw in keys.items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{where(sec, key)}: unknown key")
            typ, _, check, desc = SCHEMA[sec][key]
            try:
                val = _parse_value(typ, raw) if isinstance(raw, str) else typ(raw)
            except ValueError as exc:
                raise ConfigError(f"{where(sec, key)}: {exc}") from None
            if check is not None and not check(val):
                raise ConfigError(f"{where(sec, key)}: invalid value {raw!r} ({desc})")
            values[sec][key] = val
    if values["experiment"]["kind"] is None:
        raise ConfigError(f"{source}: [experiment] kind is required")
    c = values["contact"]
    if c["k_tilde"] < c["k"]:
        raise ConfigError(f"{where('contact', 'k_tilde')}: must be >= k")
    for sec, key in (("mesh", "file"), ("heat", "data_file"), ("contact", "data_file"), ("experiment", "problem")):
        path = values[sec][key]
        if path and not os.path.isfile(path):
            raise ConfigError(f"{where(sec, key)}: no such file {path!r}")
    if values["experiment"]["kind"] == "solve" and not values["experiment"]["problem"]:
        raise ConfigError(f"{source}: kind = solve needs [experiment] problem")
    return values


def preset_config(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return ExperimentConfig(_resolve(copy.deepcopy(PRESETS[name][1]), source=f"preset {name}"),
                            source=f"preset {name}")


def load_config(path):
    """Parse and validate an INI configuration file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    raw = {sec: dict(parser[sec]) for sec in parser.sections()}
    preset = raw.get("experiment", {}).get("preset", "").strip()
    if preset:
        if preset not in PRESETS:
            line = _line_of(text, "experiment", "preset")
            raise ConfigError(f"{path}:{line}: [experiment] preset: unknown preset {preset!r}")
        base = copy.deepcopy(PRESETS[preset][1])
        for sec, keys in raw.items():
            base.setdefault(sec, {}).update(keys)
        raw = base
    return ExperimentConfig(_resolve(raw, text, path), source=path)


@dataclass
class Criterion:
    name: str
    measured: float
    threshold: float
    relation: str  # "<=", ">=" or "=="
    passed: bool


@dataclass
class Verdict:
    """Per-criterion outcomes; the experiment passes iff every criterion does."""

    experiment: str
    criteria: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def check(self, name, measured, relation, threshold):
        measured = float(measured)
        ok = {"<=": measured <= threshold, ">=": measured >= threshold, "==": measured == threshold}[relation]
        ok = bool(ok) and np.isfinite(measured)
        self.criteria.append(Criterion(name, measured, float(threshold), relation, ok))
        return ok

    def flag(self, name, ok):
        return self.check(name, 1.0 if ok else 0.0, "==", 1.0)

    @property
    def passed(self):
        return all(c.passed for c in self.criteria)

    def to_csv(self):
        lines = ["criterion,measured,relation,threshold,passed"]
        lines += [f"{c.name},{c.measured!r},{c.relation},{c.threshold!r},{int(c.passed)}" for c in self.criteria]
        return "\n".join(lines) + "\n"

    def summary(self):
        lines = [f"experiment: {self.experiment}"]
        for c in self.criteria:
            lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.measured:.6g} {c.relation} {c.threshold:.6g}")
        lines += [f"  note: {n}" for n in self.notes]
        lines.append(f"verdict: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _params(cfg, **over):
    s = cfg["solver"]
    kw = dict(inner_tol=s["inner_tol"], outer_tol=s["outer_tol"], max_inner=s["max_inner"],
              max_outer=s["max_outer"], metric=s["metric"], accelerate=s["accelerate"])
    kw.update(over)
    if s["dual_check"]:
        kw["dual_tol"] = kw["inner_tol"]
    return SolverParams(**kw)


def _schedule(cfg):
    s = cfg["schedule"]
    return PenaltySchedule(s["lambda0"], s["ratio"], s["count"])


def _mesh(cfg):
    m = cfg["mesh"]
    if m["file"]:
        return load_mesh(m["file"])
    if cfg["experiment"]["model"] == "contact":
        c = cfg["contact"]
        return contact_rectangle(m["nx"], m["ny"], c["width"], c["height"])
    return unit_square(m["nx"]) if m["nx"] == m["ny"] else _rect_heat(m["nx"], m["ny"])


def _rect_heat(nx, ny):
    return rectangle(nx, ny, 1.0, 1.0, heat_labels)


def heat_model(cfg, enforce_smallness=True):
    mesh = _mesh(cfg)
    h = cfg["heat"]
    if h["data_file"]:
        data = HeatData.from_dict(load_json(h["data_file"]))
    else:
        a, s = h["f_amplitude"], h["f_shift"]
        data = HeatData.from_functions(mesh, lambda x, y: a * (x - s), h["b"], h["q"])
    return assemble_heat(mesh, data, enforce_smallness)


def contact_data(cfg, mesh, **over):
    c = cfg["contact"]
    if c["data_file"]:
        data = ElasticityData.from_dict(load_json(c["data_file"]))
        return dataclasses.replace(data, **over)
    kw = dict(mu=c["mu"], c_p=None if np.isnan(c["c_p"]) else c["c_p"], k=c["k"], k_tilde=c["k_tilde"],
              c_q=c["c_q"], E=c["E"], poisson=c["poisson"])
    kw.update(over)
    return ElasticityData.uniform(mesh, body=(c["body_x"], c["body_y"]),
                                  traction=(c["traction_x"], c["traction_y"]), **kw)


def _write(out, name, text):
    if out is not None:
        with open(os.path.join(out, name), "w", newline="") as fh:
            fh.write(text)


def _sweep_checks(v, cfg, table, distance_name, violation_name, violation_values):
    cr = cfg["criteria"]
    d = table.distances
    failed = sum(r.failed for r in table.rows)
    v.check("failed_rows", failed, "==", 0)
    v.flag(f"{distance_name}_non_increasing", non_increasing(d, cr["slack"]))
    v.flag(f"{violation_name}_non_increasing", non_increasing(violation_values, cr["slack"]))
    v.check(f"{distance_name}_final_over_first", _ratio(d[-1], d[0]), "<=", cr["final_ratio"])
    v.check(f"{violation_name}_final_over_first", _ratio(violation_values[-1], violation_values[0]), "<=",
            cr["final_ratio"])


def _ratio(last, first):
    if first == 0.0:
        return 0.0 if last == 0.0 else np.inf
    return last / first


def _robin_sweep(cfg, v, out):
    model = heat_model(cfg)
    params = _params(cfg)

    def extra(u, p_lam):
        return {"boundary_gap": model.boundary_gap(u), "complementarity": complementarity_check(u, p_lam)}

    ref = solve_qvi(model.problem, params).u
    table = penalty_sweep(model.problem, model.penalty, _schedule(cfg), params, u_ref=ref, extra=extra,
                          threads=cfg["experiment"]["threads"], warm_start=cfg["schedule"]["warm_start"])
    _write(out, "robin_sweep.csv", table.to_csv(timing=cfg["experiment"]["timing"]))
    _sweep_checks(v, cfg, table, "distance_V", "boundary_gap", table.column("boundary_gap"))
    comp = max([complementarity_check(ref, model.problem)] + list(table.column("complementarity")))
    v.check("complementarity", comp, "<=", cfg["criteria"]["complementarity_factor"] * params.inner_tol)


def _layer_sweep(cfg, v, out):
    mesh = _mesh(cfg)
    model = assemble_contact(mesh, contact_data(cfg, mesh))
    params = _params(cfg)

    def extra(u, p_lam):
        return {"penetration": model.penetration(u), "complementarity": model.complementarity(u, p_lam)}

    ref = solve_qvi(model.problem, params).u
    table = penalty_sweep(model.problem, model.penalty, _schedule(cfg), params, u_ref=ref, extra=extra,
                          threads=cfg["experiment"]["threads"], warm_start=cfg["schedule"]["warm_start"])
    _write(out, "layer_sweep.csv", table.to_csv(timing=cfg["experiment"]["timing"]))
    _write(out, "contact_reference.csv", model.results_csv(ref))
    if table.rows[-1].u is not None:
        _write(out, "contact_last_level.csv", model.results_csv(table.rows[-1].u))
    _sweep_checks(v, cfg, table, "distance_V", "penetration", table.column("penetration"))
    comp = max([model.complementarity(ref)] + list(table.column("complementarity")))
    v.check("complementarity", comp, "<=", cfg["criteria"]["complementarity_factor"] * params.inner_tol)


def _coulomb(cfg, v, out):
    mesh = _mesh(cfg)
    model = assemble_contact(mesh, contact_data(cfg, mesh))
    p = model.problem
    params = _params(cfg)
    log = os.path.join(out, "outer_log.csv") if out is not None else None
    sol = solve_qvi(p, params, log_path=log)
    _write(out, "contact_solution.csv", model.results_csv(sol.u))
    cr = cfg["criteria"]
    v.check("alpha_over_m", p.alpha / p.m, "<=", 1.0 - 1e-12)
    v.check("outer_iterations", sol.outer_iterations, "<=", cr["max_outer"])
    rep = validate_hypotheses(p, samples=100, seed=cfg["experiment"]["seed"])
    bound = rep.alpha_hat / rep.m_hat
    v.check("max_outer_ratio", coulomb_fixed_point_diagnostics(sol), "<=", bound + cr["ratio_slack"])
    v.notes.append(f"certified alpha/m = {p.alpha / p.m:.6g}, sampled {bound:.6g}, c_p = {model.c_p:.6g}, "
                   f"d0 = {p.constants.d0:.6g}")


def _heat_control(cfg):
    model = heat_model(cfg)
    c = cfg["cost"]
    cost = heat_cost(model, c["omega"], c["delta"])
    space = ControlSpace.patches(model.mesh.nodes, c["patches_x"], c["patches_y"])
    search = dict(min_step=c["min_step"])
    return model, cost, space, search


def _control_params(cfg):
    s = cfg["solver"]
    return _params(cfg, inner_tol=min(s["inner_tol"], 1e-11), outer_tol=min(s["outer_tol"], 1e-11))


def _control_uniqueness(cfg, v, out):
    model, cost, space, search = _heat_control(cfg)
    p = model.problem
    params = _control_params(cfg)
    seed = cfg["experiment"]["seed"]
    starts = cfg["cost"]["starts"]
    comp = [0.0]

    def monitor(u, q):
        comp[0] = max(comp[0], complementarity_check(u, q))

    a = optimize_control(p, cost, space, starts, seed, params, monitor=monitor, **search)
    b = optimize_control(p, cost, space, starts, seed + 1, params, monitor=monitor, **search)
    _write(out, "trace_seed_a.csv", a.trace_csv())
    _write(out, "trace_seed_b.csv", b.trace_csv())
    rng = np.random.default_rng(seed)
    scale = 1.0 + np.abs(a.coeffs).max()
    worst = np.inf
    rows = ["segment,defect"]
    for i in range(cfg["cost"]["segments"]):
        x, y = scale * rng.uniform(-2, 2, (2, space.dim))
        d = midpoint_convexity(lambda c: reduced_cost(p, cost, space(c), params), x, y)
        worst = min(worst, d)
        rows.append(f"{i},{float(d)!r}")
    _write(out, "convexity.csv", "\n".join(rows) + "\n")
    cr = cfg["criteria"]
    v.check("f_star_distance_Y", p.norm_y(a.f_star - b.f_star), "<=", cr["uniqueness"])
    v.check("min_midpoint_defect", worst, ">=", -cr["convexity"])
    v.check("complementarity", comp[0], "<=", cr["complementarity_factor"] * params.inner_tol)
    v.notes.append(f"cost {a.cost:.10g}, evaluations {a.evaluations} + {b.evaluations}")


def _pair_sweep(cfg, v, out):
    model, cost, space, search = _heat_control(cfg)
    p = model.problem
    params = _control_params(cfg)
    sched = _schedule(cfg)
    x, y = model.mesh.nodes.T
    pert = cfg["cost"]["target_perturbation"] * x * y
    seq = [cost.perturbed(omega=cost.omega * (1 + lam), delta=cost.delta * (1 + lam), target=lam * pert)
           for lam in sched.lambdas]
    comp = [0.0]

    def monitor(u, q):
        comp[0] = max(comp[0], complementarity_check(u, q))

    sweep = optimal_pair_sweep(p, cost, seq, model.penalty, sched, space, params, cfg["cost"]["starts"],
                               cfg["experiment"]["seed"], threads=cfg["experiment"]["threads"],
                               monitor=monitor, **search)
    _write(out, "pair_sweep.csv", sweep.to_csv(timing=cfg["experiment"]["timing"]))
    _write(out, "reference_trace.csv", sweep.reference.trace_csv())
    cr = cfg["criteria"]
    g, dist = sweep.gaps, sweep.control_distances
    v.check("failed_rows", sum(r.failed for r in sweep.rows), "==", 0)
    v.flag("gap_non_increasing", non_increasing(g, 0.0))
    v.check("gap_final_over_first", _ratio(g[-1], g[0]), "<=", cr["gap_ratio"])
    v.check("control_distance_final_over_first", _ratio(dist[-1], dist[0]), "<=", cr["control_ratio"])
    v.check("complementarity", comp[0], "<=", cr["complementarity_factor"] * params.inner_tol)


def _hypotheses(cfg, v, out):
    seed = cfg["experiment"]["seed"]
    rows = ["instance,m,M,alpha,gamma,c0,m_hat,M_hat,alpha_hat,gamma_hat,c0_hat,smallness,consistent"]

    def record(name, p):
        rep = validate_hypotheses(p, samples=100, seed=seed)
        c = p.constants
        rows.append(",".join([name] + [repr(float(x)) for x in (c.m, c.M, c.alpha, c.gamma, c.c0, rep.m_hat,
                                                                 rep.M_hat, rep.alpha_hat, rep.gamma_hat,
                                                                 rep.c0_hat)]
                             + [str(int(rep.smallness)), str(int(all(rep.consistent.values())))]))
        return rep

    heat_cfg = ExperimentConfig(copy.deepcopy(cfg.values))
    heat_cfg.values["experiment"]["model"] = "heat"
    heat_cfg.values["mesh"].update(nx=16, ny=16, file="")
    rh = record("heat", heat_model(heat_cfg).problem)
    contact_cfg = ExperimentConfig(copy.deepcopy(cfg.values))
    contact_cfg.values["experiment"]["model"] = "contact"
    mesh = _mesh(contact_cfg)
    good = assemble_contact(mesh, contact_data(contact_cfg, mesh))
    rc = record("contact", good.problem)
    # same compliance, friction raised until alpha = inflation * m
    d0sq = good.problem.constants.d0 ** 2
    mu_bad = cfg["contact"]["mu_inflation"] * good.problem.m / (d0sq * good.c_p)
    bad = assemble_contact(mesh, contact_data(contact_cfg, mesh, mu=mu_bad, c_p=good.c_p), enforce_smallness=False)
    rb = record("contact-inflated-mu", bad.problem)
    _write(out, "hypotheses.csv", "\n".join(rows) + "\n")
    v.flag("heat_passes", rh.passed)
    v.flag("contact_passes", rc.passed)
    v.flag("inflated_mu_flagged", not rb.passed and not rb.smallness)
    v.notes.append(f"inflated mu = {mu_bad:.6g}")


def _solve(cfg, v, out):
    p = load_problem(cfg["experiment"]["problem"])
    params = _params(cfg)
    log = os.path.join(out, "outer_log.csv") if out is not None else None
    sol = solve_qvi(p, params, log_path=log)
    _write(out, "solution.csv", "dof,u\n" + "".join(f"{i},{float(x)!r}\n" for i, x in enumerate(sol.u)))
    v.check("final_outer_change", sol.final_residual, "<=", params.outer_tol)
    v.flag("feasible", p.K.contains(sol.u, 1e-12))


EXPERIMENTS = {
    "robin-sweep": _robin_sweep,
    "layer-sweep": _layer_sweep,
    "coulomb": _coulomb,
    "control-uniqueness": _control_uniqueness,
    "pair-sweep": _pair_sweep,
    "hypotheses": _hypotheses,
    "solve": _solve,
}


def run(config: ExperimentConfig, out=None) -> Verdict:
    """Execute the configured experiment, writing CSV files and the verdict to ``out``."""
    out = out if out is not None else config.out
    if out is not None:
        os.makedirs(out, exist_ok=True)
    v = Verdict(config.kind)
    try:
        EXPERIMENTS[config.kind](config, v, out)
    except ConvergenceError as exc:
        v.check("solver_converged", 0.0, "==", 1.0)
        v.notes.append(f"solver failure: {exc}")
    _write(out, "verdict.csv", v.to_csv())
    _write(out, "summary.txt", v.summary())
    return v


def validate(config: ExperimentConfig, out=None) -> Verdict:
    """Check the constants of the configured problem without running the experiment."""
    v = Verdict("validate")
    if config.kind == "solve":
        p = load_problem(config["experiment"]["problem"])
    elif config["experiment"]["model"] == "contact":
        mesh = _mesh(config)
        p = assemble_contact(mesh, contact_data(config, mesh), enforce_smallness=False).problem
    else:
        p = heat_model(config, enforce_smallness=False).problem
    rep = validate_hypotheses(p, samples=100, seed=config["experiment"]["seed"])
    v.check("m_hat_minus_m", rep.m_hat - p.m, ">=", -1e-7 * max(1.0, abs(p.m)))
    v.check("M_minus_M_hat", p.M - rep.M_hat, ">=", -1e-7 * max(1.0, abs(p.M)))
    v.flag("smallness", rep.smallness)
    v.flag("constants_consistent", rep.passed)
    v.notes.append(rep.summary().replace("\n", "; "))
    if out is not None:
        os.makedirs(out, exist_ok=True)
        _write(out, "verdict.csv", v.to_csv())
        _write(out, "summary.txt", v.summary())
    return v


def _build_config(args):
    if args.config and args.preset:
        raise ConfigError("give either a preset name or --config, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset_config(args.preset)
    else:
        raise ConfigError("need a preset name or --config PATH")
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg.values["experiment"]["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg.values["experiment"]["threads"] = args.threads
    cfg.out = args.out
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(prog="qvicontrol", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run an experiment"), ("validate", "check configuration and problem constants")):
        sp_ = sub.add_parser(name, help=helptext)
        sp_.add_argument("preset", nargs="?", help="builtin preset name")
        sp_.add_argument("--config", help="INI configuration file")
        sp_.add_argument("--out", help="output directory")
        sp_.add_argument("--seed", type=int)
        sp_.add_argument("--threads", type=int)
    sub.add_parser("list", help="list builtin presets")
    args = parser.parse_args(argv)

    if args.command == "list":
        for name, (desc, _) in PRESETS.items():
            print(f"{name:22s} {desc}")
        return 0
    try:
        cfg = _build_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    verdict = run(cfg) if args.command == "run" else validate(cfg, cfg.out)
    sys.stdout.write(verdict.summary())
    print(f"elapsed: {time.perf_counter() - t0:.2f} s")
    return 0 if verdict.passed else 1
