"""Optimal control of the load: minimize ``L(u, f) = g(u) + h(f)`` over admissible pairs.

The reduced cost ``f -> g(S(f)) + h(f)`` is minimized over a finite control
basis with a derivative-free pattern search (Hooke-Jeeves: coordinate
exploration plus pattern moves, with shrinking steps).  The solution map ``S``
is only Lipschitz, so no gradients are used.
"""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core import GalerkinProblem
from .linalg import ConvergenceError, as_vec
from .penalty import PenaltySchedule, PenaltySpec
from .solvers import SolverParams, solve_qvi

__all__ = [
    "ControlSpace",
    "OptimalPair",
    "PairRow",
    "PairSweep",
    "SeparableCost",
    "midpoint_convexity",
    "optimal_pair_sweep",
    "optimize_control",
    "reduced_cost",
    "solve_state",
]


@dataclass(frozen=True, eq=False)
class SeparableCost:
    """``g(u) + h(f)`` with ``g(u) = omega (O u - phi)^T W (O u - phi)`` and ``h(f) = delta f^T H f``.

    Parameters
    ----------
    observe : sparse matrix
        Observation ``O`` from state dofs to the tracking space.
    tracking_gram : sparse matrix
        Positive semidefinite ``W`` (a mass matrix or lumped boundary weights).
    target : array
        Desired observation ``phi``.
    omega, delta : float
        Nonnegative tracking weight, positive control weight.
    control_gram : sparse matrix
        Positive definite ``H`` on ``Y``; ``delta > 0`` makes ``h`` coercive.
    """

    observe: sp.csr_matrix
    tracking_gram: sp.csr_matrix
    target: np.ndarray
    omega: float
    delta: float
    control_gram: sp.csr_matrix

    def __post_init__(self):
        O = sp.csr_matrix(self.observe)
        W = sp.csr_matrix(self.tracking_gram)
        H = sp.csr_matrix(self.control_gram)
        if W.shape != (O.shape[0], O.shape[0]):
            raise ValueError("tracking Gram does not match the observation space")
        if H.shape[0] != H.shape[1]:
            raise ValueError("control Gram must be square")
        if self.omega < 0 or not self.delta > 0:
            raise ValueError("need omega >= 0 and delta > 0")
        phi = as_vec(self.target, O.shape[0], "target")
        for name, val in (("observe", O), ("tracking_gram", W), ("control_gram", H), ("target", phi)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "delta", float(self.delta))

    def tracking(self, u):
        d = self.observe @ np.asarray(u, dtype=float) - self.target
        return self.omega * float(d @ (self.tracking_gram @ d))

    def control(self, f):
        f = np.asarray(f, dtype=float)
        return self.delta * float(f @ (self.control_gram @ f))

    def __call__(self, u, f):
        return self.tracking(u) + self.control(f)

    def perturbed(self, omega=None, delta=None, target=None):
        """Same structure with new weights or target (the costs ``L_n``)."""
        return dataclasses.replace(
            self, omega=self.omega if omega is None else omega,
            delta=self.delta if delta is None else delta,
            target=self.target if target is None else target)


@dataclass(frozen=True, eq=False)
class ControlSpace:
    """Affine control family ``f(c) = offset + B c`` with optional coefficient box."""

    basis: np.ndarray
    offset: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if B.shape[1] == 0:
            raise ValueError("empty control basis")
        if np.linalg.matrix_rank(B) < B.shape[1]:
            raise ValueError("control basis is linearly dependent")
        k = B.shape[1]
        off = np.zeros(B.shape[0]) if self.offset is None else as_vec(self.offset, B.shape[0], "offset")
        lo = np.full(k, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (k,)).copy()
        hi = np.full(k, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (k,)).copy()
        if np.any(lo > hi):
            raise ValueError("empty coefficient box")
        for name, val in (("basis", B), ("offset", off), ("lower", lo), ("upper", hi)):
            object.__setattr__(self, name, val)

    @property
    def dim(self):
        return self.basis.shape[1]

    def __call__(self, coeffs):
        return self.offset + self.basis @ np.asarray(coeffs, dtype=float)

    def clip(self, coeffs):
        return np.clip(coeffs, self.lower, self.upper)

    @classmethod
    def patches(cls, coords, nx=2, ny=2, components=1, offset=None):
        """Piecewise-constant nodal indicators of an ``nx x ny`` partition of the bounding box.

        With ``components > 1`` each patch contributes one basis vector per
        component of an interleaved vector field.
        """
        coords = np.asarray(coords, dtype=float)
        lo, hi = coords.min(axis=0), coords.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        ix = np.minimum((nx * (coords[:, 0] - lo[0]) / span[0]).astype(int), nx - 1)
        iy = np.minimum((ny * (coords[:, 1] - lo[1]) / span[1]).astype(int), ny - 1)
        cols = []
        for j in range(ny):
            for i in range(nx):
                ind = ((ix == i) & (iy == j)).astype(float)
                for c in range(components):
                    v = np.zeros(components * len(coords))
                    v[c::components] = ind
                    cols.append(v)
        return cls(np.column_stack(cols), offset)


@dataclass
class OptimalPair:
    """Best admissible pair found, with the optimizer trace.

    ``trace`` holds ``(evaluation, start, cost, best_so_far)`` tuples.
    """

    u_star: np.ndarray
    f_star: np.ndarray
    coeffs: np.ndarray
    cost: float
    evaluations: int = 0
    start_costs: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def trace_csv(self, path=None):
        rows = [["evaluation", "start", "cost", "best"]]
        rows += [[e, s, repr(float(c)), repr(float(b))] for e, s, c, b in self.trace]
        text = "\n".join(",".join(map(str, r)) for r in rows) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def solve_state(p: GalerkinProblem, f, params: SolverParams = None, eta0=None):
    """``S(f)``: solution of the state inequality with load ``f``."""
    return solve_qvi(p.with_load(f), params, eta0=eta0).u


def reduced_cost(p: GalerkinProblem, cost: SeparableCost, f, params: SolverParams = None):
    """``g(S(f)) + h(f)``."""
    return cost(solve_state(p, f, params), f)


class _Evaluator:
    """Memoized reduced cost in coefficient space, warm-started from the last state."""

    def __init__(self, p, cost, space, params, monitor=None):
        self.p, self.cost, self.space, self.params = p, cost, space, params
        self.monitor = monitor
        self.memo = {}
        self.last_u = None
        self.count = 0

    def __call__(self, c):
        key = tuple(np.round(c, 15).tolist())
        hit = self.memo.get(key)
        if hit is not None:
            return hit[0]
        f = self.space(c)
        q = self.p.with_load(f)
        u = solve_qvi(q, self.params, eta0=self.last_u).u
        if self.monitor is not None:
            self.monitor(u, q)
        val = self.cost(u, f)
        self.last_u = u
        self.count += 1
        self.memo[key] = (val, u)
        return val

    def state(self, c):
        self(c)
        return self.memo[tuple(np.round(c, 15).tolist())][1]


def _better(a, ca, b, cb, tol):
    """Strictly better cost, lexicographically smaller coefficients on ties."""
    if a < b - tol:
        return True
    if a > b + tol:
        return False
    return tuple(ca) < tuple(cb)


def _hooke_jeeves(fun, x0, step, min_step, clip, shrink=0.5, max_evals=5000, on_eval=None):
    def f(x):
        v = fun(x)
        if on_eval is not None:
            on_eval(v)
        return v

    def explore(base, fb, h):
        x, fx = base.copy(), fb
        for i in range(len(x)):
            for s in (h, -h):
                y = x.copy()
                y[i] += s
                y = clip(y)
                if np.array_equal(y, x):
                    continue
                fy = f(y)
                if fy < fx:
                    x, fx = y, fy
                    break
        return x, fx

    x = clip(np.asarray(x0, dtype=float))
    fx = f(x)
    h = step
    evals = 1
    while h >= min_step and evals < max_evals:
        y, fy = explore(x, fx, h)
        evals += 2 * len(x)
        if fy < fx:
            # pattern moves while they keep improving
            while evals < max_evals:
                z = clip(y + (y - x))
                x, fx = y, fy
                fz = f(z)
                evals += 1
                z2, fz2 = explore(z, fz, h)
                evals += 2 * len(x)
                if fz2 < fx:
                    y, fy = z2, fz2
                else:
                    break
        else:
            h *= shrink
    return x, fx


def optimize_control(p: GalerkinProblem, cost: SeparableCost, space: ControlSpace, starts=2, seed=0,
                     params: SolverParams = None, step=1.0, min_step=1e-7, start_scale=1.0, max_evals=5000,
                     monitor=None):
    """Multi-start pattern search over the control coefficients.

    The first start is the zero coefficient vector (clipped to the box); the
    others are drawn from ``default_rng(seed)``.  The result is deterministic
    for a given seed; equal costs are resolved lexicographically.
    ``monitor(u, problem)`` is called after every state solve.

    Returns
    -------
    OptimalPair
    """
    if starts < 1:
        raise ValueError("need at least one start")
    params = params or SolverParams(inner_tol=1e-12, outer_tol=1e-12)
    rng = np.random.default_rng(seed)
    x0s = [np.zeros(space.dim)] + [start_scale * rng.standard_normal(space.dim) for _ in range(starts - 1)]
    ev = _Evaluator(p, cost, space, params, monitor)
    trace = []
    best = [np.inf]

    best_x, best_f, start_costs = None, np.inf, []
    for s, x0 in enumerate(x0s):
        def on_eval(v, s=s):
            best[0] = min(best[0], v)
            trace.append((len(trace), s, v, best[0]))

        x, fx = _hooke_jeeves(ev, x0, step, min_step, space.clip, max_evals=max_evals, on_eval=on_eval)
        start_costs.append(fx)
        if best_x is None or _better(fx, x, best_f, best_x, 1e-14 * max(1.0, abs(best_f))):
            best_x, best_f = x, fx
    f_star = space(best_x)
    return OptimalPair(ev.state(best_x), f_star, best_x, best_f, ev.count, start_costs, trace)


def midpoint_convexity(fun, a, b):
    """``(F(a) + F(b)) / 2 - F((a + b) / 2)``; nonnegative for convex ``F``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return 0.5 * (fun(a) + fun(b)) - fun(0.5 * (a + b))


@dataclass
class PairRow:
    lam: float
    pair: OptimalPair
    cost: SeparableCost
    gap: float
    control_distance: float
    seconds: float
    failed: bool = False


@dataclass
class PairSweep:
    """Reference optimum of the unpenalized problem and one row per penalty level."""

    reference: OptimalPair
    rows: list

    @property
    def gaps(self):
        return np.array([r.gap for r in self.rows])

    @property
    def control_distances(self):
        return np.array([r.control_distance for r in self.rows])

    def to_csv(self, path=None, timing=True):
        lines = ["lambda,gap,control_distance,cost,evaluations,seconds,failed"]
        for r in self.rows:
            lines.append(",".join([
                repr(float(r.lam)), repr(float(r.gap)), repr(float(r.control_distance)),
                repr(float(r.pair.cost)) if r.pair is not None else "nan",
                str(r.pair.evaluations if r.pair is not None else 0),
                repr(float(r.seconds)) if timing else "nan", str(int(r.failed))]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def optimal_pair_sweep(p: GalerkinProblem, cost: SeparableCost, cost_seq, pen: PenaltySpec,
                       sched: PenaltySchedule, space: ControlSpace, params: SolverParams = None,
                       starts=2, seed=0, reference: OptimalPair = None, threads=1, **search):
    """Optimal pairs of the penalized control problems against the unpenalized optimum.

    ``cost`` is ``L`` and ``cost_seq[n]`` is ``L_n``.  Each row records
    ``gap = |L_n(u_n*, f_n*) - L(u*, f*)|`` and ``|f_n* - f*|_Y``.  A level
    whose state solves fail is marked ``failed`` with NaN entries.  Levels are
    independent and may run in a thread pool; the rows keep schedule order.
    """
    cost_seq = list(cost_seq)
    if len(cost_seq) != sched.count:
        raise ValueError(f"cost_seq has {len(cost_seq)} entries, schedule has {sched.count}")
    if reference is None:
        reference = optimize_control(p, cost, space, starts, seed, params, **search)

    def level(args):
        lam, cn = args
        t0 = time.perf_counter()
        try:
            pair = optimize_control(pen.penalized(p, lam), cn, space, starts, seed, params, **search)
        except ConvergenceError:
            return PairRow(float(lam), None, cn, np.nan, np.nan, time.perf_counter() - t0, True)
        return PairRow(float(lam), pair, cn, abs(pair.cost - reference.cost),
                       p.norm_y(pair.f_star - reference.f_star), time.perf_counter() - t0)

    jobs = list(zip(sched.lambdas, cost_seq))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(level, jobs))
    else:
        rows = [level(job) for job in jobs]
    return PairSweep(reference, rows)
