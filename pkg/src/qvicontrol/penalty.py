"""Penalized problems ``A + (1/lambda) G`` on an enlarged constraint set.

The penalty operator is a nodal :class:`~qvicontrol.core.TraceLaw` (lumped
boundary integral), e.g. ``int_Gamma q(u_nu - k) v_nu da`` for a deformable
layer or ``int_Gamma (u - b) v da`` for a Robin-type relaxation of a
Dirichlet condition.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import ConstraintSet, GalerkinProblem, TraceLaw
from .linalg import ConvergenceError, extreme_eigenvalues
from .solvers import SolverParams, solve_qvi

__all__ = [
    "ConvergenceTable",
    "PenaltySchedule",
    "PenaltySpec",
    "TableRow",
    "non_increasing",
    "penalty_sweep",
    "solve_penalized",
    "violation",
]


@dataclass(frozen=True, eq=False)
class PenaltySpec:
    """Enlarged set ``K_tilde`` and penalty law ``G``."""

    K_tilde: ConstraintSet
    G: TraceLaw

    def __post_init__(self):
        if self.G.n != self.K_tilde.n:
            raise ValueError("penalty law and enlarged set have different dimensions")

    def gap(self, u):
        """Constraint gap whose vanishing characterizes ``K`` inside ``K_tilde``."""
        r = self.G.argument(u)
        return np.maximum(r, 0.0) if self.G.truncated else r

    def penalized(self, p: GalerkinProblem, lam, f=None) -> GalerkinProblem:
        """Problem on ``K_tilde`` with operator ``A + G / lam``.

        Adding a monotone operator keeps the strong monotonicity constant, so
        ``m`` is inherited; ``M`` is recomputed.
        """
        if not lam > 0:
            raise ValueError("penalty parameter must be positive")
        A = p.A.with_law(self.G.scaled(1.0 / lam))
        _, M = extreme_eigenvalues(A.hessian(None), p.gram_x.gram)
        consts = dataclasses.replace(p.constants, M=M)
        return GalerkinProblem(p.gram_x, p.gram_y, A, self.K_tilde, p.j, p.pi,
                               p.f if f is None else f, constants=consts,
                               enforce_smallness=p.enforce_smallness)

    def check(self, K: ConstraintSet, samples=50, seed=0, tol=1e-12):
        """Sampled checks of ``K subset K_tilde``, the sign condition and ``G = 0`` on ``K``.

        Returns a dict of booleans.
        """
        rng = np.random.default_rng(seed)
        scale = 1.0 + float(np.max(np.abs(self.G.offsets), initial=0.0))
        n = K.n
        inside = sign = vanish = True
        for _ in range(samples):
            v = K.project(scale * rng.standard_normal(n))
            u = self.K_tilde.project(scale * rng.standard_normal(n))
            inside &= self.K_tilde.contains(v, tol)
            gu = self.G.dual(u)
            sign &= float(gu @ (v - u)) <= tol * (1.0 + np.abs(gu).sum())
            vanish &= float(np.max(np.abs(self.G.dual(v)), initial=0.0)) <= tol * scale
        return {"K_subset_K_tilde": bool(inside), "sign": bool(sign), "vanishes_on_K": bool(vanish)}


def violation(pen: PenaltySpec, u):
    """Weighted L2 norm of the constraint gap on the penalty nodes."""
    g = pen.gap(u)
    return float(np.sqrt(pen.G.weights @ (g * g)))


@dataclass(frozen=True)
class PenaltySchedule:
    """``lambda_n = lambda0 * ratio**n`` for ``n = 0, ..., count - 1``."""

    lambda0: float = 1.0
    ratio: float = 0.25
    count: int = 8

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    @property
    def lambdas(self):
        return self.lambda0 * self.ratio ** np.arange(self.count)


@dataclass
class TableRow:
    lam: float
    distance: float
    violation: float
    inner_iters: int
    outer_iters: int
    seconds: float
    failed: bool = False
    extra: dict = field(default_factory=dict)
    u: np.ndarray = field(default=None, repr=False)


@dataclass
class ConvergenceTable:
    """Rows of a penalty sweep, ordered by decreasing ``lambda``."""

    rows: list
    u_ref: np.ndarray = field(default=None, repr=False)
    columns = ("lambda", "distance_X", "violation", "inner_iters", "outer_iters", "seconds")

    def column(self, name):
        if name == "lambda":
            return np.array([r.lam for r in self.rows])
        if name == "distance_X":
            return np.array([r.distance for r in self.rows])
        if name in ("violation", "inner_iters", "outer_iters", "seconds"):
            return np.array([getattr(r, name) for r in self.rows])
        return np.array([r.extra.get(name, np.nan) for r in self.rows])

    @property
    def distances(self):
        return self.column("distance_X")

    @property
    def violations(self):
        return self.column("violation")

    def extra_columns(self):
        names = []
        for r in self.rows:
            for k in r.extra:
                if k not in names:
                    names.append(k)
        return names

    def to_csv(self, path=None, timing=True):
        """Write the table; returns the CSV text.

        With ``timing=False`` the ``seconds`` column is written as ``nan`` so
        that reruns are byte-identical.
        """
        extra = self.extra_columns()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.columns) + extra + ["failed"])
        for r in self.rows:
            w.writerow([repr(float(r.lam)), repr(float(r.distance)), repr(float(r.violation)),
                        r.inner_iters, r.outer_iters, repr(float(r.seconds)) if timing else "nan"]
                       + [repr(float(r.extra.get(k, np.nan))) for k in extra] + [int(r.failed)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def non_increasing(values, slack=0.05, floor=0.0):
    """True if ``values[i+1] <= (1 + slack) * values[i] + floor`` for every step."""
    v = np.asarray(values, dtype=float)
    return bool(np.all(v[1:] <= (1.0 + slack) * v[:-1] + floor))


def solve_penalized(p: GalerkinProblem, pen: PenaltySpec, lam, params: SolverParams = None, f=None, eta0=None):
    """Solution of the penalized problem on ``K_tilde`` for one ``lambda``."""
    return solve_qvi(pen.penalized(p, lam, f), params, eta0=eta0)


def penalty_sweep(p: GalerkinProblem, pen: PenaltySpec, sched: PenaltySchedule, params: SolverParams = None,
                  f_seq=None, u_ref=None, extra=None, threads=1, warm_start=False):
    """Solve the penalized problems along ``sched`` and tabulate the convergence.

    Parameters
    ----------
    f_seq : sequence of arrays, optional
        Loads ``f_n`` (one per level); defaults to ``p.f`` throughout.
    u_ref : array, optional
        Reference solution on ``K``; computed with :func:`solve_qvi` if absent.
    extra : callable, optional
        ``extra(u, penalized_problem) -> dict`` of additional per-row columns.
    threads : int
        Rows are independent solves and may run in a thread pool
        (ignored with ``warm_start``).
    warm_start : bool
        Start each level from the previous level's solution.
    """
    params = params or SolverParams()
    lams = sched.lambdas
    if f_seq is not None:
        f_seq = list(f_seq)
        if len(f_seq) != sched.count:
            raise ValueError(f"f_seq has {len(f_seq)} entries, schedule has {sched.count}")
    if u_ref is None:
        u_ref = solve_qvi(p, params).u

    def run(i, eta0=None):
        lam = float(lams[i])
        t0 = time.perf_counter()
        try:
            p_lam = pen.penalized(p, lam, None if f_seq is None else f_seq[i])
            sol = solve_qvi(p_lam, params, eta0=eta0)
        except ConvergenceError:
            return TableRow(lam, np.nan, np.nan, 0, 0, time.perf_counter() - t0, failed=True)
        dt = time.perf_counter() - t0
        u = sol.u
        cols = {"sign": float((u_ref - u) @ pen.G.dual(u))}
        if extra is not None:
            cols.update(extra(u, p_lam))
        return TableRow(lam, p.norm_x(u - u_ref), violation(pen, u), sol.inner_iterations,
                        sol.outer_iterations, dt, extra=cols, u=u)

    if warm_start:
        rows, prev = [], None
        for i in range(sched.count):
            row = run(i, prev)
            prev = row.u
            rows.append(row)
    elif threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(run, range(sched.count)))
    else:
        rows = [run(i) for i in range(sched.count)]
    return ConvergenceTable(rows, u_ref)
