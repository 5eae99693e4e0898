"""Projected fixed-point solvers for the discrete (quasi)variational inequality.

Inner problem (``j(eta, .)`` frozen): the map

    T_rho(u) = P_K prox_{rho j(eta,.)} (u - rho D^{-1} r(u)),

with ``r`` the dual residual and ``D`` a positive diagonal metric, is a
contraction in the ``D``-norm with factor ``sqrt(1 - 2 rho m_D + rho^2 M_D^2)``
and its fixed points are exactly the solutions of the frozen inequality (the
constraints and the friction term are separable per dof, so the Euclidean
projection and the componentwise prox are the correct resolvents in any
diagonal metric).

To reach tight tolerances on finite element problems the contraction steps
are interleaved with a face minimization: the active pattern read off
``T_1(u)`` fixes bound, stick and law-activity sets, the remaining quadratic
is minimized by conjugate gradients, and the result is accepted only if it
lowers the convex energy of the frozen problem (gradient projection with
conjugate-gradient face steps, after More and Toraldo).

Outer problem: Banach iteration ``eta_{k+1} = u(eta_k)``, contracting at rate
``alpha / m`` under the smallness condition.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core import GalerkinProblem
from .linalg import ConvergenceError, as_vec, cg_solve

__all__ = [
    "Solution",
    "SolverParams",
    "iteration_metric",
    "solve_qvi",
    "solve_vi_frozen",
    "uniqueness_check",
]


@dataclass(frozen=True)
class SolverParams:
    """Iteration controls.

    ``rho=None`` selects ``m_D / M_D**2``, which minimizes the contraction
    factor.  ``metric`` is ``"jacobi"`` (diagonal of the worst-case Hessian)
    or ``"gram"`` (requires a diagonal X-Gram matrix; the certified X
    constants are then the metric constants).  ``dual_tol``, when set, adds a
    second stopping test on the unscaled natural residual
    ``max |u - P_K prox(u - r(u))| / max(1, max |u|)``, which bounds the dual
    residual itself on free dofs; with a stiff penalty the metric-scaled test
    alone leaves it larger by the metric diagonal.
    """

    rho: float = None
    inner_tol: float = 1e-10
    outer_tol: float = 1e-10
    max_inner: int = 20000
    max_outer: int = 50
    metric: str = "jacobi"
    accelerate: bool = True
    plain_steps: int = 2
    face_tol: float = 1e-13
    search_steps: int = 5
    dual_tol: float = None

    def __post_init__(self):
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if not (self.inner_tol > 0 and self.outer_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.metric not in ("jacobi", "gram"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.plain_steps < 1:
            raise ValueError("plain_steps must be >= 1")
        if self.dual_tol is not None and not self.dual_tol > 0:
            raise ValueError("dual_tol must be positive")
        if self.search_steps < 0:
            raise ValueError("search_steps must be >= 0")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class Metric:
    diag: np.ndarray
    m: float
    M: float

    def rho(self, params):
        rho = self.m / self.M ** 2 if params.rho is None else params.rho
        if not 0 < rho < 2 * self.m / self.M ** 2:
            raise ValueError(f"rho = {rho:.3e} outside (0, 2m/M^2) = (0, {2 * self.m / self.M ** 2:.3e})")
        return rho

    def kappa(self, rho):
        return float(np.sqrt(max(1.0 - 2.0 * rho * self.m + (rho * self.M) ** 2, 0.0)))

    def norm(self, v):
        return float(np.sqrt(v @ (self.diag * v)))


def iteration_metric(p: GalerkinProblem, kind="jacobi") -> Metric:
    """Diagonal metric of the inner iteration and its monotonicity constants."""
    cache = p.__dict__.setdefault("_metric_cache", {})
    if kind in cache:
        return cache[kind]
    if kind == "gram":
        if not p.gram_x.is_diagonal:
            raise ValueError("metric 'gram' needs a diagonal X-Gram matrix")
        met = Metric(np.asarray(p.gram_x.gram.diagonal(), dtype=float), p.m, p.M)
    else:
        d = p.A.curvature_diag(None)
        s = sp.diags(1.0 / np.sqrt(d))
        lo = (s @ p.A.linear @ s).toarray()
        hi = (s @ p.A.hessian(None) @ s).toarray()
        m = float(np.linalg.eigvalsh(lo)[0])
        M = float(np.linalg.eigvalsh(hi)[-1])
        met = Metric(d, m, M)
    cache[kind] = met
    return met


@dataclass
class InnerInfo:
    iterations: int
    residual: float
    converged: bool
    history: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    face_steps: int = 0
    rho: float = float("nan")
    kappa: float = float("nan")


@dataclass
class Solution:
    """Result of :func:`solve_qvi`.

    ``contraction_estimates`` are the observed outer ratios
    ``|eta_{k+1} - eta_k| / |eta_k - eta_{k-1}|`` in the X-norm;
    ``inner_ratios`` collects consecutive contraction-step ratios of all inner
    solves in the metric norm, to be compared with ``inner_kappa``.
    """

    u: np.ndarray
    inner_iterations: int
    outer_iterations: int
    final_residual: float
    contraction_estimates: list = field(default_factory=list)
    inner_ratios: list = field(default_factory=list)
    inner_kappa: float = float("nan")
    outer_history: list = field(default_factory=list)


class _Frozen:
    """The inner problem with ``j(eta, .)`` frozen."""

    def __init__(self, p, eta, metric, rho):
        self.p = p
        self.K = p.K
        self.D = metric.diag
        self.metric = metric
        self.rho = rho
        self.j = p.j
        if p.j.normal is not None and p.j.mu > 0:
            self.tdofs = p.j.tangent_dofs
            self.thr = p.j.thresholds(eta)
        else:
            self.tdofs = np.zeros(0, dtype=int)
            self.thr = np.zeros(0)

    def step(self, u, rho):
        y = u - rho * self.p.residual(u) / self.D
        if self.tdofs.size:
            y[self.tdofs] = self.j.prox(y[self.tdofs], rho * self.thr / self.D[self.tdofs])
        return self.K.project(y)

    def energy(self, u):
        e = self.p.A.energy(u) - float(self.p.load_dual @ u)
        if self.tdofs.size:
            e += float(self.thr @ self.j.phi(u[self.tdofs]))
        return e

    def residual(self, u):
        return self.metric.norm(u - self.step(u, 1.0)) / max(1.0, self.metric.norm(u))

    def dual_residual(self, u):
        y = u - self.p.residual(u)
        if self.tdofs.size:
            y[self.tdofs] = self.j.prox(y[self.tdofs], self.thr)
        d = np.abs(u - self.K.project(y))
        return float(np.max(d, initial=0.0)) / max(1.0, float(np.max(np.abs(u), initial=0.0)))

    def done(self, u, res, params):
        return res <= params.inner_tol and (params.dual_tol is None or self.dual_residual(u) <= params.dual_tol)

    def projected_search(self, u, energy, halvings=40):
        """Step ``T_t(u)`` with the largest ``t = 2^-i`` giving sufficient energy decrease."""
        t = 1.0
        for _ in range(halvings):
            v = self.step(u, t)
            d = self.metric.norm(v - u)
            if d == 0.0:
                return None
            ev = self.energy(v)
            if ev <= energy - 1e-4 * d * d / t:
                return v, ev
            t *= 0.5
        return None

    def pattern(self, u):
        return (u <= self.K.lower) | (u >= self.K.upper)

    def _face_solve(self, z, x0, tol, stick=None):
        """Minimize the quadratic model on the face read off ``z``.

        ``stick`` forces extra tangential dofs (by position) to stick.
        """
        K = self.K
        fixed = K.pinned | (z <= K.lower) | (z >= K.upper)
        x = z.copy()
        rhs = self.p.load_dual - self.p.A.constant
        for law in self.p.A.laws:
            act = law.active(law.argument(z))
            rhs[law.dofs] += act * law.weights * law.slope * law.signs * law.offsets
        if self.tdofs.size:
            t = self.tdofs
            zt = z[t]
            stick = ((zt == 0.0) | (False if stick is None else stick)) & (self.thr > 0)
            fixed[t[stick]] = True
            x[t[stick]] = 0.0
            rhs[t] -= np.where(stick, 0.0, self.thr * np.sign(zt))
        free = ~fixed
        if not np.any(free):
            return x
        H = self.p.A.hessian(z)
        Hf = H[free][:, free]
        b = rhs[free] - H[free][:, fixed] @ x[fixed]
        try:
            x[free] = cg_solve(Hf, b, tol=tol, max_iter=20 * Hf.shape[0] + 100, x0=x0[free])
        except ConvergenceError as err:
            # round-off floor reached: the last CG iterate is still a useful candidate
            if err.iterate is None or not np.all(np.isfinite(err.iterate)):
                raise
            x[free] = err.iterate
        return x

    def _signature(self, z):
        parts = [z <= self.K.lower, z >= self.K.upper]
        parts += [law.active(law.argument(z)) for law in self.p.A.laws]
        if self.tdofs.size:
            parts += [np.sign(z[self.tdofs])]
        return np.concatenate([np.asarray(q, dtype=float) for q in parts])

    def face_point(self, u, tol, rounds=6):
        """Face minimizer, with the pattern re-read at the new point until it settles.

        A tangential dof whose slip direction flips between rounds is held at
        stick, which breaks the only cycle this refinement can fall into.
        """
        z = self.step(u, 1.0)
        sig = self._signature(z)
        stick = np.zeros(self.tdofs.size, dtype=bool)
        x = self._face_solve(z, u, tol)
        for _ in range(rounds - 1):
            z_new = self.step(x, 1.0)
            new = self._signature(z_new)
            if np.array_equal(new, sig):
                break
            if self.tdofs.size:
                stick |= z_new[self.tdofs] * z[self.tdofs] < 0
            sig, z = new, z_new
            x = self._face_solve(z, x, tol, stick)
        return x


def _solve_frozen(p, eta, params, u0=None, log_path=None):
    metric = iteration_metric(p, params.metric)
    rho = metric.rho(params)
    prob = _Frozen(p, eta, metric, rho)
    u = p.K.project(np.zeros(p.n) if u0 is None else as_vec(u0, p.n, "initial guess"))
    info = InnerInfo(0, np.inf, False, rho=rho, kappa=metric.kappa(rho))
    prev_step = None
    block = params.plain_steps + 1
    for it in range(params.max_inner + 1):
        res = prob.residual(u)
        info.history.append(res)
        if prob.done(u, res, params):
            info.converged = True
            break
        if it == params.max_inner:
            break
        info.iterations += 1
        if params.accelerate and it % block == params.plain_steps:
            prev_step = None
            # projected search settles the active pattern, then CG on the face
            e_u = prob.energy(u)
            pat = prob.pattern(u)
            for _ in range(params.search_steps):
                found = prob.projected_search(u, e_u)
                if found is None:
                    break
                u, e_u = found
                new_pat = prob.pattern(u)
                if np.array_equal(new_pat, pat):
                    break
                pat = new_pat
            res = prob.residual(u)
            if prob.done(u, res, params):
                continue
            try:
                x = prob.face_point(u, max(1e-16, min(params.face_tol, 1e-3 * res)))
            except ConvergenceError:
                continue
            cand = p.K.project(x)
            # near the solution energy differences drown in round-off, so a
            # smaller natural residual is accepted as well
            if prob.residual(cand) < res:
                u = cand
                info.face_steps += 1
                continue
            e0 = prob.energy(u)
            t = 1.0
            for _ in range(12):
                cand = p.K.project(u + t * (x - u))
                if prob.energy(cand) < e0:
                    u = cand
                    info.face_steps += 1
                    break
                t *= 0.5
            continue
        v = prob.step(u, rho)
        step = metric.norm(v - u)
        floor = 1e-12 * max(1.0, metric.norm(u))
        if prev_step is not None and prev_step > floor and step > floor:
            info.ratios.append(step / prev_step)
        prev_step = step
        u = v
    info.residual = info.history[-1]
    if log_path is not None:
        _write_log(log_path, info.history, [np.nan] + _pad_ratios(info))
    if not info.converged:
        raise ConvergenceError(
            f"inner iteration did not converge in {params.max_inner} steps "
            f"(residual {info.residual:.3e}, tolerance {params.inner_tol:.1e})",
            iterate=u, residual=info.residual, history=info.history)
    return u, info


def _pad_ratios(info):
    out = list(info.ratios)
    return out + [np.nan] * (len(info.history) - 1 - len(out))


def _write_log(path, residuals, ratios):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "residual", "ratio"])
        for k, (r, q) in enumerate(zip(residuals, ratios)):
            w.writerow([k, repr(float(r)), "" if not np.isfinite(q) else repr(float(q))])


def solve_vi_frozen(p: GalerkinProblem, eta, params: SolverParams = None, u0=None, log_path=None):
    """Solve the inequality with the friction functional frozen at ``eta``.

    Returns ``u`` with ``u = T_rho(u)`` up to ``params.inner_tol`` (measured as
    the metric norm of ``u - T_1(u)``, relative to ``max(1, |u|)``).

    Raises
    ------
    ConvergenceError
        After ``params.max_inner`` iterations; carries the last iterate and
        the residual history.
    """
    params = params or SolverParams()
    eta = as_vec(eta, p.n, "eta")
    u, _ = _solve_frozen(p, eta, params, u0=u0, log_path=log_path)
    return u


def solve_qvi(p: GalerkinProblem, params: SolverParams = None, eta0=None, log_path=None) -> Solution:
    """Banach iteration on the friction coupling, started at ``P_K(eta0)``.

    Stops when ``|eta_{k+1} - eta_k|_X <= params.outer_tol``.  A functional
    that does not depend on ``eta`` stops after the second sweep.
    """
    params = params or SolverParams()
    eta = p.K.project(np.zeros(p.n) if eta0 is None else as_vec(eta0, p.n, "eta0"))
    total_inner = 0
    diffs, ratios, inner_ratios = [], [], []
    kappa = np.nan
    warm = eta
    for k in range(1, params.max_outer + 1):
        u, info = _solve_frozen(p, eta, params, u0=warm)
        total_inner += info.iterations
        inner_ratios.extend(info.ratios)
        kappa = info.kappa
        d = p.norm_x(u - eta)
        if diffs and diffs[-1] > 1e-14:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        if d <= params.outer_tol:
            sol = Solution(u, total_inner, k, d, ratios, inner_ratios, kappa, diffs)
            if log_path is not None:
                _write_log(log_path, diffs, [np.nan] + ratios)
            return sol
        eta = u
        warm = u
    if log_path is not None:
        _write_log(log_path, diffs, [np.nan] + ratios)
    raise ConvergenceError(
        f"outer iteration did not converge in {params.max_outer} steps (last change {diffs[-1]:.3e})",
        iterate=eta, residual=diffs[-1], history=diffs)


def uniqueness_check(p: GalerkinProblem, params: SolverParams = None, starts=()):
    """Largest pairwise X-distance between solutions computed from ``starts``."""
    starts = list(starts)
    if len(starts) < 2:
        raise ValueError("need at least two starting points")
    sols = [solve_qvi(p, params, eta0=s).u for s in starts]
    best = 0.0
    for i in range(len(sols)):
        for k in range(i + 1, len(sols)):
            best = max(best, p.norm_x(sols[i] - sols[k]))
    return best
