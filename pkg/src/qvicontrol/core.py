"""Discrete quasivariational inequalities.

A :class:`GalerkinProblem` is the finite-dimensional form of

    u in K,  (Au, v - u)_X + j(u, v) - j(u, u) >= (f, pi v - pi u)_Y   for all v in K.

Everything is stored in coefficient form.  Operators are represented by the
*dual* vector ``a(u, .)`` (``L u`` for the bilinear part); the Riesz
representative in ``X`` is recovered with :meth:`GramInner.riesz` when needed.
Boundary nonlinearities, penalty terms and the friction functional all live on
nodal degrees of freedom with lumped (trapezoidal) weights, which keeps them
separable dof by dof.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .linalg import GramInner, as_vec, extreme_eigenvalues, spmv

__all__ = [
    "ConstraintSet",
    "Constants",
    "FrictionFunctional",
    "GalerkinProblem",
    "HypothesisError",
    "HypothesisReport",
    "OperatorSpec",
    "TraceLaw",
    "TraceMap",
    "apply_A",
    "eval_j",
    "project",
    "validate_hypotheses",
    "vi_residual",
]


class HypothesisError(ValueError):
    """Problem data violate a structural hypothesis (smallness, feasibility, ...)."""


class ConstraintSet:
    """Box constraints plus equality pins on individual dofs.

    Parameters
    ----------
    n : int
        Number of dofs.
    lower, upper : array_like, optional
        Per-dof bounds; ``-inf`` / ``+inf`` mean unconstrained.
    pins : mapping or sequence of (dof, value), optional
        Equality constraints ``v[dof] = value``.
    """

    def __init__(self, n, lower=None, upper=None, pins=()):
        self.n = int(n)
        self.lower = np.full(self.n, -np.inf) if lower is None else np.array(lower, dtype=float)
        self.upper = np.full(self.n, np.inf) if upper is None else np.array(upper, dtype=float)
        if self.lower.shape != (self.n,) or self.upper.shape != (self.n,):
            raise ValueError("bound arrays must have length n")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")
        items = pins.items() if hasattr(pins, "items") else pins
        seen = {}
        for dof, value in items:
            dof = int(dof)
            value = float(value)
            if not 0 <= dof < self.n:
                raise ValueError(f"pinned dof {dof} out of range")
            if dof in seen and seen[dof] != value:
                raise HypothesisError(f"dof {dof} pinned to both {seen[dof]} and {value}")
            seen[dof] = value
        self.pin_dofs = np.array(sorted(seen), dtype=int)
        self.pin_values = np.array([seen[d] for d in self.pin_dofs], dtype=float)
        bad = np.nonzero(self.lower > self.upper)[0]
        if bad.size:
            raise HypothesisError(f"empty constraint set: lower > upper at dofs {bad[:5].tolist()}")
        lo = self.lower[self.pin_dofs]
        hi = self.upper[self.pin_dofs]
        bad = self.pin_dofs[(self.pin_values < lo) | (self.pin_values > hi)]
        if bad.size:
            raise HypothesisError(f"empty constraint set: pins outside bounds at dofs {bad[:5].tolist()}")
        for arr in (self.lower, self.upper, self.pin_dofs, self.pin_values):
            arr.setflags(write=False)

    def __repr__(self):
        nb = int(np.sum(np.isfinite(self.lower)) + np.sum(np.isfinite(self.upper)))
        return f"ConstraintSet(n={self.n}, bounds={nb}, pins={self.pin_dofs.size})"

    @cached_property
    def pinned(self):
        mask = np.zeros(self.n, dtype=bool)
        mask[self.pin_dofs] = True
        return mask

    @cached_property
    def pinned_values(self):
        """Vector holding pin values on pinned dofs and 0 elsewhere."""
        v = np.zeros(self.n)
        v[self.pin_dofs] = self.pin_values
        return v

    @property
    def pins(self):
        return dict(zip(self.pin_dofs.tolist(), self.pin_values.tolist()))

    def project(self, v):
        """Euclidean projection: clamp to the bounds, then apply the pins."""
        v = as_vec(v, self.n)
        out = np.clip(v, self.lower, self.upper)
        out[self.pin_dofs] = self.pin_values
        return out

    def contains(self, v, tol=0.0):
        v = np.asarray(v, dtype=float)
        return bool(
            np.all(v >= self.lower - tol)
            and np.all(v <= self.upper + tol)
            and np.all(np.abs(v[self.pin_dofs] - self.pin_values) <= tol)
        )

    def feasible_point(self):
        return self.project(np.zeros(self.n))

    def to_dict(self):
        return {
            "n": self.n,
            "lower": [None if not np.isfinite(x) else float(x) for x in self.lower],
            "upper": [None if not np.isfinite(x) else float(x) for x in self.upper],
            "pins": [[int(d), float(v)] for d, v in zip(self.pin_dofs, self.pin_values)],
        }

    @classmethod
    def from_dict(cls, d):
        lower = [-np.inf if x is None else x for x in d["lower"]]
        upper = [np.inf if x is None else x for x in d["upper"]]
        return cls(d["n"], lower, upper, [tuple(p) for p in d["pins"]])


def project(k: ConstraintSet, v):
    """Nearest point of ``k`` to ``v`` in the Euclidean dof metric."""
    return k.project(v)


@dataclass(frozen=True, eq=False)
class TraceLaw:
    """Monotone nodal boundary law.

    On each listed dof the argument is ``r = sign * u[dof] - offset`` and the
    law contributes ``weight * sign * psi(r)`` to the dual vector, where
    ``psi(r) = slope * max(r, 0)`` (``truncated=True``) or ``slope * r``.
    With unit signs/offsets this is the lumped quadrature of a boundary
    integral such as ``int p(u_nu) v_nu da``.
    """

    n: int
    dofs: np.ndarray
    signs: np.ndarray
    weights: np.ndarray
    slope: float
    offsets: np.ndarray = None
    truncated: bool = True

    def __post_init__(self):
        dofs = np.asarray(self.dofs, dtype=int)
        k = dofs.shape[0]
        signs = np.broadcast_to(np.asarray(self.signs, dtype=float), (k,)).copy()
        weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (k,)).copy()
        offsets = np.zeros(k) if self.offsets is None else np.broadcast_to(
            np.asarray(self.offsets, dtype=float), (k,)).copy()
        if np.unique(dofs).size != k:
            raise ValueError("trace law dofs must be distinct")
        if k and (dofs.min() < 0 or dofs.max() >= self.n):
            raise ValueError("trace law dof out of range")
        if not np.all(np.abs(signs) == 1.0):
            raise ValueError("trace law signs must be +1 or -1")
        if np.any(weights < 0) or self.slope < 0:
            raise ValueError("weights and slope must be nonnegative")
        for name, arr in (("dofs", dofs), ("signs", signs), ("weights", weights), ("offsets", offsets)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "slope", float(self.slope))

    def scaled(self, factor):
        """Same law with slope multiplied by ``factor`` (``factor >= 0``)."""
        return dataclasses.replace(self, slope=self.slope * factor)

    def argument(self, u):
        return self.signs * np.asarray(u)[self.dofs] - self.offsets

    def response(self, r):
        return self.slope * (np.maximum(r, 0.0) if self.truncated else r)

    def active(self, r):
        """Mask of nodes where the law has slope ``self.slope`` at ``r``."""
        return r > 0.0 if self.truncated else np.ones(r.shape, dtype=bool)

    def dual(self, u):
        out = np.zeros(self.n)
        out[self.dofs] = self.weights * self.signs * self.response(self.argument(u))
        return out

    def energy(self, u):
        r = self.argument(u)
        rr = np.maximum(r, 0.0) if self.truncated else r
        return 0.5 * self.slope * float(self.weights @ (rr * rr))

    def curvature(self, u=None):
        """Diagonal of the (generalized) Hessian; worst case when ``u`` is None."""
        out = np.zeros(self.n)
        if u is None:
            out[self.dofs] = self.slope * self.weights
        else:
            out[self.dofs] = self.slope * self.weights * self.active(self.argument(u))
        return out

    def to_dict(self):
        return {
            "n": self.n, "dofs": self.dofs.tolist(), "signs": self.signs.tolist(),
            "weights": self.weights.tolist(), "slope": self.slope,
            "offsets": self.offsets.tolist(), "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["n"], d["dofs"], d["signs"], d["weights"], d["slope"], d["offsets"], d["truncated"])


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Strongly monotone operator ``a(u, v) = v^T (L u + sum_k law_k(u) + c)``.

    ``linear`` must be symmetric so that the operator is the gradient of a
    convex energy (used by the solvers for globalization).
    """

    linear: sp.csr_matrix
    laws: tuple = ()
    constant: np.ndarray = None

    def __post_init__(self):
        lin = sp.csr_matrix(self.linear)
        lin.sum_duplicates()
        lin.sort_indices()
        n = lin.shape[0]
        if lin.shape != (n, n):
            raise ValueError("linear part must be square")
        asym = abs(lin - lin.T).max() if lin.nnz else 0.0
        if asym > 1e-10 * max(abs(lin).max() if lin.nnz else 0.0, 1e-300):
            raise ValueError("linear part must be symmetric")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "laws", tuple(self.laws))
        for law in self.laws:
            if law.n != n:
                raise ValueError("trace law dimension does not match the operator")
        c = np.zeros(n) if self.constant is None else as_vec(self.constant, n, "constant")
        c.setflags(write=False)
        object.__setattr__(self, "constant", c)

    @property
    def n(self):
        return self.linear.shape[0]

    def with_law(self, law):
        return dataclasses.replace(self, laws=self.laws + (law,))

    def dual(self, u):
        """Dual vector of ``v -> (Au, v)_X``."""
        out = spmv(self.linear, u) + self.constant
        for law in self.laws:
            out += law.dual(u)
        return out

    def energy(self, u):
        u = np.asarray(u, dtype=float)
        e = 0.5 * float(u @ (self.linear @ u)) + float(self.constant @ u)
        for law in self.laws:
            e += law.energy(u)
        return e

    def curvature_diag(self, u=None):
        d = np.asarray(self.linear.diagonal(), dtype=float).copy()
        for law in self.laws:
            d += law.curvature(u)
        return d

    def hessian(self, u=None):
        """Linear part plus the law curvatures (worst case when ``u`` is None)."""
        extra = np.zeros(self.n)
        for law in self.laws:
            extra += law.curvature(u)
        return (self.linear + sp.diags(extra)).tocsr()


def apply_A(a: OperatorSpec, u, gram: GramInner):
    """Riesz representative of ``v -> (Au, v)_X`` in the inner product ``gram``."""
    return gram.riesz(a.dual(as_vec(u, a.n)))


@dataclass(frozen=True, eq=False)
class FrictionFunctional:
    """``j(eta, v) = mu * sum_i w_i p(eta_nu,i) * (sqrt(v_tau,i^2 + eps^2) - eps)``.

    ``normal`` is the compliance law ``p`` evaluated on the normal components
    of ``eta``; ``tangent_dofs`` are the tangential components of ``v`` at the
    same boundary nodes (one per node in two dimensions).  ``mu = 0`` or
    ``normal=None`` gives the zero functional.
    """

    mu: float = 0.0
    normal: TraceLaw = None
    tangent_dofs: np.ndarray = None
    weights: np.ndarray = None
    eps: float = 0.0

    def __post_init__(self):
        if self.mu < 0 or self.eps < 0:
            raise ValueError("friction coefficient and smoothing must be nonnegative")
        if self.normal is not None:
            t = np.asarray(self.tangent_dofs, dtype=int)
            w = np.asarray(self.weights, dtype=float)
            if t.shape != self.normal.dofs.shape or w.shape != t.shape:
                raise ValueError("tangential dofs/weights must match the normal law nodes")
            if np.intersect1d(t, self.normal.dofs).size:
                raise ValueError("tangential and normal dofs must differ")
            object.__setattr__(self, "tangent_dofs", t)
            object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls):
        return cls()

    @property
    def kind(self):
        return "zero" if self.normal is None else "tresca_coulomb"

    @property
    def couples(self):
        """True when ``j`` actually depends on ``eta``."""
        return self.normal is not None and self.mu > 0 and self.normal.slope > 0

    def thresholds(self, eta):
        """Friction bound ``mu * w_i * p(eta_nu,i)`` at each tangential dof."""
        if self.normal is None:
            return np.zeros(0)
        return self.mu * self.weights * self.normal.response(self.normal.argument(eta))

    def phi(self, t):
        if self.eps == 0.0:
            return np.abs(t)
        return np.sqrt(t * t + self.eps ** 2) - self.eps

    def evaluate(self, eta, v):
        if self.normal is None or self.mu == 0.0:
            return 0.0
        v = np.asarray(v, dtype=float)
        return float(self.thresholds(eta) @ self.phi(v[self.tangent_dofs]))

    def prox(self, y, tau):
        """Componentwise ``argmin_x tau * phi(x) + (x - y)^2 / 2``."""
        y = np.asarray(y, dtype=float)
        tau = np.asarray(tau, dtype=float)
        shrunk = np.sign(y) * np.maximum(np.abs(y) - tau, 0.0)
        if self.eps == 0.0:
            return shrunk
        # |x| solves x + tau * x / sqrt(x^2 + eps^2) = |y|; bracketed in [0, |y|]
        a = np.abs(y)
        lo = np.maximum(shrunk * np.sign(y), 0.0)
        hi = a.copy()
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            g = mid + tau * mid / np.sqrt(mid * mid + self.eps ** 2) - a
            lo = np.where(g < 0, mid, lo)
            hi = np.where(g < 0, hi, mid)
        return np.sign(y) * 0.5 * (lo + hi)

    def to_dict(self):
        if self.normal is None:
            return {"kind": "zero"}
        return {
            "kind": "tresca_coulomb", "mu": self.mu, "eps": self.eps,
            "normal": self.normal.to_dict(), "tangent_dofs": self.tangent_dofs.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "zero":
            return cls()
        return cls(d["mu"], TraceLaw.from_dict(d["normal"]), d["tangent_dofs"], d["weights"], d["eps"])


def eval_j(j: FrictionFunctional, eta, v):
    return j.evaluate(eta, v)


@dataclass(frozen=True, eq=False)
class TraceMap:
    """Linear map ``pi`` from state dofs to the load space ``Y``."""

    pi: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.pi)
        m.sort_indices()
        object.__setattr__(self, "pi", m)

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, format="csr"))

    def __call__(self, v):
        return spmv(self.pi, v)


@dataclass(frozen=True)
class Constants:
    """Certified hypothesis constants of a problem (see :func:`certify`)."""

    m: float
    M: float
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    c0: float = 0.0
    d0: float = float("nan")


def _friction_trace_matrix(j: FrictionFunctional, n):
    w = np.zeros(n)
    w[j.normal.dofs] += j.weights
    w[j.tangent_dofs] += j.weights
    return sp.diags(w).tocsr()


def certify(gram_x, a, j, pi, gram_y):
    """Compute the constants of the problem exactly from generalized eigenvalues.

    ``m = lambda_min(L, G_X)``; ``M = lambda_max(L + worst law curvature, G_X)``;
    ``alpha = gamma = d0^2 mu L_p`` with ``d0^2`` the largest eigenvalue of the
    lumped boundary trace form of the friction nodes against ``G_X``;
    ``c0^2 = lambda_max(pi^T G_Y pi, G_X)``.
    """
    n = a.n
    m, _ = extreme_eigenvalues(a.linear, gram_x.gram)
    _, M = extreme_eigenvalues(a.hessian(None), gram_x.gram)
    alpha = gamma = 0.0
    d0 = float("nan")
    if j.normal is not None:
        _, d0sq = extreme_eigenvalues(_friction_trace_matrix(j, n), gram_x.gram)
        d0 = float(np.sqrt(max(d0sq, 0.0)))
        alpha = gamma = d0sq * j.mu * j.normal.slope
    pgp = (pi.pi.T @ gram_y.gram @ pi.pi).tocsr()
    _, c0sq = extreme_eigenvalues(pgp, gram_x.gram)
    return Constants(m=m, M=M, alpha=alpha, beta=0.0, gamma=gamma, c0=float(np.sqrt(max(c0sq, 0.0))), d0=d0)


@dataclass(frozen=True, eq=False)
class GalerkinProblem:
    """Discrete quasivariational inequality with its certified constants.

    Construction certifies ``m, M, alpha, gamma, c0`` (unless ``constants`` is
    given) and rejects data with ``m <= alpha`` or ``m <= gamma`` unless
    ``enforce_smallness=False`` (used only for diagnostics).
    """

    gram_x: GramInner
    gram_y: GramInner
    A: OperatorSpec
    K: ConstraintSet
    j: FrictionFunctional
    pi: TraceMap
    f: np.ndarray
    constants: Constants = None
    enforce_smallness: bool = True

    def __post_init__(self):
        n = self.A.n
        if self.gram_x.dim != n or self.K.n != n:
            raise ValueError("X-dimensions of Gram, operator and constraint set differ")
        if self.pi.pi.shape != (self.gram_y.dim, n):
            raise ValueError(f"trace map shape {self.pi.pi.shape} != ({self.gram_y.dim}, {n})")
        f = as_vec(self.f, self.gram_y.dim, "load f")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)
        if self.constants is None:
            object.__setattr__(self, "constants",
                               certify(self.gram_x, self.A, self.j, self.pi, self.gram_y))
        c = self.constants
        if c.m <= 0:
            raise HypothesisError(f"operator is not strongly monotone (m = {c.m:.3e})")
        if self.enforce_smallness and not (c.m > c.alpha and c.m > c.gamma):
            raise HypothesisError(
                f"smallness violated: m = {c.m:.6g}, alpha = {c.alpha:.6g}, gamma = {c.gamma:.6g}")

    @property
    def n(self):
        return self.A.n

    @property
    def m(self):
        return self.constants.m

    @property
    def M(self):
        return self.constants.M

    @property
    def alpha(self):
        return self.constants.alpha

    @property
    def gamma(self):
        return self.constants.gamma

    @property
    def smallness(self):
        c = self.constants
        return c.m > c.alpha and c.m > c.gamma

    @cached_property
    def load_dual(self):
        """Dual vector of ``v -> (f, pi v)_Y``."""
        return spmv(self.pi.pi.T.tocsr(), spmv(self.gram_y.gram, self.f))

    def residual(self, u):
        """Dual residual ``a(u, .) - (f, pi .)_Y`` (friction excluded)."""
        return self.A.dual(u) - self.load_dual

    def with_load(self, f):
        """Same problem with a new load; certified constants do not depend on ``f``."""
        q = dataclasses.replace(self, f=np.asarray(f, dtype=float))
        # the iteration metric depends on the operator only
        q.__dict__["_metric_cache"] = self.__dict__.setdefault("_metric_cache", {})
        return q

    def norm_x(self, v):
        return self.gram_x.norm(v)

    def norm_y(self, v):
        return self.gram_y.norm(v)


def vi_residual(p: GalerkinProblem, u, directions):
    """Smallest value of the inequality's left-minus-right side over test points.

    Each direction is projected into ``K`` first.  A solution gives a value
    ``>= 0`` up to round-off; a negative value exhibits a violated test point.
    """
    u = as_vec(u, p.n)
    r = p.residual(u)
    ju = p.j.evaluate(u, u)
    best = np.inf
    for v in directions:
        v = p.K.project(v)
        val = float((v - u) @ r) + p.j.evaluate(u, v) - ju
        best = min(best, val)
    return best


@dataclass
class HypothesisReport:
    """Empirical estimates next to certified constants.

    ``*_hat`` values are extremes over sampled (and eigenvector-based)
    witnesses; the certified values come from :func:`certify`.
    """

    m_hat: float
    M_hat: float
    alpha_hat: float
    gamma_hat: float
    c0_hat: float
    certified: Constants
    consistent: dict = field(default_factory=dict)
    smallness_alpha: bool = True
    smallness_gamma: bool = True
    violations: list = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)

    @property
    def smallness(self):
        return self.smallness_alpha and self.smallness_gamma

    @property
    def passed(self):
        return self.smallness and all(self.consistent.values())

    def summary(self):
        c = self.certified
        lines = [
            f"m      certified {c.m:.6g}  sampled {self.m_hat:.6g}",
            f"M      certified {c.M:.6g}  sampled {self.M_hat:.6g}",
            f"alpha  certified {c.alpha:.6g}  sampled {self.alpha_hat:.6g}",
            f"gamma  certified {c.gamma:.6g}  sampled {self.gamma_hat:.6g}",
            f"c0     certified {c.c0:.6g}  sampled {self.c0_hat:.6g}",
            f"smallness m > alpha: {self.smallness_alpha}, m > gamma: {self.smallness_gamma}",
        ]
        lines += [f"VIOLATION: {v}" for v in self.violations]
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def _extreme_vector(a, b, which):
    ad = a.toarray() if sp.issparse(a) else np.asarray(a)
    bd = b.toarray() if sp.issparse(b) else np.asarray(b)
    n = ad.shape[0]
    idx = 0 if which == "min" else n - 1
    _, vec = scipy.linalg.eigh(ad, bd, subset_by_index=[idx, idx])
    return vec[:, 0]


def _law_shift(p, active, scale):
    """Base point where every truncated law is (in)active by a wide margin."""
    b = np.zeros(p.n)
    laws = list(p.A.laws)
    if p.j.normal is not None:
        laws.append(p.j.normal)
    for law in laws:
        off = float(np.max(np.abs(law.offsets))) if law.offsets.size else 0.0
        big = (10.0 * scale + 2.0 * off + 1.0) * (1.0 if active else -1.0)
        b[law.dofs] = law.signs * big
    return b


def validate_hypotheses(p: GalerkinProblem, samples=100, seed=0, rtol=1e-7):
    """Sample the structural hypotheses and compare with the certified constants.

    Deterministic for a given ``seed``.  Besides ``samples`` random draws the
    witnesses include extreme generalized eigenvectors, which makes the
    sampled constants sharp for the linear parts.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = p.n
    gx = p.gram_x
    c = p.constants

    def riesz_a(u):
        return gx.riesz(p.A.dual(u))

    # strong monotonicity and Lipschitz continuity of A
    pairs = [(rng.standard_normal(n), rng.standard_normal(n)) for _ in range(samples)]
    e_min = _extreme_vector(p.A.linear, gx.gram, "min")
    e_max = _extreme_vector(p.A.hessian(None), gx.gram, "max")
    scale = max(np.max(np.abs(e_min)), np.max(np.abs(e_max)))
    base_off = _law_shift(p, active=False, scale=scale)
    base_on = _law_shift(p, active=True, scale=scale)
    pairs += [(base_off + e_min, base_off), (base_on + e_max, base_on)]
    m_hat, M_hat = np.inf, 0.0
    witness_m = witness_M = None
    for u, v in pairs:
        d = u - v
        dn2 = gx.inner(d, d)
        if dn2 == 0:
            continue
        ad = riesz_a(u) - riesz_a(v)
        mono = gx.inner(ad, d) / dn2
        lip = gx.norm(ad) / np.sqrt(dn2)
        if mono < m_hat:
            m_hat, witness_m = mono, (u, v)
        if lip > M_hat:
            M_hat, witness_M = lip, (u, v)

    # friction: four-point inequality and growth bound
    alpha_hat = gamma_hat = 0.0
    witness_alpha = witness_gamma = None
    if p.j.normal is not None and p.j.mu > 0:
        j = p.j
        quads = [tuple(rng.standard_normal(n) for _ in range(4)) for _ in range(samples)]
        trace = _friction_trace_matrix(j, n)
        e = _extreme_vector(trace, gx.gram, "max")
        wn = np.zeros(n)
        wn[j.normal.dofs] = j.weights
        wt = np.zeros(n)
        wt[j.tangent_dofs] = j.weights
        a_vec = _extreme_vector(sp.diags(wn), gx.gram, "max")
        b_vec = _extreme_vector(sp.diags(wt), gx.gram, "max")
        zero = np.zeros(n)
        for eta in (e, -e, a_vec, -a_vec):
            for v in (e, b_vec):
                quads.append((eta, zero, zero, v))
        for eta1, eta2, v1, v2 in quads:
            num = (j.evaluate(eta1, v2) - j.evaluate(eta1, v1)
                   + j.evaluate(eta2, v1) - j.evaluate(eta2, v2))
            den = gx.norm(eta1 - eta2) * gx.norm(v1 - v2)
            if den > 0 and num / den > alpha_hat:
                alpha_hat, witness_alpha = num / den, (eta1, eta2, v1, v2)
            # growth bound uses (eta1, v2, v1): j(eta, v2) - j(eta, v1) <= gamma |eta| |v2 - v1|
            num_g = j.evaluate(eta1, v2) - j.evaluate(eta1, v1)
            den_g = gx.norm(eta1) * gx.norm(v2 - v1)
            if den_g > 0 and num_g / den_g > gamma_hat:
                gamma_hat, witness_gamma = num_g / den_g, (eta1, v1, v2)

    # trace map bound
    pgp = (p.pi.pi.T @ p.gram_y.gram @ p.pi.pi).tocsr()
    vs = [rng.standard_normal(n) for _ in range(samples)]
    vs.append(_extreme_vector(pgp, gx.gram, "max"))
    c0_hat = 0.0
    for v in vs:
        nv = gx.norm(v)
        if nv > 0:
            c0_hat = max(c0_hat, p.gram_y.norm(p.pi(v)) / nv)

    def le(a, b):
        return a <= b + rtol * max(abs(b), 1.0)

    consistent = {
        "m": le(c.m, m_hat),
        "M": le(M_hat, c.M),
        "alpha": le(alpha_hat, c.alpha),
        "gamma": le(gamma_hat, c.gamma),
        "c0": le(c0_hat, c.c0),
    }
    report = HypothesisReport(
        m_hat=float(m_hat), M_hat=float(M_hat), alpha_hat=float(alpha_hat),
        gamma_hat=float(gamma_hat), c0_hat=float(c0_hat), certified=c,
        consistent=consistent,
        smallness_alpha=bool(c.m > c.alpha and m_hat > alpha_hat),
        smallness_gamma=bool(c.m > c.gamma and m_hat > gamma_hat),
        witnesses={"m": witness_m, "M": witness_M, "alpha": witness_alpha, "gamma": witness_gamma},
    )
    for key, ok in consistent.items():
        if not ok:
            report.violations.append(f"sampled {key} is inconsistent with the certified value")
    if not report.smallness_alpha:
        report.violations.append(f"m = {c.m:.6g} does not exceed alpha = {c.alpha:.6g} (witness in witnesses['alpha'])")
    if not report.smallness_gamma:
        report.violations.append(f"m = {c.m:.6g} does not exceed gamma = {c.gamma:.6g} (witness in witnesses['gamma'])")
    return report
