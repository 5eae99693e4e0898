"""Sparse/dense linear algebra kernels shared by the rest of the package.

Vectors are plain ``numpy`` float arrays.  Sparse matrices are
``scipy.sparse.csr_matrix`` instances with sorted, duplicate-free column
indices; :func:`csr` is the canonical constructor used by the FEM assembly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

__all__ = [
    "ConvergenceError",
    "GramInner",
    "SparseMat",
    "as_vec",
    "cg_solve",
    "csr",
    "extreme_eigenvalues",
    "inner",
    "spmv",
]

SparseMat = sp.csr_matrix
_EPS = np.finfo(float).eps


class ConvergenceError(RuntimeError):
    """An iterative method stopped before reaching its tolerance.

    Attributes
    ----------
    iterate : ndarray or None
        Last iterate.
    residual : float
        Final residual (in the units of the method that raised).
    history : list of float
        Residual history, when the method keeps one.
    """

    def __init__(self, message, iterate=None, residual=np.nan, history=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.history = list(history) if history is not None else []


def as_vec(x, n=None, name="vector"):
    """Return ``x`` as a finite 1-D float array, optionally of length ``n``."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def csr(data, rows, cols, shape) -> sp.csr_matrix:
    """Build a CSR matrix from triplets; duplicate (row, col) entries are summed."""
    m = sp.coo_matrix(
        (np.asarray(data, dtype=float), (np.asarray(rows), np.asarray(cols))),
        shape=shape,
    ).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def _as_csr(m) -> sp.csr_matrix:
    if sp.issparse(m):
        out = m.tocsr()
    else:
        out = sp.csr_matrix(np.asarray(m, dtype=float))
    out.sum_duplicates()
    out.sort_indices()
    return out


def spmv(m, x) -> np.ndarray:
    """Sparse matrix-vector product with a dimension check."""
    x = np.asarray(x, dtype=float)
    if m.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {m.shape} times vector {x.shape}")
    return np.asarray(m @ x, dtype=float).ravel()


def cg_solve(m, b, tol=1e-10, max_iter=None, x0=None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for an SPD system.

    Returns ``x`` with ``||m x - b||_2 <= tol * ||b||_2``.

    Raises
    ------
    ConvergenceError
        If the tolerance is not met within ``max_iter`` iterations (default
        ``10 * n``), or earlier once restarts from the true residual stop
        making progress.  The best iterate seen is then reported.  The exception carries the last iterate and residual.
    """
    b = as_vec(b, name="right-hand side")
    n = b.shape[0]
    if m.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {m.shape}, rhs {b.shape}")
    if max_iter is None:
        max_iter = max(10 * n, 50)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    diag = np.asarray(m.diagonal(), dtype=float) if sp.issparse(m) else np.diag(m).astype(float)
    if np.any(diag <= 0.0):
        raise ValueError("matrix has non-positive diagonal entries; not SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else as_vec(x0, n, "initial guess").copy()
    r = b - m @ x
    target = tol * bnorm
    rnorm = np.linalg.norm(r)
    history = [rnorm]
    if rnorm <= target:
        return x
    z = inv_diag * r
    d = z.copy()
    rz = r @ z
    best_x, best_r, stalls = x.copy(), rnorm, 0
    for _ in range(max_iter):
        md = m @ d
        curv = d @ md
        if curv <= 0.0:
            raise ConvergenceError("non-positive curvature: matrix is not SPD",
                                   iterate=x, residual=rnorm, history=history)
        step = rz / curv
        x += step * d
        r -= step * md
        rnorm = np.linalg.norm(r)
        history.append(rnorm)
        restart = False
        if rnorm <= max(target, _EPS * bnorm):
            # guard against drift of the recursive residual
            r = b - m @ x
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                return x
            if rnorm < best_r:
                best_x, best_r, stalls = x.copy(), rnorm, 0
            else:
                stalls += 1
            # no progress over several restarts: the rounding level is reached
            if stalls >= 3:
                break
            restart = True
        z = inv_diag * r
        rz_new = r @ z
        d = z if restart else z + (rz_new / rz) * d
        rz = rz_new
    rnorm = np.linalg.norm(b - m @ x)
    if rnorm <= target:
        return x
    if best_r < rnorm:
        x, rnorm = best_x, best_r
    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations (residual {rnorm:.3e}, target {target:.3e})",
        iterate=x, residual=rnorm, history=history,
    )


def extreme_eigenvalues(a, b=None):
    """Smallest and largest eigenvalue of the symmetric pencil ``(a, b)``.

    Dense LAPACK is used; the problems in this package have at most a few
    thousand unknowns.
    """
    ad = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
    if b is None:
        w = scipy.linalg.eigvalsh(ad)
    else:
        bd = b.toarray() if sp.issparse(b) else np.asarray(b, dtype=float)
        w = scipy.linalg.eigvalsh(ad, bd)
    return float(w[0]), float(w[-1])


@dataclass(frozen=True)
class GramInner:
    """Inner product ``(x, y) = x^T gram y`` on coefficient vectors."""

    gram: sp.csr_matrix

    def __post_init__(self):
        g = _as_csr(self.gram)
        if g.shape[0] != g.shape[1]:
            raise ValueError(f"Gram matrix must be square, got {g.shape}")
        asym = abs(g - g.T).max() if g.nnz else 0.0
        scale = abs(g).max() if g.nnz else 0.0
        if asym > 1e-12 * max(scale, 1e-300):
            raise ValueError(f"Gram matrix is not symmetric (max asymmetry {asym:.3e})")
        object.__setattr__(self, "gram", g)

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, format="csr"))

    @classmethod
    def diagonal(cls, weights):
        return cls(sp.diags(np.asarray(weights, dtype=float), format="csr"))

    @property
    def dim(self):
        return self.gram.shape[0]

    @property
    def is_diagonal(self):
        g = self.gram
        return g.nnz == np.count_nonzero(g.diagonal())

    def inner(self, x, y):
        return inner(self, x, y)

    def norm(self, x):
        return float(np.sqrt(max(inner(self, x, x), 0.0)))

    def riesz(self, b, tol=1e-13):
        """Solve ``gram x = b``: the Riesz representative of the functional ``b``."""
        if self.is_diagonal:
            return as_vec(b, self.dim) / self.gram.diagonal()
        return cg_solve(self.gram, b, tol=tol)

    def certify(self, n_rhs=3, seed=0):
        """Check definiteness by running CG on random right-hand sides.

        Returns True when every solve converges with a positive energy.
        """
        rng = np.random.default_rng(seed)
        for _ in range(n_rhs):
            b = rng.standard_normal(self.dim)
            try:
                x = cg_solve(self.gram, b, tol=1e-10)
            except (ConvergenceError, ValueError):
                return False
            if x @ b <= 0.0:
                return False
        return True


def inner(g: GramInner, x, y) -> float:
    """``x^T G y`` for the Gram matrix of ``g``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = g.dim
    if x.shape != (n,) or y.shape != (n,):
        raise ValueError(f"dimension mismatch: Gram of size {n}, vectors {x.shape} and {y.shape}")
    return float(x @ (g.gram @ y))
