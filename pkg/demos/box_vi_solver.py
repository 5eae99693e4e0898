"""
Projected fixed point versus active-set enumeration
===================================================

For a small quadratic program on a box the exact solution can be found by
trying every active pattern.  The projected iteration ``u <- P_K(u - rho
(A u - f))`` converges to the same point, and its step lengths contract at
least at the rate ``sqrt(1 - m^2 / M^2)`` when ``rho = m / M^2``.  The
default solver adds a projected search and face conjugate gradients on top.
"""

import itertools

import numpy as np
import scipy.sparse as sp

from qvicontrol import (ConstraintSet, FrictionFunctional, GalerkinProblem, GramInner, OperatorSpec, SolverParams,
                        TraceMap, solve_qvi)

rng = np.random.default_rng(3)
n = 6
q, _ = np.linalg.qr(rng.standard_normal((n, n)))
L = (q * np.geomspace(1.0, 8.0, n)) @ q.T
L = 0.5 * (L + L.T)
f = 2.0 * rng.standard_normal(n)
lower, upper = -np.full(n, 0.5), np.full(n, 0.5)

p = GalerkinProblem(GramInner.identity(n), GramInner.identity(n), OperatorSpec(sp.csr_matrix(L)),
                    ConstraintSet(n, lower, upper), FrictionFunctional.zero(), TraceMap.identity(n), f)
print(f"m = {p.m:.4f}, M = {p.M:.4f}, predicted rate {np.sqrt(1 - p.m ** 2 / p.M ** 2):.4f}")

# %%
# Brute force over the 3^n patterns {lower, free, upper}.
best = None
for pat in itertools.product((0, 1, 2), repeat=n):
    pat = np.array(pat)
    fixed = pat != 1
    u = np.where(pat == 0, lower, upper).astype(float)
    free = ~fixed
    if free.any():
        u[free] = np.linalg.solve(L[np.ix_(free, free)], f[free] - L[np.ix_(free, fixed)] @ u[fixed])
    r = L @ u - f
    if (np.all(u >= lower - 1e-12) and np.all(u <= upper + 1e-12)
            and np.all(r[pat == 0] >= -1e-12) and np.all(r[pat == 2] <= 1e-12)):
        best = u
        break
print("enumeration:", np.round(best, 6))

# %%
plain = solve_qvi(p, SolverParams(accelerate=False, metric="gram", inner_tol=1e-12, max_inner=100000))
fast = solve_qvi(p, SolverParams(inner_tol=1e-12))
print("plain iteration:", np.round(plain.u, 6), f"({plain.inner_iterations} steps)")
print("accelerated:    ", np.round(fast.u, 6), f"({fast.inner_iterations} steps)")
print(f"largest observed step ratio {max(plain.inner_ratios):.4f} <= {plain.inner_kappa:.4f}")
print(f"|u - u_enum| = {np.linalg.norm(fast.u - best):.2e}")
