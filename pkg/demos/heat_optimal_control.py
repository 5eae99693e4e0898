"""
Optimal heating with a penalized boundary condition
===================================================

The heat source is now a control, built from four piecewise-constant patches.
The cost tracks a target temperature and charges the control's L2 energy.
With the state constraint the reduced cost is nonsmooth, so a derivative-free
pattern search is used.  Solving the Robin-penalized control problems for
decreasing ``lambda`` gives optimal pairs that converge to the constrained
optimum.
"""

import numpy as np

from qvicontrol import (ControlSpace, HeatData, PenaltySchedule, SolverParams, assemble_heat, optimal_pair_sweep,
                        optimize_control)
from qvicontrol.control import midpoint_convexity, reduced_cost
from qvicontrol.heat import heat_cost, unit_square

mesh = unit_square(8)
model = assemble_heat(mesh, HeatData.from_functions(mesh, 0.0, 1.0, 0.0))
p = model.problem
params = SolverParams(inner_tol=1e-11, outer_tol=1e-11, dual_tol=1e-11)
space = ControlSpace.patches(mesh.nodes, 2, 2)
cost = heat_cost(model, omega=1.0, delta=1e-2)

# %%
# With a zero target the reduced cost is convex, so the optimum is unique:
# two runs from different random starts agree.
a = optimize_control(p, cost, space, starts=2, seed=0, params=params)
b = optimize_control(p, cost, space, starts=2, seed=1, params=params)
print("coefficients:", np.round(a.coeffs, 4), f"cost {a.cost:.6f}")
print(f"|f_a - f_b|_Y = {p.norm_y(a.f_star - b.f_star):.2e} after {a.evaluations} + {b.evaluations} solves")

rng = np.random.default_rng(0)
fun = lambda c: reduced_cost(p, cost, space(c), params)
defects = [midpoint_convexity(fun, *rng.uniform(-6, 6, (2, space.dim))) for _ in range(20)]
print(f"smallest midpoint defect over 20 segments: {min(defects):.3e}")

# %%
# Penalized problems with perturbed weights (omega_n, delta_n) -> (omega, delta).
sched = PenaltySchedule(1.0, 0.25, 5)
seq = [cost.perturbed(omega=1 + lam, delta=1e-2 * (1 + lam)) for lam in sched.lambdas]
sweep = optimal_pair_sweep(p, cost, seq, model.penalty, sched, space, params, starts=1, seed=0)
print(f"{'lambda':>10s} {'cost gap':>10s} {'|f_n - f|':>10s}")
for row, g, d in zip(sweep.rows, sweep.gaps, sweep.control_distances):
    print(f"{row.lam:10.3e} {g:10.3e} {d:10.3e}")
