"""
Elastic block on a stiffening foundation
=========================================

A plane-strain block rests on a deformable layer of thickness ``k`` that sits
on a rigid base.  The layer reacts with a normal-compliance law; making its
stiffness ``1 / lambda`` grow drives the block onto the hard constraint
``u_nu <= k``.  The second half adds Coulomb friction, whose slip threshold
depends on the contact pressure of the unknown solution itself.
"""

import numpy as np

from qvicontrol import ElasticityData, PenaltySchedule, SolverParams, assemble_contact, solve_qvi, validate_hypotheses
from qvicontrol.contact import contact_rectangle, coulomb_fixed_point_diagnostics, layered_foundation_experiment

mesh = contact_rectangle(16, 8)
params = SolverParams(inner_tol=1e-10, outer_tol=1e-10)

# %%
# Frictionless sweep under a compressive top traction.
data = ElasticityData.uniform(mesh, traction=(0.0, -0.5), k=0.05, k_tilde=0.1)
table = layered_foundation_experiment(mesh, data, PenaltySchedule(1.0, 0.25, 8), params)
print(f"{'lambda':>10s} {'|u_n - u|_V':>12s} {'penetration':>12s} {'max pen.':>10s}")
for row in table.rows:
    print(f"{row.lam:10.3e} {row.distance:12.4e} {row.extra['penetration']:12.4e} "
          f"{row.extra['max_penetration']:10.2e}")

# %%
# Coulomb friction.  The automatic compliance slope keeps d0^2 mu c_p below
# half the coercivity constant, so the outer fixed point is a contraction.
for mu in (0.3, 1.0):
    model = assemble_contact(mesh, ElasticityData.uniform(mesh, traction=(0.2, -0.5), mu=mu))
    p = model.problem
    rep = validate_hypotheses(p, samples=100, seed=0)
    sol = solve_qvi(p, params)
    print(f"mu = {mu}: alpha/m certified {p.alpha / p.m:.3f}, sampled {rep.alpha_hat / rep.m_hat:.3f}; "
          f"{sol.outer_iterations} outer steps, worst ratio {coulomb_fixed_point_diagnostics(sol):.2e}")

# %%
# Where the block slips and where it sticks.
u = sol.u
res = model.results_csv(u).splitlines()
print(res[0])
for line in res[1::4]:
    print(line)
print("nodes in contact:", int(np.sum(model.gap(u) <= 1e-12)))

# %%
# Pushing mu past the smallness bound is reported rather than silently solved.
bad = assemble_contact(mesh, ElasticityData.uniform(mesh, traction=(0.2, -0.5), mu=3.0, c_p=model.c_p),
                       enforce_smallness=False)
print(validate_hypotheses(bad.problem).summary())
