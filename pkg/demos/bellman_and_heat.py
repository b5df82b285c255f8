"""Bellman convexity and L^p decay on a small grid.

First the empirical convexity constant of Q for two rotated identities,
then the evolution of both semigroups and the Bellman energy of the pair,
which should not increase.
"""

import numpy as np

from pellipt.bellman import BellmanParams, choose_delta, convexity_scan, delta_inputs
from pellipt.ellipticity import CoefficientTuple
from pellipt.semigroup import BoundarySpec, assemble, evolve, flow_monotonicity, interval_mesh

p = 3.0
A = CoefficientTuple.constant(np.exp(0.3j) * np.eye(1), V=1.0)
B = CoefficientTuple.constant(np.exp(-0.2j) * np.eye(1), V=1.0)

delta = choose_delta(**delta_inputs(A, B, p))
scan = convexity_scan(A, B, BellmanParams(p, delta), n_samples=20_000, refine=3)
print(f"delta = {delta:g}, empirical convexity constant {scan.C_emp:.4f}")

mesh = interval_mesh(40)
bc = BoundarySpec.dirichlet(mesh)
opA, opB = assemble(A, mesh, bc), assemble(B, mesh, bc)

rng = np.random.default_rng(1)
f = rng.standard_normal(mesh.n_nodes) + 1j * rng.standard_normal(mesh.n_nodes)
g = rng.standard_normal(mesh.n_nodes) + 1j * rng.standard_normal(mesh.n_nodes)

traj = evolve(opA, f, 0.2, 0.01, mass="lumped")
print("l^2 norms along the flow:", np.round(traj.mass_norms()[::5], 4))

flow = flow_monotonicity(opA, opB, BellmanParams(p, delta), f, g, 0.2, 0.01)
print(f"largest relative step change of the Bellman energy: {flow.max_increase:.3e}")
