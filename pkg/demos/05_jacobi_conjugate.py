"""Jacobi fields, conjugate points, and the maximal minimizing time T*.

The scalar Jacobi amplitude solves j'' + K(gamma(t)) j = 0 along the path;
a second zero of a solution vanishing at 0 marks a conjugate point, beyond
which the geodesic cannot minimize (and the distance test detects it).
"""

import numpy as np

from roughplane import CovarianceModel, GridSpec, UnitTangentState, integrate, sample_field
from roughplane.distance import distance_map
from roughplane.jacobi import first_conjugate_point, jacobi_integrate, t_star
from roughplane.metric import GridMetricField, constant_curvature_metric

sphere = constant_curvature_metric(1.0)
path = integrate(sphere, UnitTangentState((1.0, 0.0), (0.0, 1.0)), (0.0, 4.0), 0.002)
conj = first_conjugate_point(sphere, path, 4.0)
print(f"unit sphere: first conjugate point at {conj:.6f}  (pi = {np.pi:.6f})")

dmap = distance_map(sphere, (1.0, 0.0), grid=GridSpec(12.0, 384), stencil=32)
est = t_star(dmap, path, 4.0)
print(f"maximal minimizing time by bisection: {est.time:.3f} (cut locus at the antipode)")

print("\nrandom metric at amplitude 0.3:")
field = GridMetricField.from_sample(sample_field(CovarianceModel(0.3), GridSpec(10.0, 320), 4))
path = integrate(field, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (0.0, 2.0), 0.004)
conj = first_conjugate_point(field, path, 2.0)
print(f"  first conjugate point: {conj}")
dmap = distance_map(field, (0.0, 0.0), stencil=32)
est = t_star(dmap, path, 2.0)
print(f"  T* estimate: {est.time:.3f} (at horizon: {est.at_horizon})")

sol = jacobi_integrate(field, path, 0.0, 0.0, 1.0, 1.5)
sol.to_csv("/tmp/demo_jacobi.csv")
print("  Jacobi solution exported to /tmp/demo_jacobi.csv (t, j, jp, K)")
