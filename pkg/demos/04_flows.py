"""Continuous flow on a sphere and in a disc.

Nonnegative PCA: the flow on the unit sphere inside the orthant settles at a
point with one zero coordinate that is a genuine KKT point.  In the disc,
the nonsmooth objective |x_1| + x_2 / 2 drives the flow to the bottom of the
boundary, approaching it only polynomially fast.
"""
import numpy as np

from barrierflow import classify, integrate, registry_get
from barrierflow.flow import FlowConfig, omega_limit_estimate

p = registry_get("nn-pca")
tr = integrate(p, None, None, FlowConfig(h=1e-2, t_max=100.0))
om = omega_limit_estimate(tr)
rep = classify(p, "entropy", tr.final)
print("nn-pca limit:", np.round(om.centroids[0], 5), "->", rep.classification,
      f"(kkt {rep.kkt_residual:.1e})")
print("top eigenvalue of M:", np.linalg.eigvalsh(p.data["M"])[-1].round(4),
      " objective at the limit:", round(-tr.f[-1], 4))

q = registry_get("ball-abs")
tr = integrate(q, None, None, FlowConfig(h=1e-2, t_max=300.0))
for t in (1, 10, 100, 300):
    i = np.searchsorted(tr.t, t) - 1
    print(f"t={tr.t[i]:6.1f}  x={np.round(tr.x[i], 6)}  stable residual={tr.stable_res[i]:.1e}")
