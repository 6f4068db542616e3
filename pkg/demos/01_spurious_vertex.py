"""A vertex of the simplex that the barrier flow treats as an equilibrium but that is not a KKT point.

Minimize -x_1 over the unit simplex with the entropy kernel.  Both vertices
make the projected metric field vanish, yet only e_1 is a minimizer.
"""
import numpy as np

from barrierflow import classify, complementarity_check, registry_get
from barrierflow.flow import FlowConfig, escape_experiment, logistic_exit_time

p = registry_get("lin-simplex")

for x in ([1.0, 0.0], [0.0, 1.0], [0.5, 0.5]):
    rep = classify(p, "entropy", x)
    print(f"x={x}  stable={rep.stable_residual:.2e}  kkt={rep.kkt_residual:.4f}  -> {rep.classification}")

# at e_2 the slack s + x has a negative entry, so the point repels nearby trajectories
rep = classify(p, "entropy", [0.0, 1.0])
print("s + x at e_2:", rep.s + rep.x, "->", complementarity_check(rep))

# Start close to e_2 and measure when the flow leaves the box of radius 1/2.
# Along the simplex x_1 obeys the logistic equation, so the exit time is known.
deltas = [1e-1, 1e-2, 1e-3]
table = escape_experiment(p, None, [0.0, 1.0], 0.5, deltas, FlowConfig(h=1e-4, t_max=50.0))
for rec in table:
    T = logistic_exit_time(0.5, rec.delta)
    print(f"delta={rec.delta:g}  T_exit={rec.t_exit:.4f}  logistic={T:.4f}  "
          f"closest return={rec.min_dist_after_exit:.3f}")
