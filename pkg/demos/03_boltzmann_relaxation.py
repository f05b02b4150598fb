"""Relaxation under the homogeneous Boltzmann equation and its Taylor series.

The energy functional is conserved only up to the width-eta quadrature error,
which at the resolution floor of a small grid is a few percent per collision
time.  For short times the perturbative series in t converges to the ODE
solution.
"""

import numpy as np

from phononkin.boltzmann import perturbative_series, solve_homogeneous
from phononkin.collision import CollisionConfig, MollifierSpec, get_kernel, resolution_floor
from phononkin.ensemble import eval_k_expression
from phononkin.spectral import cosine_model

model = cosine_model(1.0)
N = 8
cfg = CollisionConfig(model, 1.0, N, MollifierSpec("gaussian", resolution_floor(model, N)))
W0 = eval_k_expression("(1 + 0.5*c1*c2)/omega", N, model)
tc = get_kernel(cfg).collision_time(W0)
print(f"collision time {tc:.3g}")

tr = solve_homogeneous(W0, 3 * tc, tc / 10, cfg)
for t, W, e in list(zip(tr.times, tr.values, tr.energy))[::10]:
    print(f"t={t:8.3g}  min W {W.min():.4f}  max W {W.max():.4f}  energy {e:.6f}")
print(f"relative energy drift {tr.energy_drift:.2e}")

t = 0.1 * tc
ref = solve_homogeneous(W0, t, t / 100, cfg).final
print(f"\nseries at t = {t:.3g}:")
for n, p in enumerate(perturbative_series(W0, t, 4, cfg).partial_sums()):
    print(f"  through order {n}: sup error {np.max(np.abs(p - ref)):.2e}")
