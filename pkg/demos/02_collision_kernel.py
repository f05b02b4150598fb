"""Where three-phonon collisions can happen.

The nearest-neighbour dispersion has an energy gap that rules out every
resonance, so its collision operator vanishes once the mollifier is narrower
than the gap.  The cosine model has a resonance manifold of positive measure.
"""

import numpy as np

from phononkin.boltzmann import rayleigh_jeans
from phononkin.collision import (CollisionConfig, MollifierSpec, collision_apply, collision_measure, get_kernel,
                                 no_collision_check, resolution_floor)
from phononkin.ensemble import eval_k_expression
from phononkin.spectral import cosine_model, flat_model, nn_model

for m in (flat_model(1.0), nn_model(1.0), cosine_model(1.0)):
    r = no_collision_check(m)
    print(f"{m.name:>11}: refined gap {r.refined_gap:.4f} -> {r.verdict}")

N = 12
W = eval_k_expression("1 + 0.5*c1", N)
nn = nn_model(1.0)
print("\nnearest-neighbour model, sup|C W| as the width shrinks:")
for eta in (0.08, 0.06, 0.04):
    c = collision_apply(W, CollisionConfig(nn, 1.0, N, MollifierSpec("gaussian", eta)))
    print(f"  eta={eta}: {np.max(np.abs(c)):.3e}")

cos = cosine_model(1.0)
cfg = CollisionConfig(cos, 1.0, N, MollifierSpec("gaussian", resolution_floor(cos, N)))
print(f"\ncosine model on {N}^3, width {cfg.eta:.3f} (resolution floor)")
print(f"  sup|C W|            {np.max(np.abs(collision_apply(W, cfg))):.3e}")
rj = rayleigh_jeans(cos, N, 1.0)
print(f"  sup|C (1/omega)|    {np.max(np.abs(collision_apply(rj, cfg))):.3e}  (shrinks only as the width goes to 0)")
print(f"  collision time      {get_kernel(cfg).collision_time(W):.3g}")
m = collision_measure(cfg)
print(f"  resonance measure   {m.extrapolated:.4f} +- {m.error:.4f}")
