"""Velocity Verlet against the exact harmonic flow of the a-field.

With the cubic coupling switched off every mode rotates with its own
frequency, so the a-field after time T is known in closed form.  Halving the
timestep should quarter the error.
"""

import numpy as np

from phononkin.lattice import PotentialSpec, energy, evolve
from phononkin.spectral import afield_to_state, cosine_model, harmonic_propagate, state_to_afield

model = cosine_model(1.0)
L, T = 12, 2.0
rng = np.random.default_rng(0)
a = rng.standard_normal((L, L, L)) + 1j * rng.standard_normal((L, L, L))
pot = PotentialSpec(0.0, 1.0, 1.0)
exact = harmonic_propagate(a, T, model)

print(f"L={L}, T={T}, max frequency {model.omega_max(L):.3f}")
prev = None
for h in (0.04, 0.02, 0.01):
    out = evolve(afield_to_state(a, model), T, h, model.stencil, pot)
    err = np.max(np.abs(state_to_afield(out, model) - exact))
    ratio = "" if prev is None else f"  ratio {prev / err:.2f}"
    print(f"h={h:<5} sup error {err:.3e}{ratio}")
    prev = err

# with the cubic term on, the energy is conserved up to O(h^2) oscillations
pot = PotentialSpec(1.0, 0.1, 1.0, quartic_stabilizer=True)
s0 = afield_to_state(0.3 * a, model)
s1 = evolve(s0, T, 0.02, model.stencil, pot)
e0, e1 = float(energy(s0, model.stencil, pot)), float(energy(s1, model.stencil, pot))
print(f"anharmonic run: relative energy change {abs(e1 - e0) / e0:.2e}")
