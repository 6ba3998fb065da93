# Truncated Taylor jets and one Gaussian beam.
import numpy as np

from beamforge.beam import beam_field, propagate
from beamforge.fields import grid_for_box
from beamforge.hamiltonians import wave_constant_c
from beamforge.initdata import single_beam_state
from beamforge.jets import jet_variables

# A jet stores Taylor coefficients with the factorials already divided out,
# so the coefficient of y1^2 in exp(y1) is 1/2.
y1, y2 = jet_variables(np.array([0.0, 0.0]), 3)
f = (y1 + y2 * 0.5).exp()
print("exp(y1 + y2/2) to degree 3:", np.round(f.coeffs.real, 4))

# The beam starts at the origin heading in -y1 with M0 = diag(i, 2+i).
# The (2, 2) entry of M has the closed form (2+i) / (1 - (2+i) t).
model = wave_constant_c()
traj = propagate(model, single_beam_state(3), [0.0, 0.5, 1.0])
for t in (0.5, 1.0):
    s = traj.state_at(t)
    print(f"t={t}: x={s.x.real}, M22={s.M[1, 1]:.6f}, exact {(2 + 1j) / (1 - (2 + 1j) * t):.6f}")

# Sample the beam on a grid; u_t and the gradient come from the jets, not finite differences.
eps = 2**-6
grid = grid_for_box([0.0, -1.0], [2.0, 1.0], 2 * np.pi * eps / 8)
u, ut, (d1, d2) = beam_field(traj, 1.0, eps, grid, "all")
peak = np.unravel_index(np.argmax(np.abs(u.values)), u.dims)
print("peak |u| =", round(float(np.abs(u.values[peak])), 4), "at", grid.points()[peak])
