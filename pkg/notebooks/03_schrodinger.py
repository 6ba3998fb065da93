# Semiclassical Schrodinger: beams against a split-step Fourier reference.
import numpy as np

from beamforge.fields import grid_for_box
from beamforge.hamiltonians import cosine_potential, schrodinger
from beamforge.initdata import schrodinger_data
from beamforge.norms import grid_l2
from beamforge.reference import reference_grid, schrodinger_split_step, split_step_count
from beamforge.initdata import sample_initial_fields
from beamforge.superposition import build_family, superpose

eps = 2**-6
data = schrodinger_data()
model = schrodinger(cosine_potential, 1)
grid = reference_grid([-4 * np.pi], [4 * np.pi], eps)
y = grid.axes()[0]

u0, _ = sample_initial_fields(data, model, eps, grid)
n = split_step_count(eps, grid, 1.0)
ref = schrodinger_split_step(u0, grid.like(np.cos(y)), eps, 1.0, n)
print("split-step mass drift:", abs(grid_l2(ref) - grid_l2(u0)))

for k in (1, 2, 3):
    fam = build_family(data, model, k, eps, times=(0.0, 1.0))
    u = superpose(fam, 1.0, grid)
    err = grid_l2(u.like(u.values - ref.values)) / grid_l2(ref)
    print(f"k={k}: relative L2 error at t=1 is {err:.3e} with {fam.stats['beams']} beams")
