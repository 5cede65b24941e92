# Two ways to follow a random field along a random path:
#   direct     - evolve the field on a grid, read it off where the path is
#   integrated - sum the Itô-Wentzell increments along the path
# They see the same noise, so what separates them is discretisation.

from gsdelab import GridSpec, RandomFieldState, generate_ensemble, get_scenario, run_wentzell
from gsdelab.noise import refine_noise
from gsdelab.scenarios import polynomial_field

sc = get_scenario("rotation-jump")
fs, z0 = polynomial_field(2, 1)
field = RandomFieldState.from_function(GridSpec.box(1.6, 32, 2), z0)

fine = generate_ensemble(7, 50, 1.0, 5e-4, 1, sc.system.measure)
for h in (4e-3, 2e-3, 1e-3, 5e-4):
    run = run_wentzell(fs, sc.system, field, sc.x0, [refine_noise(h, nz) for nz in fine])
    print(f"h={h:.0e}  mean gap {run.gap.mean():.5f}  worst {run.gap.max():.5f}")
