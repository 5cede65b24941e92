import numpy as np

from gsdelab import GridDensity, GridSpec, evolve_kernel, generate_noise, get_scenario
from gsdelab.grid import trapezoid
from gsdelab.kernel import check_normalization

sc = get_scenario("pure-translation")

for cells in (64, 128, 256, 512):
    grid = GridSpec((-4.0,), (4.0,), (cells,))
    noise = generate_noise(0, 1.0, 0.5 * grid.spacing[0], 1)  # Courant 0.5
    series = evolve_kernel(sc.system, GridDensity.from_function(grid, sc.rho0), noise)
    last = series[-1]
    err = trapezoid(np.abs(last.values - sc.exact_kernel(1.0, grid.nodes)), grid)
    print(cells, "cells  L1 error", round(float(err), 4), " mass", round(check_normalization(last), 8))

# Upwind transport smears the bump; the error halves with the spacing.
# With Courant number one the same scheme is an exact shift:
grid = GridSpec((-4.0,), (4.0,), (256,))
noise = generate_noise(0, 1.0, grid.spacing[0], 1)
last = evolve_kernel(sc.system, GridDensity.from_function(grid, sc.rho0), noise)[-1]
print("Courant 1 max error", np.abs(last.values - sc.rho0(grid.nodes - 1.0)).max())
