# Density times Jacobian along a path should reproduce the initial density.

import numpy as np

from gsdelab import GridDensity, GridSpec, evolve_kernel, generate_noise, get_scenario, integrate_path
from gsdelab.jacobian_volume import check_lemma1, integrate_jacobian
from gsdelab.noise import refine_noise

sc = get_scenario("rotation-diffusion")
fine = generate_noise(0, 0.5, 1 / 2048, 1)
y = np.array([0.6, 0.5])

for cells, h in ((24, 1 / 512), (48, 1 / 2048)):
    nz = refine_noise(h, fine)
    grid = GridSpec.box(3.0, cells, 2)
    series = evolve_kernel(sc.system, GridDensity.from_function(grid, sc.rho0), nz, save_every=int(0.1 / h))
    path = integrate_path(sc.system, y, nz)
    jac = integrate_jacobian(sc.system, path, nz)
    print(cells, "cells:", np.round(check_lemma1(series, path, jac), 4))
    print("   det J along the path stays near", round(float(jac.dets[-1]), 4))
