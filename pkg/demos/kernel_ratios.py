import numpy as np

from gsdelab import GridSpec, KernelCollection, build_first_integrals, generate_noise, get_scenario, integrate_path
from gsdelab.kernel import GridDensity, gaussian_bump

sc = get_scenario("pure-translation")
grid = GridSpec((-4.0,), (4.0,), (256,))
init = [GridDensity.from_function(grid, gaussian_bump([-1.0], 0.5)),
        GridDensity.from_function(grid, gaussian_bump([-0.8], 0.7))]

for courant in (1.0, 0.5):
    nz = generate_noise(0, 1.0, courant * grid.spacing[0], 1)
    ratio = build_first_integrals(KernelCollection.evolve(sc.system, init, nz))[0]
    path = integrate_path(sc.system, np.array([-0.97]), nz)
    u = [ratio.at(k, path.states[path.grid_indices[k]][None])[0] for k in range(len(ratio.times))]
    print(f"Courant {courant}: ratio along the path from {u[0]:.6f} to {u[-1]:.6f}")
