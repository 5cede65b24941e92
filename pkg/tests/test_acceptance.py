"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL criterion N`` line to the terminal
before asserting, so ``pytest tests/test_acceptance.py -s`` or ``-v`` gives a
compact verdict table.
"""

import json
import time

import numpy as np
import pytest
from scipy.linalg import expm

from gsdelab.cli import main
from gsdelab.convergence import fit_order
from gsdelab.grid import GridSpec, trapezoid
from gsdelab.integral_check import check_conditions, monte_carlo_constancy
from gsdelab.jacobian_volume import check_lemma1, integrate_jacobian
from gsdelab.kernel import GridDensity, KernelCollection, build_first_integrals, check_normalization, evolve_kernel, gaussian_bump
from gsdelab.model import JumpField, MatrixField, ScalarField, SdeSystem, VectorField
from gsdelab.noise import generate_ensemble, generate_noise, refine_noise
from gsdelab.scenarios import SKEW, get_scenario, perturbed, polynomial_field, rotation_system
from gsdelab.simulate import apply_generalized_ito, integrate_path
from gsdelab.wentzell import FieldSystem, RandomFieldState, integrate_wentzell, run_wentzell

ROT_JUMP = get_scenario("rotation-jump")
TRANSLATION = get_scenario("pure-translation")
MC_STEPS = (4e-3, 2e-3, 1e-3, 5e-4)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


def test_criterion_1_condition_residuals(verdict):
    start = time.perf_counter()
    report = check_conditions(
        ROT_JUMP.system, ROT_JUMP.candidate, GridSpec.box(2.0, 40, 2), np.linspace(0.0, 1.0, 5), tol=1e-10, random_marks=0
    )
    elapsed = time.perf_counter() - start
    worst = max(report[name].max for name in ("wiener", "drift", "jump"))
    ok = report.passed and worst <= 1e-10 and elapsed < 5.0 and report.marks == 16 and report.nodes == 41 * 41
    verdict(1, ok, f"max residual {worst:.2e} over {report.nodes} nodes x {len(report.times)} times x {report.marks} marks in {elapsed:.2f}s")


def test_criterion_2_monte_carlo_constancy(verdict):
    start = time.perf_counter()
    stats = monte_carlo_constancy(ROT_JUMP.system, ROT_JUMP.candidate, ROT_JUMP.x0, 2024, 1000, 1.0, MC_STEPS)
    elapsed = time.perf_counter() - start
    at_1e3 = stats.means[list(stats.steps).index(1e-3)]
    ok = at_1e3 <= 0.05 and stats.fit.order >= 0.4 and elapsed < 60.0
    verdict(2, ok, f"mean deviation {at_1e3:.4f} at h=1e-3, order {stats.fit.order:.2f}, {elapsed:.1f}s")


def test_criterion_3_negative_control(verdict, tmp_path):
    bad = perturbed(ROT_JUMP, 1e-2)
    report = check_conditions(bad.system, bad.candidate, GridSpec.box(2.0, 40, 2), np.linspace(0.0, 1.0, 5))
    stats = monte_carlo_constancy(bad.system, bad.candidate, bad.x0, 2024, 1000, 1.0, MC_STEPS)
    code = main(["certify", "--scenario", "rotation-jump", "--perturb-drift", "0.01", "--out", str(tmp_path)])
    drift = report["drift"].max
    ok = drift >= 1e-3 and stats.plateau() and code == 2
    verdict(3, ok, f"drift residual {drift:.3f}, MC means {np.round(stats.means, 4).tolist()} plateau={stats.plateau()}, exit {code}")


def translation_run(cells, T=1.0):
    grid = GridSpec((-4.0,), (4.0,), (cells,))
    noise = generate_noise(0, T, 0.5 * grid.spacing[0], 1)
    series = evolve_kernel(TRANSLATION.system, GridDensity.from_function(grid, TRANSLATION.rho0), noise)
    err = float(trapezoid(np.abs(series[-1].values - TRANSLATION.exact_kernel(T, grid.nodes)), grid))
    drift = max(abs(check_normalization(s) - 1.0) for s in series)
    return err, drift


def test_criterion_4_kernel_translation(verdict):
    start = time.perf_counter()
    cells = (64, 128, 256, 512)
    runs = [translation_run(c) for c in cells]
    elapsed = time.perf_counter() - start
    errors = [r[0] for r in runs]
    fit = fit_order([8.0 / c for c in cells], errors)
    at_256 = errors[cells.index(256)]
    mass = max(r[1] for r in runs)
    ok = at_256 <= 5e-2 and abs(fit.order - 1.0) <= 0.3 and mass <= 2e-2 and elapsed < 30.0
    verdict(4, ok, f"L1 {at_256:.4f} at 256 cells, order {fit.order:.2f}, mass drift {mass:.1e}, {elapsed:.1f}s")


def test_criterion_5_density_jacobian_identity(verdict):
    sc = get_scenario("rotation-diffusion")
    T = 0.5
    starts = np.array([[1.0, 0.0], [0.6, 0.5], [1.3, -0.3], [0.8, -0.6]])
    fines = [generate_noise(seed, T, 1 / 8192, 1) for seed in range(5)]
    worst = []
    for cells, h in ((24, 1 / 512), (48, 1 / 2048), (96, 1 / 8192)):
        grid = GridSpec.box(3.0, cells, 2)
        rho0 = GridDensity.from_function(grid, sc.rho0)
        level = 0.0
        for fine in fines:
            nz = refine_noise(h, fine)
            series = evolve_kernel(sc.system, rho0, nz, save_every=int(round(0.05 / h)))
            for y in starts:
                path = integrate_path(sc.system, y, nz)
                level = max(level, check_lemma1(series, path, integrate_jacobian(sc.system, path, nz)).max())
        worst.append(level)
    ok = worst[1] <= 1.2 * worst[0] and worst[2] <= 1.2 * worst[1] and worst[2] < worst[0]
    verdict(5, ok, f"max residual over {len(fines) * len(starts)} paths: {np.round(worst, 4).tolist()}")


def decaying_quadratic():
    def base(x):
        return x[..., 0] ** 2 + 0.5 * x[..., 1]

    return ScalarField(
        lambda t, x: np.cos(t) * base(x),
        grad=lambda t, x: np.cos(t) * np.stack([2 * x[..., 0], np.full(x.shape[:-1], 0.5)], -1),
        hess=lambda t, x: np.broadcast_to(np.cos(t) * np.diag([2.0, 0.0]), x.shape + (2,)),
        time_deriv=lambda t, x: -np.sin(t) * base(x),
    )


def test_criterion_6_ito_wentzell(verdict):
    start = time.perf_counter()
    grid = GridSpec.box(1.6, 32, 2)
    fs, z0f = polynomial_field(2, 1)
    z0 = RandomFieldState.from_function(grid, z0f)

    fine = generate_ensemble(7, 200, 1.0, MC_STEPS[-1], 1, ROT_JUMP.system.measure)
    gaps = [run_wentzell(fs, ROT_JUMP.system, z0, ROT_JUMP.x0, [refine_noise(h, nz) for nz in fine]).gap.mean() for h in MC_STEPS]
    order = fit_order(MC_STEPS, gaps).order

    # without jumps the differential collapses to the classical one
    diffusion = rotation_system(1.0)
    fine = generate_ensemble(8, 40, 1.0, 1 / 1024, 1)
    classical = [run_wentzell(fs, diffusion, z0, [1.0, 0.0], [refine_noise(h, nz) for nz in fine]).gap.mean() for h in (1 / 64, 1 / 256, 1 / 1024)]
    classical_ok = classical[0] > classical[1] > classical[2]

    # a deterministic field with Pi = df/dt reproduces the Itô formula for f
    f = decaying_quadratic()
    source = FieldSystem(1, VectorField(lambda t, x: f.dt(t, x)[..., None], 1), MatrixField.zero(1, 1), JumpField.zero(1))
    zf = RandomFieldState.from_function(grid, lambda x: f(0.0, x))
    fine = generate_noise(6, 1.0, 1 / 1024, 1)
    ratios = []
    for h in (1 / 128, 1 / 256, 1 / 512):
        nz = refine_noise(h, fine)
        path = integrate_path(diffusion, np.array([1.0, 0.0]), nz)
        ito = apply_generalized_ito(f, diffusion, path, nz).cumulative[path.grid_indices] + f(0.0, path.states[0])
        ratios.append(np.max(np.abs(integrate_wentzell(source, diffusion, zf, [1.0, 0.0], nz)[:, 0] - ito)) / h)
    ito_ok = max(ratios) < 2.0 and np.ptp(ratios) / np.mean(ratios) < 0.3
    elapsed = time.perf_counter() - start

    ok = order >= 0.4 and classical_ok and ito_ok and elapsed < 120.0
    verdict(
        6,
        ok,
        f"gap order {order:.2f}, g=0 gaps {np.round(classical, 5).tolist()}, "
        f"Itô error/h {np.round(ratios, 3).tolist()}, {elapsed:.1f}s",
    )


def jacobian_at_T(system, h):
    nz = generate_noise(0, 1.0, h, system.m, system.measure)
    return integrate_jacobian(system, integrate_path(system, np.array([1.0, 0.0]), nz), nz)


def test_criterion_7_jacobian(verdict):
    A = np.array([[-0.5, 1.0], [0.3, -0.2]])
    linear = SdeSystem(2, 1, VectorField.linear(A), MatrixField.zero(2, 1))
    steps = np.array([1e-2, 5e-3, 2.5e-3])
    consts = np.array([np.linalg.norm(jacobian_at_T(linear, h).matrices[-1] - expm(A)) for h in steps]) / steps
    spread = np.ptp(consts) / consts.mean()
    skew = SdeSystem(2, 1, VectorField.linear(-SKEW), MatrixField.zero(2, 1))
    det_ok = all(np.max(np.abs(jacobian_at_T(skew, h).dets - 1)) <= 10 * h for h in steps)
    ok = spread < 0.05 and det_ok
    verdict(7, ok, f"error/h {np.round(consts, 4).tolist()} (spread {spread:.3f}), skew det within 10h: {det_ok}")


def translation_ratio(cells, courant, x0):
    grid = GridSpec((-4.0,), (4.0,), (cells,))
    num, den = gaussian_bump([-1.0], 0.5), gaussian_bump([-0.8], 0.7)
    init = [GridDensity.from_function(grid, num), GridDensity.from_function(grid, den)]
    nz = generate_noise(0, 1.0, courant * grid.spacing[0], 1)
    ratio = build_first_integrals(KernelCollection.evolve(TRANSLATION.system, init, nz))[0]
    last = len(ratio.times) - 1
    deviation = np.abs(ratio.at(last, x0 + ratio.times[-1]) - ratio.at(0, x0))
    interpolation = np.abs(ratio.at(0, x0) - num(x0) / den(x0))
    return float(deviation.max()), float(interpolation.max())


def test_criterion_8_kernel_ratio(verdict):
    x0 = np.array([[-1.53], [-1.21], [-0.97], [-0.64], [-0.38]])
    exact_dev, interp = translation_ratio(256, 1.0, x0)
    devs = [translation_ratio(c, 0.5, x0)[0] for c in (64, 128, 256)]
    ok = exact_dev <= interp and devs[0] > devs[1] > devs[2]
    verdict(8, ok, f"Courant-1 deviation {exact_dev:.1e} vs interpolation error {interp:.1e}; Courant-0.5 deviations {np.round(devs, 5).tolist()}")


ARTIFACT_RUNS = (
    ["simulate", "--scenario", "rotation-jump", "--paths", "4"],
    ["jacobian", "--scenario", "rotation-diffusion", "--paths", "2", "--steps", "200"],
    ["kernel", "--scenario", "pure-translation"],
    ["wentzell", "--scenario", "rotation-jump", "--paths", "10", "--levels", "0.008,0.004,0.002"],
    ["certify", "--scenario", "rotation-jump", "--paths", "50", "--levels", "0.004,0.002,0.001"],
    ["converge", "--scenario", "pure-translation", "--levels", "0.125,0.0625,0.03125"],
)


def snapshot(directory):
    out = {}
    for item in sorted(directory.iterdir()):
        if item.name == "report.json":
            data = json.loads(item.read_text())
            data.pop("wall_clock")
            out[item.name] = json.dumps(data, sort_keys=True).encode()
        else:
            out[item.name] = item.read_bytes()
    return out


def test_criterion_9_determinism(verdict, tmp_path):
    same, total = 0, 0
    for i, args in enumerate(ARTIFACT_RUNS):
        dirs = [tmp_path / f"{i}-{k}" for k in range(2)]
        codes = [main(args + ["--seed", "5", "--out", str(d)]) for d in dirs]
        first, second = (snapshot(d) for d in dirs)
        total += len(first)
        same += sum(first[name] == second.get(name) for name in first) if codes[0] == codes[1] else 0
    ok = same == total and total > 0
    verdict(9, ok, f"{same}/{total} artifacts identical across {len(ARTIFACT_RUNS)} repeated commands")
