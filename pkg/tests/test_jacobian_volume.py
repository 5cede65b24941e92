import io

import numpy as np
import pytest
from scipy.linalg import expm

from gsdelab.errors import DegenerateJacobian, IllConditionedEstimate
from gsdelab.grid import GridSpec
from gsdelab.jacobian_volume import (
    FlowEnsemble,
    check_lemma1,
    integrate_flow_ensemble,
    integrate_jacobian,
    volume_integral,
    write_jacobian_csv,
)
from gsdelab.kernel import GridDensity, evolve_kernel
from gsdelab.model import JumpField, JumpMeasure, MatrixField, SdeSystem, VectorField
from gsdelab.noise import generate_ensemble, generate_noise
from gsdelab.scenarios import SKEW, get_scenario, rotation_system
from gsdelab.simulate import integrate_path

A = np.array([[-0.5, 1.0], [0.3, -0.2]])


def linear(A):
    return SdeSystem(2, 1, VectorField.linear(A), MatrixField.zero(2, 1))


def jacobian_at_T(system, h, x0=(1.0, 0.0), seed=0):
    nz = generate_noise(seed, 1.0, h, system.m, system.measure)
    path = integrate_path(system, np.array(x0), nz)
    return integrate_jacobian(system, path, nz)


def test_linear_drift_matches_expm_first_order():
    target = expm(A)
    errs = [np.linalg.norm(jacobian_at_T(linear(A), h).matrices[-1] - target) for h in (1e-2, 5e-3, 2.5e-3)]
    consts = np.array(errs) / np.array([1e-2, 5e-3, 2.5e-3])
    assert np.ptp(consts) / consts.mean() < 0.05


def test_skew_drift_preserves_volume():
    for h in (1e-2, 1e-3):
        jp = jacobian_at_T(linear(-SKEW), h)
        assert np.max(np.abs(jp.dets - 1)) <= 10 * h


def test_jump_composes_jacobian():
    kappa = 0.5
    g = JumpField(lambda t, x, m: kappa * x, 2)
    system = SdeSystem(2, 1, VectorField.zero(2), MatrixField.zero(2, 1), g, JumpMeasure(2.0, lambda r, s: np.zeros((s, 1)), [0.0]))
    nz = generate_noise(2, 1.0, 0.1, 1, system.measure)
    path = integrate_path(system, np.ones(2), nz)
    jp = integrate_jacobian(system, path, nz)
    assert np.allclose(jp.matrices[-1], (1 + kappa) ** len(nz.jump_times) * np.eye(2))


def test_jacobian_matches_finite_difference_of_flow():
    system = rotation_system(1.0, intensity=2.0)
    nz = generate_noise(9, 1.0, 1e-2, 1, system.measure)
    x0 = np.array([0.8, -0.3])
    jp = integrate_jacobian(system, integrate_path(system, x0, nz), nz)
    eps = 1e-6
    fd = np.stack(
        [(integrate_path(system, x0 + eps * e, nz).final - integrate_path(system, x0 - eps * e, nz).final) / (2 * eps) for e in np.eye(2)],
        axis=1,
    )
    assert np.allclose(jp.matrices[-1], fd, atol=1e-6)


def test_flow_ensemble_matches_single_path_dets():
    system = rotation_system(1.0, intensity=2.0)
    noises = generate_ensemble(4, 5, 1.0, 1e-2, 1, system.measure)
    x0 = np.random.default_rng(1).normal(size=(5, 2))
    flow = integrate_flow_ensemble(system, x0, noises)
    for p, nz in enumerate(noises):
        path = integrate_path(system, x0[p], nz)
        jp = integrate_jacobian(system, path, nz)
        assert np.allclose(flow.dets[p], jp.dets[path.grid_indices], atol=1e-12)
    pairs = [(integrate_path(system, x0[0], noises[0]), None)]
    pairs[0] = (pairs[0][0], integrate_jacobian(system, pairs[0][0], noises[0]))
    assert np.allclose(FlowEnsemble.from_pairs(pairs).dets[0], flow.dets[0])


def test_degenerate_jacobian():
    g = JumpField(lambda t, x, m: -x, 1)
    system = SdeSystem(1, 1, VectorField.zero(1), MatrixField.zero(1, 1), g, JumpMeasure(5.0, lambda r, s: np.zeros((s, 1)), [0.0]))
    nz = generate_noise(0, 1.0, 0.1, 1, system.measure)
    assert len(nz.jump_times)
    with pytest.raises(DegenerateJacobian):
        integrate_jacobian(system, integrate_path(system, [1.0], nz), nz)


def test_volume_integral_conserves_box_volume():
    # a single-sample flow of a volume-preserving system keeps the box volume
    system = linear(-SKEW)
    y = np.random.default_rng(0).uniform(-1, 1, size=(2000, 2))
    nz = generate_noise(0, 1.0, 0.01, 1)
    flow = integrate_flow_ensemble(system, y, [nz] * len(y))
    box = lambda t, x: np.all(np.abs(x) <= 1, axis=-1).astype(float)
    one = lambda t, x: np.ones(len(x))
    series = volume_integral(one, box, flow, lambda x: np.full(len(x), 0.25))
    assert np.allclose(series, 4.0, rtol=0.02)


def test_volume_integral_ess_guard():
    system = linear(-SKEW)
    y = np.random.default_rng(0).uniform(-1, 1, size=(200, 2))
    nz = generate_noise(0, 0.1, 0.01, 1)
    flow = integrate_flow_ensemble(system, y, [nz] * len(y))
    needle = lambda t, x: (np.linalg.norm(x, axis=-1) < 0.01).astype(float)
    with pytest.raises(IllConditionedEstimate):
        volume_integral(lambda t, x: np.ones(len(x)), needle, flow, lambda x: np.full(len(x), 0.25))


def test_density_times_jacobian_on_translation():
    sc = get_scenario("pure-translation")
    grid = GridSpec((-4.0,), (4.0,), (256,))
    nz = generate_noise(0, 1.0, 1 / 64, 1)
    series = evolve_kernel(sc.system, GridDensity.from_function(grid, sc.rho0), nz, save_every=8)
    path = integrate_path(sc.system, sc.x0, nz)
    res = check_lemma1(series, path, integrate_jacobian(sc.system, path, nz))
    assert res[0] == 0.0
    assert res.max() < 0.05


def test_jacobian_csv():
    system = linear(A)
    nz = generate_noise(0, 0.1, 0.05, 1)
    path = integrate_path(system, np.ones(2), nz)
    buf = io.StringIO()
    write_jacobian_csv([(path, integrate_jacobian(system, path, nz))], buf)
    assert buf.getvalue().splitlines()[0] == "path,t,det,J11,J12,J21,J22"
