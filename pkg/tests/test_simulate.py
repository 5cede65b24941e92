import io

import numpy as np
import pytest

from gsdelab.errors import BlowUp
from gsdelab.model import JumpField, JumpMeasure, MatrixField, ScalarField, SdeSystem, VectorField
from gsdelab.noise import NoiseRealization, generate_ensemble, generate_noise, refine_noise
from gsdelab.scenarios import get_scenario, rotation_system, squared_norm
from gsdelab.simulate import apply_generalized_ito, integrate_ensemble, integrate_path, write_paths_csv

ROT_JUMP = rotation_system(0.3, intensity=2.0)


def shift_system(c):
    g = JumpField(lambda t, x, m: np.full(x.shape, c), 1)
    return SdeSystem(1, 1, VectorField.zero(1), MatrixField.zero(1, 1), g, JumpMeasure(3.0, lambda r, s: np.zeros((s, 1)), [0.0]))


def test_zero_dynamics_path_is_constant():
    sc = get_scenario("zero-dynamics")
    path = integrate_path(sc.system, sc.x0, generate_noise(1, 1.0, 0.01, 1))
    assert np.all(path.states == sc.x0)
    assert len(path.grid_indices) == 101


def test_deterministic_linear_matches_matrix_power():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    system = SdeSystem(2, 1, VectorField.linear(A), MatrixField.zero(2, 1))
    x0 = np.array([1.0, -0.5])
    path = integrate_path(system, x0, generate_noise(0, 1.0, 0.01, 1))
    expected = np.linalg.matrix_power(np.eye(2) + 0.01 * A, 100) @ x0
    assert np.allclose(path.final, expected, rtol=1e-13)


def test_linear_multiplicative_noise_product_formula():
    mu, sig = 0.2, 0.5
    system = SdeSystem(1, 1, VectorField.linear([[mu]]), MatrixField(lambda t, x: sig * x[..., None], (1, 1)))
    nz = generate_noise(4, 1.0, 0.01, 1)
    path = integrate_path(system, [2.0], nz)
    expected = 2.0 * np.prod(1 + mu * 0.01 + sig * nz.wiener_increments[:, 0])
    assert path.final[0] == pytest.approx(expected, rel=1e-12)


def test_constant_shift_jumps_count():
    system = shift_system(0.5)
    nz = generate_noise(6, 2.0, 0.1, 1, system.measure)
    path = integrate_path(system, [1.0], nz)
    assert path.final[0] == pytest.approx(1.0 + 0.5 * len(nz.jump_times))
    assert len(path.jump_indices) == len(nz.jump_times)
    assert np.allclose(path.states[path.jump_indices] - path.left_limits, 0.5)
    assert np.allclose(path.times[path.jump_indices], nz.jump_times)


def test_jump_on_grid_time_recorded_once():
    system = shift_system(1.0)
    nz = NoiseRealization(1.0, 0.5, np.zeros((2, 1)), [0.5], [[0.0]])
    path = integrate_path(system, [0.0], nz)
    assert path.times.tolist() == [0.0, 0.5, 1.0]
    assert path.states[:, 0].tolist() == [0.0, 1.0, 1.0]
    assert path.left_limits[0, 0] == 0.0


def test_ensemble_matches_single_paths():
    noises = generate_ensemble(21, 12, 1.0, 0.01, 1, ROT_JUMP.measure)
    x0 = np.random.default_rng(0).normal(size=(12, 2))
    ens = integrate_ensemble(ROT_JUMP, x0, noises)
    for p, nz in enumerate(noises):
        path = integrate_path(ROT_JUMP, x0[p], nz)
        assert np.max(np.abs(path.grid_states - ens.states[p])) <= 1e-12


def test_blowup_raised_and_tolerated():
    system = SdeSystem(1, 1, VectorField(lambda t, x: x**3, 1), MatrixField.zero(1, 1))
    nz = generate_noise(0, 1.0, 0.1, 1)
    with pytest.raises(BlowUp) as err, np.errstate(over="ignore", invalid="ignore"):
        integrate_path(system, [30.0], nz)
    assert err.value.last_finite_time is not None
    with np.errstate(over="ignore", invalid="ignore"):
        ens = integrate_ensemble(system, np.array([[30.0], [0.1]]), [nz, nz], tolerate_blowup=True)
    assert ens.n_blowup == 1
    assert np.isfinite(ens.states[1, -1, 0])


def test_ito_linear_function_exact():
    f = ScalarField(lambda t, x: 2 * x[..., 0] - x[..., 1], grad=lambda t, x: np.broadcast_to([2.0, -1.0], x.shape),
                    hess=lambda t, x: np.zeros(x.shape + (2,)), time_deriv=lambda t, x: np.zeros(x.shape[:-1]))
    nz = generate_noise(3, 1.0, 0.01, 1, ROT_JUMP.measure)
    path = integrate_path(ROT_JUMP, [1.0, 0.5], nz)
    ito = apply_generalized_ito(f, ROT_JUMP, path, nz)
    actual = f(0.0, path.states) - f(0.0, path.states[0])
    assert np.allclose(ito.cumulative, actual, atol=1e-12)


def test_ito_quadratic_error_shrinks():
    u = squared_norm()
    system = rotation_system(1.0)
    fine = generate_ensemble(5, 30, 1.0, 1 / 1024, 1)
    errs = []
    for h in (1 / 64, 1 / 256, 1 / 1024):
        gaps = []
        for nzf in fine:
            nz = refine_noise(h, nzf)
            path = integrate_path(system, [1.0, 0.0], nz)
            ito = apply_generalized_ito(u, system, path, nz)
            gaps.append(abs(ito.cumulative[-1] - (u(0, path.final) - 1.0)))
        errs.append(np.mean(gaps))
    assert errs[0] > errs[1] > errs[2]


def test_paths_csv_layout():
    nz = generate_noise(1, 0.2, 0.1, 1, shift_system(1.0).measure)
    path = integrate_path(shift_system(1.0), [0.0], nz)
    buf = io.StringIO()
    write_paths_csv([path, path], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "path,t,x1,jump"
    assert len(lines) == 1 + 2 * len(path.times)
