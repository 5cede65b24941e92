"""Built-in systems used by the CLI, the demos and the test-suite.

Each scenario isolates one mechanism: drift transport, Wiener rotation,
Poisson rotation, affine jumps.  Every entry carries a candidate first
integral and a default grid large enough for its kernel solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .grid import GridSpec
from .model import JumpField, JumpMeasure, MatrixField, ScalarField, SdeSystem, VectorField
from .wentzell import FieldSystem

SKEW = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SdeSystem
    candidate: ScalarField
    x0: np.ndarray
    grid: GridSpec
    horizon: float
    step: float
    rho0: Callable
    about: str = ""
    exact_kernel: Optional[Callable] = None

    @property
    def n(self):
        return self.system.n

    @property
    def m(self):
        return self.system.m


def squared_norm():
    """``u = |x|^2`` with analytic derivatives."""
    return ScalarField(
        lambda t, x: np.sum(x**2, axis=-1),
        grad=lambda t, x: 2.0 * x,
        hess=lambda t, x: np.broadcast_to(2.0 * np.eye(x.shape[-1]), x.shape + x.shape[-1:]),
        time_deriv=lambda t, x: np.zeros(x.shape[:-1]),
    )


def rotation(angle):
    """Rotation matrices ``R(angle)`` with shape ``(..., 2, 2)``."""
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def rotation_system(sigma=1.0, intensity=0.0, marks=16):
    """``dx = -sigma^2/2 x dt + sigma Q x dw + (R(mark) - I) x dN``.

    ``Q`` is the planar skew matrix, so ``|x|^2`` is conserved exactly by the
    continuous flow.  Marks are uniform on ``(-pi, pi)``.
    """
    a = VectorField.linear(-0.5 * sigma**2 * np.eye(2))
    sq = sigma * SKEW

    def b_func(t, x):
        return (x @ sq.T)[..., None]

    def b_jac(t, x):
        return np.broadcast_to(sq[:, None, :], x.shape[:-1] + (2, 1, 2))

    b = MatrixField(b_func, (2, 1), jac=b_jac)
    if intensity == 0:
        return SdeSystem(2, 1, a, b)

    def g_func(t, x, mark):
        return np.einsum("ij,...j->...i", rotation(mark[0]) - np.eye(2), x)

    def g_jac(t, x, mark):
        return np.broadcast_to(rotation(mark[0]) - np.eye(2), x.shape[:-1] + (2, 2))

    measure = JumpMeasure(
        intensity=intensity,
        sampler=lambda rng, size: rng.uniform(-np.pi, np.pi, size=(size, 1)),
        mark_grid=np.linspace(-np.pi, np.pi, marks),
    )
    return SdeSystem(2, 1, a, b, JumpField(g_func, 2, jac=g_jac), measure)


def gaussian_density(mean, std):
    mean = np.asarray(mean, dtype=float)

    def rho0(x):
        r2 = np.sum((np.asarray(x) - mean) ** 2, axis=-1)
        return np.exp(-0.5 * r2 / std**2) / (2 * np.pi * std**2) ** (len(mean) / 2)

    return rho0


def _zero_dynamics():
    system = SdeSystem(2, 1, VectorField.zero(2), MatrixField.zero(2, 1))
    u = ScalarField(
        lambda t, x: x[..., 0] + 0.5 * x[..., 1] ** 2,
        grad=lambda t, x: np.stack([np.ones(x.shape[:-1]), x[..., 1]], -1),
        hess=lambda t, x: np.broadcast_to(np.diag([0.0, 1.0]), x.shape + (2,)),
        time_deriv=lambda t, x: np.zeros(x.shape[:-1]),
    )
    return Scenario(
        "zero-dynamics", system, u, np.array([0.5, -0.3]), GridSpec.box(3.0, 32, 2), 1.0, 1e-2,
        gaussian_density([0.0, 0.0], 0.5), "a = b = g = 0; every function is conserved",
    )


def _pure_translation(speed=1.0):
    system = SdeSystem(1, 1, VectorField.constant([speed]), MatrixField.zero(1, 1))
    u = ScalarField(
        lambda t, x: x[..., 0] - speed * t,
        grad=lambda t, x: np.ones(x.shape),
        hess=lambda t, x: np.zeros(x.shape + (1,)),
        time_deriv=lambda t, x: np.full(x.shape[:-1], -speed),
    )
    return Scenario(
        "pure-translation", system, u, np.array([-1.0]), GridSpec((-4.0,), (4.0,), (256,)), 1.0, 1.0 / 64,
        gaussian_density([-1.0], 0.5), "constant drift; the kernel is a rigid translate",
        exact_kernel=lambda t, x: gaussian_density([-1.0 + speed * t], 0.5)(x),
    )


def _harmonic_oscillator():
    system = SdeSystem(2, 1, VectorField.linear(-SKEW), MatrixField.zero(2, 1))
    return Scenario(
        "harmonic-oscillator", system, squared_norm(), np.array([1.0, 0.0]), GridSpec.box(3.0, 48, 2), 1.0, 1e-3,
        gaussian_density([1.0, 0.0], 0.4), "deterministic rotation x1' = x2, x2' = -x1",
    )


def _rotation_diffusion():
    return Scenario(
        "rotation-diffusion", rotation_system(1.0), squared_norm(), np.array([1.0, 0.0]), GridSpec.box(3.0, 48, 2),
        1.0, 5e-4, gaussian_density([1.0, 0.0], 0.4), "Wiener rotation preserving |x|",
    )


def _rotation_jump():
    return Scenario(
        "rotation-jump", rotation_system(0.3, intensity=2.0), squared_norm(), np.array([1.0, 0.0]),
        GridSpec.box(3.0, 48, 2), 1.0, 1e-3, gaussian_density([1.0, 0.0], 0.4),
        "Wiener rotation plus Poisson rotations by uniform angles",
    )


def _affine_jump():
    kappa = -0.2
    system = SdeSystem(
        1,
        1,
        VectorField.linear([[-0.5]]),
        MatrixField.constant([[0.3]]),
        JumpField(lambda t, x, mark: kappa * x + mark[0], 1, jac=lambda t, x, mark: np.full(x.shape + (1,), kappa)),
        JumpMeasure(
            intensity=1.0,
            sampler=lambda rng, size: rng.normal(0.0, 0.1, size=(size, 1)),
            mark_grid=np.linspace(-0.3, 0.3, 7),
        ),
    )
    u = ScalarField(lambda t, x: x[..., 0], grad=lambda t, x: np.ones(x.shape), hess=lambda t, x: np.zeros(x.shape + (1,)))
    return Scenario(
        "1D-affine-jump", system, u, np.array([0.5]), GridSpec((-4.0,), (4.0,), (128,)), 1.0, 1e-3,
        gaussian_density([0.5], 0.4), "Ornstein-Uhlenbeck with affine jumps; x itself is not conserved",
    )


REGISTRY = {
    "zero-dynamics": _zero_dynamics,
    "pure-translation": _pure_translation,
    "harmonic-oscillator": _harmonic_oscillator,
    "rotation-diffusion": _rotation_diffusion,
    "rotation-jump": _rotation_jump,
    "1D-affine-jump": _affine_jump,
}


def get_scenario(name):
    try:
        return REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(REGISTRY)}") from None


def perturb_drift(system, eps):
    """``a -> a + eps x``; breaks conservation of ``|x|^2`` for ``eps != 0``."""
    if eps == 0:
        return system
    return system.with_drift(VectorField.linear(eps * np.eye(system.n)))


def perturbed(scenario, eps):
    return replace(scenario, system=perturb_drift(scenario.system, eps))


def polynomial_field(n, m):
    """A field system whose coefficients are polynomials of degree <= 2.

    Cubic interpolation and central differences are exact on such fields, so
    composition checks see only time-discretization error.  Returns the
    :class:`FieldSystem` and the initial field as a node function.
    """
    last = n - 1

    def z0(x):
        cross = -0.5 * x[..., 0] * x[..., 1] if n > 1 else 0.0
        return x[..., 0] ** 2 + cross + 0.3 * x[..., last]

    def pi(t, x):
        return (0.4 * x[..., last] - 0.2 * x[..., 0] ** 2)[..., None]

    def pi_jac(t, x):
        out = np.zeros(x.shape[:-1] + (1, n))
        out[..., 0, 0] = -0.4 * x[..., 0]
        out[..., 0, last] += 0.4
        return out

    def d(t, x):
        return np.broadcast_to((0.5 + 0.3 * x[..., 0])[..., None, None], x.shape[:-1] + (1, m))

    def d_jac(t, x):
        out = np.zeros(x.shape[:-1] + (1, m, n))
        out[..., 0] = 0.3
        return out

    def g(t, x, mark):
        return (0.2 * np.sin(mark[0]) * x[..., 0] + 0.1)[..., None]

    fs = FieldSystem(
        1,
        VectorField(pi, 1, jac=pi_jac),
        MatrixField(d, (1, m), jac=d_jac),
        JumpField(g, 1),
    )
    return fs, lambda x: z0(x)[..., None]
