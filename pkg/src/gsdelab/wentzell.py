"""Random fields ``z(t, x)`` driven by the same noise as the state, and their
composition with trajectories.

A field obeys

    dz = Pi(t, x) dt + D_k(t, x) dw_k + int G(t, x, mark) nu(dt, dmark)

nodewise.  Its composition ``Z(t) = z(t, x(t))`` with a jump-diffusion path
can either be read off directly (interpolating the evolved field at the
path) or integrated from the generalized Itô-Wentzell differential

    dZ = (D_k + b_ik d_i z) dw_k
         + (Pi + a_i d_i z + b_ik d_i D_k + 1/2 B_ij d_ij z) dt
         + [G(x+) + z(x+) - z(x-)] at jumps,       x+ = x- + g(x-).

Both routes consume one :class:`NoiseRealization`, so their gap is pure
discretization error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .convergence import fit_order
from .errors import BlowUp, IllConditionedEstimate
from .grid import GridSpec, interpolate, trapezoid
from .jacobian_volume import integrate_flow_ensemble
from .model import JumpField, MatrixField, VectorField
from .noise import walk
from .simulate import _Stepper


@dataclass(frozen=True)
class FieldSystem:
    """Coefficients of a field SDE with ``n0`` output components.

    ``pi`` is a :class:`VectorField` of dimension ``n0``; ``d`` a
    :class:`MatrixField` of shape ``(n0, m)``; ``g`` a :class:`JumpField` of
    dimension ``n0``.
    """

    n0: int
    pi: VectorField
    d: MatrixField
    g: JumpField

    def __post_init__(self):
        if self.pi.dim != self.n0 or self.g.dim != self.n0 or self.d.shape[0] != self.n0:
            raise ValueError(f"field coefficients inconsistent with n0={self.n0}")

    @property
    def m(self):
        return self.d.shape[1]

    @classmethod
    def zero(cls, n0, m):
        return cls(n0, VectorField.zero(n0), MatrixField.zero(n0, m), JumpField.zero(n0))


@dataclass(frozen=True, eq=False)
class RandomFieldState:
    """Field values on grid nodes; ``values`` has shape ``(*grid.shape, n0)``."""

    grid: GridSpec
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[: self.grid.ndim] != self.grid.shape:
            raise ValueError("field values do not match the grid")
        if values.ndim == self.grid.ndim:
            values = values[..., None]
        if not np.all(np.isfinite(values)):
            raise BlowUp("non-finite field values", self.time)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid, func, time=0.0):
        return cls(grid, np.asarray(func(grid.nodes), dtype=float), time)

    @property
    def n0(self):
        return self.values.shape[-1]

    def at(self, points, outside="raise"):
        return interpolate(self.values, self.grid, points, outside=outside, time=self.time)


class _FieldBatch:
    """Nodewise Euler update of one field per batch member."""

    def __init__(self, fs, z0, count):
        self.fs = fs
        self.grid = z0.grid
        self.values = np.broadcast_to(z0.values, (count,) + z0.values.shape).copy()
        self.nodes = z0.grid.nodes

    def step(self, t, dt, dw, idx):
        fs = self.fs
        inc = fs.pi(t, self.nodes) * dt if not fs.pi.is_zero else 0.0
        if not fs.d.is_zero:
            d = fs.d(t, self.nodes)
            inc = inc + np.einsum("...rk,pk->p...r", d, dw)
        if np.ndim(inc):
            self.values[idx] += inc

    def jump(self, tau, mark, idx):
        if not self.fs.g.is_zero:
            self.values[idx] += self.fs.g(tau, self.nodes, mark)

    def check(self, t):
        if not np.all(np.isfinite(self.values)):
            raise BlowUp(f"field became non-finite by t={t}", t)


def evolve_field(fs: FieldSystem, z0: RandomFieldState, noise, T=None, save_every=1):
    """Snapshots of the field evolved along one realisation."""
    steps = noise.steps if T is None else int(round(T / noise.step))
    batch = _FieldBatch(fs, z0, 1)
    snaps = [RandomFieldState(z0.grid, z0.values.copy(), 0.0)]

    def on_grid(n):
        t = (n + 1) * noise.step
        batch.check(t)
        if (n + 1) % save_every == 0 or n + 1 == steps:
            snaps.append(RandomFieldState(z0.grid, batch.values[0].copy(), t))

    walk([noise], batch.step, batch.jump, on_grid, steps=steps)
    return snaps


def compose_direct(series, path):
    """``z(t, x(t))`` at each snapshot time, read from the evolved field."""
    h = path.times[path.grid_indices[1]] if len(path.grid_indices) > 1 else 1.0
    out = []
    for snap in series:
        row = path.grid_indices[int(round(snap.time / h))]
        out.append(snap.at(path.states[row]))
    return np.array(out)


def _field_jet(values, grid, x, second=True):
    """Value, gradient and Hessian of the cubic interpolant at ``x`` by central differences.

    ``values`` has shape ``(P, *grid, n0)`` and ``x`` shape ``(P, n)``.
    Returns arrays of shape ``(P, n0)``, ``(P, n0, n)`` and ``(P, n0, n, n)``.
    """
    n = grid.ndim
    step = np.asarray(grid.spacing)

    def z(offset):
        return interpolate(values, grid, x + offset, batched=True)

    z0 = z(np.zeros(n))
    grad = np.empty(z0.shape + (n,))
    hess = np.zeros(z0.shape + (n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step[i]
        zp, zm = z(e), z(-e)
        grad[..., i] = (zp - zm) / (2 * step[i])
        if second:
            hess[..., i, i] = (zp - 2 * z0 + zm) / step[i] ** 2
            for j in range(i + 1, n):
                f = np.zeros(n)
                f[j] = step[j]
                mixed = (z(e + f) - z(e - f) - z(f - e) + z(-e - f)) / (4 * step[i] * step[j])
                hess[..., i, j] = hess[..., j, i] = mixed
    return z0, grad, hess


@dataclass(frozen=True, eq=False)
class WentzellRun:
    """Grid-time series of both composition routes for a batch of paths.

    ``integrated[p, k]`` comes from the Itô-Wentzell differential and
    ``direct[p, k]`` from interpolating the evolved field at ``states[p, k]``.
    """

    times: np.ndarray
    states: np.ndarray
    integrated: np.ndarray
    direct: np.ndarray

    @property
    def gap(self):
        """Per-path Euclidean gap at the final time."""
        return np.linalg.norm(self.integrated[:, -1] - self.direct[:, -1], axis=-1)


def run_wentzell(fs: FieldSystem, system, z0: RandomFieldState, x0, noises, T=None):
    """Evolve fields, paths and both composition routes for a batch."""
    noises = list(noises)
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.tile(x0, (len(noises), 1))
    P = len(noises)
    h = noises[0].step
    steps = noises[0].steps if T is None else int(round(T / h))
    grid = z0.grid
    stepper = _Stepper(system, x0)
    fields = _FieldBatch(fs, z0, P)
    Z = interpolate(fields.values, grid, x0, batched=True)
    n0 = Z.shape[-1]
    integrated = np.empty((P, steps + 1, n0))
    direct = np.empty((P, steps + 1, n0))
    states = np.empty((P, steps + 1, system.n))
    integrated[:, 0] = direct[:, 0] = Z
    states[:, 0] = x0

    def on_step(t, dt, dw, idx):
        x = stepper.x[idx]
        z, grad, hess = _field_jet(fields.values[idx], grid, x, second=not system.b.is_zero)
        drift = np.einsum("pri,pi->pr", grad, system.a(t, x))
        if not fs.pi.is_zero:
            drift = drift + fs.pi(t, x)
        noise = 0.0
        if not system.b.is_zero:
            b = system.b(t, x)
            big_b = np.einsum("pik,pjk->pij", b, b)
            drift = drift + 0.5 * np.einsum("prij,pij->pr", hess, big_b)
            noise = np.einsum("pri,pik,pk->pr", grad, b, dw)
            if not fs.d.is_zero:
                # d D_rk / d x_i at the path point
                dd = fs.d.jacobian(t, x)
                drift = drift + np.einsum("pik,prki->pr", b, dd)
        if not fs.d.is_zero:
            noise = noise + np.einsum("prk,pk->pr", fs.d(t, x), dw)
        Z[idx] += drift * dt + noise
        fields.step(t, dt, dw, idx)
        stepper.step(t, dt, dw, idx)

    def on_jump(tau, mark, idx):
        x_left = stepper.x[idx]
        x_right = x_left + system.g(tau, x_left, mark)
        vals = fields.values[idx]
        jump = interpolate(vals, grid, x_right, batched=True) - interpolate(vals, grid, x_left, batched=True)
        if not fs.g.is_zero:
            jump = jump + fs.g(tau, x_right, mark)
        Z[idx] += jump
        fields.jump(tau, mark, idx)
        stepper.jump(tau, mark, idx)

    def on_grid(n):
        t = (n + 1) * h
        fields.check(t)
        states[:, n + 1] = stepper.x
        integrated[:, n + 1] = Z
        direct[:, n + 1] = interpolate(fields.values, grid, stepper.x, batched=True, time=t)

    walk(noises, on_step, on_jump, on_grid, steps=steps)
    return WentzellRun(h * np.arange(steps + 1), states, integrated, direct)


def integrate_wentzell(fs: FieldSystem, system, z0: RandomFieldState, x0, noise, T=None):
    """Composite ``z(t, x(t))`` at grid times, integrated from the Itô-Wentzell differential."""
    return run_wentzell(fs, system, z0, np.asarray(x0, dtype=float)[None], [noise], T).integrated[0]


def check_proposition1(field_series, kernel_series, system, noise, samples=4000, seed=0, ess_fraction=0.05):
    """``|int rho(t) z(t) dx - int rho(0, y) z(t, x(t; y)) dy|`` per snapshot.

    The left side is a grid quadrature.  The right side is a Monte Carlo
    estimate over initial points drawn uniformly on the grid box, carried by
    the stochastic flow of ``noise``.  Snapshot times of both series must
    coincide.
    """
    grid = kernel_series[0].grid
    rng = np.random.default_rng(seed)
    lower, upper = np.asarray(grid.lower), np.asarray(grid.upper)
    y = rng.uniform(lower, upper, size=(samples, grid.ndim))
    volume = float(np.prod(upper - lower))
    weights = interpolate(kernel_series[0].values, grid, y) * volume
    ess = weights.sum() ** 2 / np.sum(weights**2)
    if not ess >= ess_fraction * samples:
        raise IllConditionedEstimate(f"effective sample size {ess:.1f} of {samples}")
    flow = integrate_flow_ensemble(system, y, [noise] * samples)
    h = noise.step
    out = []
    for field, rho in zip(field_series, kernel_series):
        if abs(field.time - rho.time) > 1e-12:
            raise ValueError("field and kernel snapshots are not aligned")
        lhs = trapezoid(rho.values[..., None] * field.values, grid)
        k = int(round(field.time / h))
        z = interpolate(field.values, grid, flow.states[:, k], outside="fill")
        rhs = np.mean(weights[:, None] * z, axis=0)
        out.append(float(np.max(np.abs(lhs - rhs))))
    return np.array(out)


def wentzell_report(levels, errors, checksum, extra=None):
    """JSON-ready comparison report over step-size levels."""
    fit = fit_order(levels, errors)
    report = {
        "levels": [float(v) for v in levels],
        "mean_gap": [float(v) for v in errors],
        "fit": fit.as_dict(),
        "noise_checksum": checksum,
    }
    if extra:
        report.update(extra)
    return report


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
