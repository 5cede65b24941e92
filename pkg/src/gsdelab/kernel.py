"""Stochastic kernel of the integral invariant on a truncated grid.

The kernel ``rho(t, x)`` solves

    d rho = [-d_i(rho a_i) + 1/2 d_i d_j(rho B_ij)] dt - d_i(rho b_ik) dw_k
            + [rho(y(x)) |det dy/dx| - rho(x)] at jumps,

where ``B = b b^T`` and ``y(x)`` inverts ``y + g(t, y, mark) = x``.  The
solver is explicit in time: donor-cell fluxes for the drift, central second
differences for the diffusion and central first differences for the noise
term.  Boundary nodes are held at zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import _stencils as st
from .errors import MassLoss, PositivityLoss, RatioUndefined, UnstableDiscretization
from .grid import GridSpec, interpolate, trapezoid
from .model import inverse_jump_with_det
from .noise import refine_noise, walk

C_CFL = 1.0


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Node values of a density (or of its logarithm when ``log`` is set)."""

    grid: GridSpec
    values: np.ndarray
    time: float = 0.0
    log: bool = False

    @classmethod
    def from_function(cls, grid, func, time=0.0, normalize=False):
        values = np.asarray(func(grid.nodes), dtype=float)
        values = np.broadcast_to(values, grid.shape).copy()
        if normalize:
            values /= trapezoid(values, grid)
        return cls(grid, values, time)

    def density(self):
        return np.exp(self.values) if self.log else self.values

    def at(self, points, order=3, outside="raise"):
        return interpolate(self.values, self.grid, points, order=order, outside=outside, time=self.time)


def check_normalization(rho: GridDensity):
    """Trapezoidal mass of the density."""
    return float(trapezoid(rho.density(), rho.grid))


def gaussian_bump(mean, std):
    """Normalised isotropic Gaussian as a node-array function."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    std = float(std)

    def func(x):
        r2 = np.sum((x - mean) ** 2, axis=-1)
        return np.exp(-0.5 * r2 / std**2) / (2 * np.pi * std**2) ** (len(mean) / 2)

    return func


def _coarsened(noise, h):
    return noise if h is None else refine_noise(h, noise)


def check_cfl(system, grid, h, t=0.0, c_cfl=C_CFL):
    """Raise :class:`UnstableDiscretization` if the explicit step is too large.

    Requires ``h * sum_d max|a_d| / dx_d <= 1`` and
    ``h * sum_d max B_dd / dx_d**2 <= c_cfl``.
    """
    nodes = grid.nodes
    spacing = np.asarray(grid.spacing)
    a = np.abs(system.a(t, nodes)).reshape(-1, grid.ndim).max(axis=0)
    advective = h * np.sum(a / spacing)
    diffusive = 0.0
    if not system.b.is_zero:
        big_b = system.diffusion_matrix(t, nodes)
        diag = np.diagonal(big_b, axis1=-2, axis2=-1).reshape(-1, grid.ndim).max(axis=0)
        diffusive = h * np.sum(diag / spacing**2)
    if advective > 1.0 + 1e-12 or diffusive > c_cfl + 1e-12:
        raise UnstableDiscretization(
            f"step {h:g} too large: advective number {advective:.3f} (max 1), diffusive number {diffusive:.3f} (max {c_cfl})"
        )
    return advective, diffusive


def _density_step(system, grid, rho, t, dt, dw):
    """One explicit Euler update of the interior nodes (in place)."""
    nd = grid.ndim
    sp = grid.spacing
    nodes = grid.nodes
    a = system.a(t, nodes)
    drift = 0.0
    for d in range(nd):
        drift = drift - st.conservative_divergence(rho, a[..., d], d, sp, nd)
    noise_term = 0.0
    if not system.b.is_zero:
        b = system.b(t, nodes)
        big_b = np.einsum("...ik,...jk->...ij", b, b)
        drift = drift + 0.5 * st.second_order_conservative(rho, big_b, sp, nd)
        for k in range(system.m):
            flux = 0.0
            for d in range(nd):
                flux = flux + st.central(rho * b[..., d, k], d, sp, nd)
            noise_term = noise_term - flux * dw[k]
    st.at(rho, [0] * nd)[...] += drift * dt + noise_term


def _density_jump(system, grid, rho, tau, mark, order):
    y, det = inverse_jump_with_det(system, tau, grid.nodes, mark)
    new = interpolate(rho, grid, y, order=order, outside="fill", fill=0.0) * np.abs(det)
    _zero_boundary(new, grid.ndim)
    return new


def _zero_boundary(arr, ndim):
    for d in range(ndim):
        index = [slice(None)] * ndim
        index[d] = 0
        arr[tuple(index)] = 0.0
        index[d] = -1
        arr[tuple(index)] = 0.0


def _run(noise, T, values, step_fn, jump_fn, grid, save_every, log=False):
    steps = noise.steps if T is None else int(round(T / noise.step))
    state = {"v": values}
    snaps = [GridDensity(grid, values.copy(), 0.0, log)]

    def on_step(t, dt, dw, idx):
        step_fn(state["v"], t, dt, dw[0])

    def on_jump(tau, mark, idx):
        state["v"] = jump_fn(state["v"], tau, mark)

    def on_grid(n):
        if (n + 1) % save_every == 0 or n + 1 == steps:
            snaps.append(GridDensity(grid, state["v"].copy(), (n + 1) * noise.step, log))

    walk([noise], on_step, on_jump, on_grid, steps=steps)
    return snaps


def evolve_kernel(
    system,
    rho0: GridDensity,
    noise,
    T=None,
    h=None,
    save_every=1,
    c_cfl=C_CFL,
    mass_fail=0.25,
    interp_order=3,
):
    """Evolve the integral-invariant kernel; returns snapshots at grid times.

    ``h`` (optional) coarsens ``noise`` with :func:`refine_noise` so the
    kernel stays coupled to paths run on the finer realisation.
    """
    noise = _coarsened(noise, h)
    grid = rho0.grid
    check_cfl(system, grid, noise.step, c_cfl=c_cfl)
    values = np.array(rho0.values, dtype=float)
    _zero_boundary(values, grid.ndim)
    mass0 = trapezoid(values, grid)

    def step_fn(v, t, dt, dw):
        _density_step(system, grid, v, t, dt, dw)

    def jump_fn(v, tau, mark):
        return _density_jump(system, grid, v, tau, mark, interp_order)

    snaps = _run(noise, T, values, step_fn, jump_fn, grid, save_every)
    for snap in snaps:
        if not np.all(np.isfinite(snap.values)):
            raise UnstableDiscretization(f"kernel became non-finite by t={snap.time}")
        drift = abs(trapezoid(snap.values, grid) - mass0)
        if drift > mass_fail:
            raise MassLoss(f"mass drifted by {drift:.3g} at t={snap.time}")
    return snaps


def evolve_log_kernel(system, rho0: GridDensity, noise, T=None, h=None, save_every=1, c_cfl=C_CFL, interp_order=3):
    """Evolve ``ln rho`` directly; ``exp`` of the result tracks :func:`evolve_kernel`.

    With ``v = a - c`` (``c`` the Itô correction, see
    :meth:`SdeSystem.ito_correction`) and ``div_k = d_i b_ik`` the equation
    stepped is

        dL = [-div a - v_j d_j L + 1/2 B_ij d_ij L + 1/2 d_ij B_ij
              - 1/2 sum_k div_k^2] dt - (div_k + b_jk d_j L) dw_k

    plus ``L <- L(y(x)) + ln|det dy/dx|`` at jumps.  Boundary layers are
    filled by linear extrapolation.
    """
    noise = _coarsened(noise, h)
    grid = rho0.grid
    nd = grid.ndim
    sp = grid.spacing
    check_cfl(system, grid, noise.step, c_cfl=c_cfl)
    inner = st.at(np.asarray(rho0.values), [0] * nd)
    if np.any(inner <= 0):
        raise PositivityLoss("initial kernel must be strictly positive on the grid interior")
    values = np.zeros(grid.shape)
    with np.errstate(divide="ignore"):
        st.at(values, [0] * nd)[...] = np.log(inner)
    st.extrapolate_boundary(values, nd)
    nodes = grid.nodes
    inner_nodes = st.at(nodes, [0] * nd)

    def coefficients(t):
        a = system.a(t, inner_nodes)
        div_a = np.trace(system.a.jacobian(t, inner_nodes), axis1=-2, axis2=-1)
        if system.b.is_zero:
            return a, div_a, None, None, None, 0.0
        b_full = system.b(t, nodes)
        big_b_full = np.einsum("...ik,...jk->...ij", b_full, b_full)
        b = st.at(b_full, [0] * nd)
        big_b = st.at(big_b_full, [0] * nd)
        db = system.b.jacobian(t, inner_nodes)
        div_b = np.einsum("...iki->...k", db)
        v = a - np.einsum("...ik,...jki->...j", b, db)
        curvature = 0.0
        for i in range(nd):
            curvature = curvature + st.second(big_b_full[..., i, i], i, sp, nd)
            for j in range(i + 1, nd):
                curvature = curvature + 2.0 * st.mixed(big_b_full[..., i, j], i, j, sp, nd)
        source = 0.5 * curvature - 0.5 * np.sum(div_b**2, axis=-1)
        return v, div_a, b, big_b, div_b, source

    def step_fn(L, t, dt, dw):
        v, div_a, b, big_b, div_b, source = coefficients(t)
        drift = -div_a + source
        for d in range(nd):
            drift = drift - v[..., d] * st.upwind_gradient(L, d, v[..., d], sp, nd)
        noise_term = 0.0
        if b is not None:
            drift = drift + 0.5 * st.second_order(L, big_b, sp, nd)
            grad = np.stack([st.central(L, d, sp, nd) for d in range(nd)], axis=-1)
            for k in range(system.m):
                noise_term = noise_term - (div_b[..., k] + np.sum(b[..., :, k] * grad, axis=-1)) * dw[k]
        st.at(L, [0] * nd)[...] += drift * dt + noise_term
        st.extrapolate_boundary(L, nd)

    def jump_fn(L, tau, mark):
        y, det = inverse_jump_with_det(system, tau, nodes, mark)
        if np.any(det == 0):
            raise PositivityLoss("jump transform collapses volume")
        return interpolate(L, grid, y, order=interp_order, outside="extrapolate") + np.log(np.abs(det))

    snaps = _run(noise, T, values, step_fn, jump_fn, grid, save_every, log=True)
    for snap in snaps:
        if not np.all(np.isfinite(snap.values)):
            raise UnstableDiscretization(f"log-kernel became non-finite by t={snap.time}")
    return snaps


@dataclass(frozen=True, eq=False)
class KernelCollection:
    """``n + 1`` kernel series sharing one grid and one realisation."""

    series: list
    noise_checksum: str = ""
    gram: np.ndarray = field(default=None)

    def __post_init__(self):
        grids = {s[0].grid for s in self.series}
        if len(grids) != 1:
            raise ValueError("kernels must share one grid")
        initial = [s[0] for s in self.series]
        gram = np.array([[trapezoid(p.values * q.values, p.grid) for q in initial] for p in initial])
        object.__setattr__(self, "gram", gram)
        if np.linalg.matrix_rank(gram, tol=1e-10 * np.max(np.abs(gram))) < len(initial):
            raise ValueError("initial kernels are not linearly independent")

    @property
    def grid(self):
        return self.series[0][0].grid

    @classmethod
    def evolve(cls, system, initial, noise, **kwargs):
        """Evolve every initial kernel under the same realisation."""
        if len(initial) != system.n + 1:
            raise ValueError(f"a complete collection needs n + 1 = {system.n + 1} kernels")
        series = [evolve_kernel(system, rho0, noise, **kwargs) for rho0 in initial]
        return cls(series, noise.checksum())


@dataclass(frozen=True, eq=False)
class RatioField:
    """``rho_l / rho_{n+1}`` over a kernel series."""

    numerator: list
    denominator: list
    ratio_floor: float = 1e-8

    @property
    def times(self):
        return np.array([s.time for s in self.numerator])

    def values(self, k):
        """Node ratios at snapshot ``k``; NaN where the denominator is below the floor."""
        num = self.numerator[k].values
        den = self.denominator[k].values
        out = np.full(num.shape, np.nan)
        ok = den >= self.ratio_floor
        out[ok] = num[ok] / den[ok]
        return out

    def at(self, k, points):
        """Ratio of the interpolated kernels at ``points``."""
        num = self.numerator[k].at(points)
        den = self.denominator[k].at(points)
        low = den < self.ratio_floor
        if np.any(low):
            raise RatioUndefined(f"denominator below {self.ratio_floor:g} at t={self.numerator[k].time}", points=np.asarray(points)[low])
        return num / den


def build_first_integrals(collection: KernelCollection, ratio_floor=1e-8):
    """The ``n`` kernel ratios ``rho_l / rho_{n+1}``."""
    last = collection.series[-1]
    return [RatioField(s, last, ratio_floor) for s in collection.series[:-1]]


def write_density_snapshots(series, out_dir, every=1, prefix="density", noise_checksum=""):
    """One CSV per snapshot plus ``<prefix>_manifest.json``."""
    import os

    grid = series[0].grid
    files, times, masses = [], [], []
    for k, snap in enumerate(series):
        if k % every and k != len(series) - 1:
            continue
        name = f"{prefix}_{snap.time:.6f}.csv"
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow([f"x{i + 1}" for i in range(grid.ndim)] + ["value"])
            for x, v in zip(grid.nodes.reshape(-1, grid.ndim), snap.values.reshape(-1)):
                out.writerow([repr(float(c)) for c in x] + [repr(float(v))])
        files.append(name)
        times.append(snap.time)
        masses.append(check_normalization(snap))
    manifest = {
        "grid": {"lower": grid.lower, "upper": grid.upper, "cells": grid.cells},
        "times": times,
        "files": files,
        "mass": masses,
        "noise_checksum": noise_checksum,
        "log": bool(series[0].log),
    }
    with open(os.path.join(out_dir, f"{prefix}_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest
