"""Variational (Jacobian) flow, stochastic volume element and density-Jacobian residuals."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateJacobian, IllConditionedEstimate
from .grid import interpolate
from .noise import walk
from .simulate import Path, _Stepper

DET_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class JacobianPath:
    """``matrices[k] = dx(times[k]) / dx(0)`` and ``dets[k] = det matrices[k]``."""

    times: np.ndarray
    matrices: np.ndarray
    dets: np.ndarray


def _check(J, t, det_tol):
    if not np.all(np.isfinite(J)):
        raise DegenerateJacobian(f"non-finite Jacobian at t={t}")
    det = np.linalg.det(J)
    if np.any(np.abs(det) < det_tol):
        raise DegenerateJacobian(f"|det J| fell below {det_tol:g} at t={t}")
    return det


def _linear_part(system, t, x, dt, dw):
    """``da/dx dt + sum_k db_k/dx dw_k`` for states ``x`` of shape ``(..., n)``."""
    lin = system.a.jacobian(t, x) * dt
    if not system.b.is_zero:
        lin = lin + np.einsum("...ikj,...k->...ij", system.b.jacobian(t, x), dw)
    return lin


def integrate_jacobian(system, path: Path, noise, det_tol=DET_TOL):
    """Propagate ``J`` along a path produced from the same noise.

    Between jumps ``J <- J + (da/dx dt + sum_k db_k/dx dw_k) J`` evaluated at
    the current state; at a jump ``J <- (I + dg/dx(x-)) J``.
    """
    n = system.n
    eye = np.eye(n)
    mats = np.empty((len(path.times), n, n))
    mats[0] = eye
    J = eye.copy()
    cursor = {"k": 0, "j": 0}

    def on_step(t, dt, dw, idx):
        nonlocal J
        k = cursor["k"]
        J = J + _linear_part(system, t, path.states[k], dt, dw[0]) @ J
        _check(J, t + dt, det_tol)
        mats[k + 1] = J
        cursor["k"] = k + 1

    def on_jump(tau, mark, idx):
        nonlocal J
        j = cursor["j"]
        if not system.g.is_zero:
            J = (eye + system.g.jacobian(tau, path.left_limits[j], mark)) @ J
            _check(J, tau, det_tol)
        mats[path.jump_indices[j]] = J
        cursor["j"] = j + 1

    walk([noise], on_step, on_jump, steps=len(path.grid_indices) - 1)
    dets = np.linalg.det(mats)
    dets[0] = 1.0
    return JacobianPath(path.times, mats, dets)


@dataclass(frozen=True, eq=False)
class FlowEnsemble:
    """Grid-time states and Jacobian determinants of many initial points."""

    times: np.ndarray
    states: np.ndarray
    dets: np.ndarray

    @property
    def initial_points(self):
        return self.states[:, 0]

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        path0 = pairs[0][0]
        times = path0.times[path0.grid_indices]
        states = np.stack([p.states[p.grid_indices] for p, _ in pairs])
        dets = np.stack([jp.dets[p.grid_indices] for p, jp in pairs])
        return cls(times, states, dets)


def integrate_flow_ensemble(system, x0, noises, T=None, det_tol=DET_TOL):
    """Batched states and Jacobians at grid times for many (point, noise) pairs.

    Passing the same realisation for every member gives the stochastic flow
    of one sample ``omega`` evaluated at many initial points.
    """
    noises = list(noises)
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.tile(x0, (len(noises), 1))
    P, n = x0.shape
    h = noises[0].step
    steps = noises[0].steps if T is None else int(round(T / h))
    stepper = _Stepper(system, x0)
    J = np.tile(np.eye(n), (P, 1, 1))
    eye = np.eye(n)
    states = np.empty((P, steps + 1, n))
    dets = np.empty((P, steps + 1))
    states[:, 0] = x0
    dets[:, 0] = 1.0

    def on_step(t, dt, dw, idx):
        x = stepper.x[idx]
        J[idx] = J[idx] + _linear_part(system, t, x, dt, dw) @ J[idx]
        stepper.step(t, dt, dw, idx)

    def on_jump(tau, mark, idx):
        if not system.g.is_zero:
            J[idx] = (eye + system.g.jacobian(tau, stepper.x[idx], mark)) @ J[idx]
        stepper.jump(tau, mark, idx)

    def on_grid(k):
        states[:, k + 1] = stepper.x
        dets[:, k + 1] = _check(J, (k + 1) * h, det_tol)

    walk(noises, on_step, on_jump, on_grid, steps=steps)
    return FlowEnsemble(h * np.arange(steps + 1), states, dets)


def volume_integral(f, rho0, ensemble, proposal_pdf, ess_fraction=0.05):
    """Monte Carlo estimate of ``int rho0(y) f(t, x(t; y)) J(t; y) dy`` per grid time.

    ``ensemble`` is a :class:`FlowEnsemble` (or a list of ``(Path,
    JacobianPath)`` pairs) whose initial points were drawn from the density
    ``proposal_pdf``.  ``rho0`` weights the initial volume, e.g. the
    indicator of an initial box.
    """
    if not isinstance(ensemble, FlowEnsemble):
        ensemble = FlowEnsemble.from_pairs(ensemble)
    y = ensemble.initial_points
    weights = np.asarray(rho0(0.0, y), dtype=float) / np.asarray(proposal_pdf(y), dtype=float)
    total = weights.sum()
    ess = total**2 / np.sum(weights**2) if total > 0 else 0.0
    if ess < ess_fraction * len(weights):
        raise IllConditionedEstimate(f"effective sample size {ess:.1f} of {len(weights)}")
    series = np.empty(len(ensemble.times))
    for k, t in enumerate(ensemble.times):
        values = np.asarray(f(t, ensemble.states[:, k]), dtype=float)
        series[k] = np.mean(weights * values * ensemble.dets[:, k])
    return series


def check_lemma1(rho_series, path: Path, jacobian: JacobianPath, rho0=None):
    """``|rho(t, x(t; y)) det J(t; y) - rho(0, y)|`` at every snapshot time.

    ``rho_series`` holds grid densities from the kernel evolution driven by
    the same realisation as ``path``.  By default ``rho(0, y)`` is read from
    the first snapshot so the residual at ``t = 0`` vanishes identically.
    """
    y = path.states[0]
    first = rho_series[0]
    if rho0 is None:
        ref = float(interpolate(first.values, first.grid, y))
    else:
        ref = float(rho0(0.0, y))
    h = (path.times[path.grid_indices[1]] - path.times[0]) if len(path.grid_indices) > 1 else 1.0
    out = np.empty(len(rho_series))
    for i, snap in enumerate(rho_series):
        n = int(round(snap.time / h))
        row = path.grid_indices[n]
        value = float(interpolate(snap.values, snap.grid, path.states[row], time=snap.time))
        out[i] = abs(value * jacobian.dets[row] - ref)
    return out


def write_jacobian_csv(pairs, fh):
    """CSV with columns ``path, t, det, J11..Jnn``."""
    out = csv.writer(fh, lineterminator="\n")
    n = pairs[0][1].matrices.shape[1]
    out.writerow(["path", "t", "det"] + [f"J{i + 1}{j + 1}" for i in range(n) for j in range(n)])
    for p, (_, jp) in enumerate(pairs):
        for t, det, mat in zip(jp.times, jp.dets, jp.matrices):
            out.writerow([p, repr(float(t)), repr(float(det))] + [repr(float(v)) for v in mat.reshape(-1)])
