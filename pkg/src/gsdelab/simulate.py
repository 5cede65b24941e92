"""Strong Euler-Maruyama paths with exact jump splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, NumericalEvaluation
from .noise import NoiseRealization, walk


@dataclass(frozen=True, eq=False)
class Path:
    """One trajectory recorded at grid times and at jump instants.

    ``states[k]`` is the right limit at ``times[k]``; for jump ``j`` the
    left limit is ``left_limits[j]`` and its row is ``jump_indices[j]``.
    ``grid_indices[n]`` is the row of grid time ``n * h``.
    """

    times: np.ndarray
    states: np.ndarray
    jump_indices: np.ndarray
    left_limits: np.ndarray
    grid_indices: np.ndarray

    @property
    def grid_states(self):
        return self.states[self.grid_indices]

    @property
    def final(self):
        return self.states[-1]


class _Stepper:
    """Euler-Maruyama state update shared by single paths and ensembles."""

    def __init__(self, system, x0, tolerate_blowup=False):
        self.system = system
        self.x = np.array(x0, dtype=float, ndmin=2)
        self.alive = np.ones(len(self.x), dtype=bool)
        self.tolerate = tolerate_blowup
        self.last_time = 0.0

    def _members(self, idx):
        if isinstance(idx, slice):
            return slice(None) if self.alive.all() else np.nonzero(self.alive)[0]
        return idx[self.alive[idx]]

    def _apply(self, update, members, t):
        if isinstance(members, np.ndarray) and members.size == 0:
            return
        try:
            new = update(self.x[members])
        except NumericalEvaluation:
            if not self.tolerate:
                raise BlowUp(f"coefficient evaluation failed after t={self.last_time}", self.last_time)
            rows = np.arange(len(self.x))[members]
            for r in rows:
                try:
                    self.x[r] = update(self.x[r : r + 1])[0]
                except NumericalEvaluation:
                    self.alive[r] = False
            self._sweep(t)
            return
        self.x[members] = new
        self._sweep(t)

    def _sweep(self, t):
        bad = self.alive & ~np.all(np.isfinite(self.x), axis=1)
        if bad.any():
            if not self.tolerate:
                raise BlowUp(f"state became non-finite after t={self.last_time}", self.last_time)
            self.alive &= ~bad
            self.x[bad] = np.nan
        self.last_time = t

    def step(self, t, dt, dw, idx):
        system = self.system
        members = self._members(idx)
        if not isinstance(idx, slice):
            dw = dw[self.alive[idx]]
        elif not isinstance(members, slice):
            dw = dw[members]

        def update(x):
            out = x + system.a(t, x) * dt
            if not system.b.is_zero:
                out = out + (system.b(t, x) * dw[:, None, :]).sum(axis=-1)
            return out

        self._apply(update, members, t + dt)

    def jump(self, tau, mark, idx):
        system = self.system
        if system.g.is_zero:
            return
        self._apply(lambda x: x + system.g(tau, x, mark), self._members(idx), tau)


def integrate_path(system, x0, noise: NoiseRealization, T=None):
    """Euler-Maruyama between jumps, ``x <- x + g(tau, x, mark)`` at jumps."""
    x0 = np.asarray(x0, dtype=float).reshape(system.n)
    steps = None if T is None else int(round(T / noise.step))
    stepper = _Stepper(system, x0)
    times, states, left, jumps = [0.0], [x0.copy()], [], []
    grid_idx = [0]

    def on_step(t, dt, dw, idx):
        stepper.step(t, dt, dw, idx)
        times.append(t + dt)
        states.append(stepper.x[0].copy())

    def on_jump(tau, mark, idx):
        left.append(stepper.x[0].copy())
        stepper.jump(tau, mark, idx)
        states[-1] = stepper.x[0].copy()
        jumps.append(len(states) - 1)

    def on_grid(n):
        times[-1] = (n + 1) * noise.step
        grid_idx.append(len(states) - 1)

    walk([noise], on_step, on_jump, on_grid, steps=steps)
    return Path(
        times=np.array(times),
        states=np.array(states),
        jump_indices=np.array(jumps, dtype=int),
        left_limits=np.array(left).reshape(len(left), system.n),
        grid_indices=np.array(grid_idx, dtype=int),
    )


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Grid-time states of a batch: ``states[p, n]`` at ``times[n]``."""

    times: np.ndarray
    states: np.ndarray
    alive: np.ndarray

    @property
    def n_blowup(self):
        return int((~self.alive).sum())


def integrate_ensemble(system, x0, noises, T=None, tolerate_blowup=False):
    """Integrate many realisations at once, recording grid times only.

    ``x0`` is either one state (shared) or one state per realisation.  Paths
    are numerically identical to :func:`integrate_path` on the same noise.
    """
    noises = list(noises)
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.tile(x0, (len(noises), 1))
    h = noises[0].step
    steps = noises[0].steps if T is None else int(round(T / h))
    stepper = _Stepper(system, x0, tolerate_blowup=tolerate_blowup)
    record = np.empty((len(noises), steps + 1, system.n))
    record[:, 0] = x0

    def on_grid(n):
        record[:, n + 1] = stepper.x

    walk(noises, stepper.step, stepper.jump, on_grid, steps=steps)
    return Ensemble(h * np.arange(steps + 1), record, stepper.alive.copy())


@dataclass(frozen=True, eq=False)
class ItoIncrements:
    """Increments of ``f(t, x(t))`` predicted by the generalized Itô formula.

    ``increments[k]`` covers ``(times[k-1], times[k]]`` including any jump
    at ``times[k]``; ``increments[0] = 0``.
    """

    times: np.ndarray
    increments: np.ndarray
    drift: np.ndarray
    diffusion: np.ndarray
    jumps: np.ndarray

    @property
    def cumulative(self):
        return np.cumsum(self.increments)


def ito_step_terms(f, system, t, x, dt, dw):
    """Drift and Wiener parts of the generalized Itô differential at ``x``.

    ``x`` has shape ``(..., n)`` and ``dw`` shape ``(..., m)``.
    """
    grad = f.gradient(t, x)
    drift = f.dt(t, x) + np.einsum("...i,...i->...", system.a(t, x), grad)
    diffusion = np.zeros(np.shape(x)[:-1])
    if not system.b.is_zero:
        b = system.b(t, x)
        big_b = np.einsum("...ik,...jk->...ij", b, b)
        drift = drift + 0.5 * np.einsum("...ij,...ij->...", big_b, f.hessian(t, x))
        diffusion = np.einsum("...i,...ik,...k->...", grad, b, dw)
    return drift * dt, diffusion


def ito_jump_term(f, system, tau, x_left, mark):
    return f(tau, x_left + system.g(tau, x_left, mark)) - f(tau, x_left)


def apply_generalized_ito(f, system, path: Path, noise: NoiseRealization):
    """Discretised right-hand side of the generalized Itô formula along ``path``."""
    count = len(path.times)
    drift = np.zeros(count)
    diffusion = np.zeros(count)
    jumps = np.zeros(count)
    cursor = {"k": 0, "j": 0}
    steps = len(path.grid_indices) - 1

    def on_step(t, dt, dw, idx):
        k = cursor["k"]
        d, s = ito_step_terms(f, system, t, path.states[k], dt, dw[0])
        drift[k + 1] += d
        diffusion[k + 1] += s
        cursor["k"] = k + 1

    def on_jump(tau, mark, idx):
        j = cursor["j"]
        jumps[path.jump_indices[j]] += ito_jump_term(f, system, tau, path.left_limits[j], mark)
        cursor["j"] = j + 1

    walk([noise], on_step, on_jump, steps=steps)
    return ItoIncrements(path.times, drift + diffusion + jumps, drift, diffusion, jumps)


def write_paths_csv(paths, fh):
    """CSV with columns ``path, t, x1..xn, jump`` (jump flag 0/1)."""
    out = csv.writer(fh, lineterminator="\n")
    n = paths[0].states.shape[1]
    out.writerow(["path", "t"] + [f"x{i + 1}" for i in range(n)] + ["jump"])
    for p, path in enumerate(paths):
        flags = np.zeros(len(path.times), dtype=int)
        flags[path.jump_indices] = 1
        for t, x, flag in zip(path.times, path.states, flags):
            out.writerow([p, repr(float(t))] + [repr(float(v)) for v in x] + [int(flag)])
