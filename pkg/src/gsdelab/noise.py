"""Reproducible Wiener/Poisson realisations and the shared event driver.

A :class:`NoiseRealization` holds the Wiener increments on a uniform grid of
step ``h`` and the exact jump instants with their marks.  Every integrator in
the package consumes realisations through :func:`walk`, which splits grid
steps at jump instants.  Because all solvers see the same sub-steps and the
same increments, their outputs are pathwise coupled.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidDiscretization
from .model import JumpMeasure

_RATIO_TOL = 1e-9


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus per-path stream index."""

    master_seed: int
    stream_index: int = 0

    def generator(self):
        # Philox is counter based: each (seed, stream) pair owns its own key
        seq = np.random.SeedSequence(int(self.master_seed) & (2**64 - 1), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    horizon: float
    step: float
    wiener_increments: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray

    def __post_init__(self):
        w = np.array(self.wiener_increments, dtype=float, ndmin=2)
        times = np.array(self.jump_times, dtype=float).reshape(-1)
        marks = np.array(self.jump_marks, dtype=float)
        if marks.ndim != 2:
            marks = marks.reshape(len(times), -1) if len(times) else np.zeros((0, 1))
        if self.step <= 0 or self.horizon <= 0:
            raise InvalidDiscretization("horizon and step must be positive")
        if np.any(np.diff(times) < 0):
            raise ValueError("jump times must be sorted")
        if len(times) and (times[0] <= 0 or times[-1] > self.horizon * (1 + 1e-12)):
            raise ValueError("jump times must lie in (0, T]")
        for arr in (w, times, marks):
            arr.flags.writeable = False
        object.__setattr__(self, "wiener_increments", w)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "jump_marks", marks)
        grid = self.step * np.arange(self.steps + 1)
        # jump in (t_n, t_{n+1}] belongs to step n
        owner = np.clip(np.searchsorted(grid, times, side="left") - 1, 0, self.steps - 1)
        owner.flags.writeable = False
        object.__setattr__(self, "_owner", owner)

    @property
    def steps(self):
        return self.wiener_increments.shape[0]

    @property
    def m(self):
        return self.wiener_increments.shape[1]

    @property
    def grid_times(self):
        return self.step * np.arange(self.steps + 1)

    @property
    def jump_events(self):
        return [(float(t), mark) for t, mark in zip(self.jump_times, self.jump_marks)]

    def wiener_path(self):
        """``w(t_n)`` on the grid, shape ``(steps + 1, m)``."""
        return np.vstack([np.zeros((1, self.m)), np.cumsum(self.wiener_increments, axis=0)])

    def jumps_in_step(self, n):
        idx = np.nonzero(self._owner == n)[0]
        return [(float(self.jump_times[j]), self.jump_marks[j]) for j in idx]

    def checksum(self):
        digest = hashlib.sha256()
        digest.update(np.array([self.horizon, self.step], dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(self.wiener_increments, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(self.jump_times, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(self.jump_marks, dtype="<f8").tobytes())
        return digest.hexdigest()[:16]

    def truncated(self, T):
        """Realisation restricted to ``[0, T]`` (``T`` a multiple of the step)."""
        steps = _checked_steps(T, self.step)
        if steps > self.steps:
            raise InvalidDiscretization("requested horizon exceeds the realisation")
        keep = self.jump_times <= steps * self.step * (1 + 1e-12)
        return NoiseRealization(steps * self.step, self.step, self.wiener_increments[:steps], self.jump_times[keep], self.jump_marks[keep])


def _checked_steps(T, h):
    if not (h > 0 and T > 0):
        raise InvalidDiscretization(f"non-positive discretisation (T={T}, h={h})")
    steps = int(round(T / h))
    if steps < 1 or abs(steps * h - T) > _RATIO_TOL * max(T, 1.0):
        raise InvalidDiscretization(f"step {h} does not divide horizon {T}")
    return steps


def generate_noise(seed, T, h, m, measure: Optional[JumpMeasure] = None):
    """Draw one realisation; a pure function of ``seed``."""
    steps = _checked_steps(T, h)
    if isinstance(seed, int):
        seed = SeedSpec(seed)
    rng = seed.generator()
    wiener = rng.normal(0.0, np.sqrt(h), size=(steps, m))
    T = steps * h
    mark_dim = measure.mark_dim if measure is not None else 1
    if measure is None or measure.intensity == 0:
        return NoiseRealization(T, h, wiener, np.zeros(0), np.zeros((0, mark_dim)))
    count = int(rng.poisson(measure.intensity * T))
    # 1 - U lies in (0, 1]
    times = np.sort(T * (1.0 - rng.random(count)))
    marks = measure.sample(rng, count)
    return NoiseRealization(T, h, wiener, times, marks)


def generate_ensemble(master_seed, count, T, h, m, measure=None, first_stream=0):
    return [generate_noise(SeedSpec(master_seed, first_stream + i), T, h, m, measure) for i in range(count)]


def refine_noise(coarse_h, fine: NoiseRealization):
    """Coarse realisation whose increments are exact block sums of ``fine``.

    Jump events are shared unchanged, so solvers run on both levels are
    pathwise coupled.
    """
    ratio = coarse_h / fine.step
    r = int(round(ratio))
    if r < 1 or abs(r - ratio) > _RATIO_TOL * ratio:
        raise InvalidDiscretization(f"coarse step {coarse_h} is not a multiple of {fine.step}")
    if r == 1:
        return fine
    if fine.steps % r:
        raise InvalidDiscretization("coarse step does not divide the horizon")
    w = fine.wiener_increments.reshape(fine.steps // r, r, fine.m).sum(axis=1)
    return NoiseRealization(fine.horizon, fine.step * r, w, fine.jump_times, fine.jump_marks)


def save_noise_csv(noise: NoiseRealization, path):
    """Dump a realisation as CSV: header rows, then ``W`` and ``J`` records."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["#horizon", repr(float(noise.horizon))])
        out.writerow(["#step", repr(float(noise.step))])
        out.writerow(["#checksum", noise.checksum()])
        for row in noise.wiener_increments:
            out.writerow(["W"] + [repr(float(v)) for v in row])
        for t, mark in zip(noise.jump_times, noise.jump_marks):
            out.writerow(["J", repr(float(t))] + [repr(float(v)) for v in mark])


def load_noise_csv(path):
    horizon = step = None
    wiener, times, marks = [], [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            tag = row[0]
            if tag == "#horizon":
                horizon = float(row[1])
            elif tag == "#step":
                step = float(row[1])
            elif tag == "W":
                wiener.append([float(v) for v in row[1:]])
            elif tag == "J":
                times.append(float(row[1]))
                marks.append([float(v) for v in row[2:]])
    mark_dim = len(marks[0]) if marks else 1
    return NoiseRealization(horizon, step, np.array(wiener), np.array(times), np.array(marks).reshape(len(times), mark_dim))


def walk(
    noises: Sequence[NoiseRealization],
    on_step: Callable,
    on_jump: Callable,
    on_grid: Optional[Callable] = None,
    steps: Optional[int] = None,
):
    """Drive callbacks along the merged event timeline of a batch.

    ``on_step(t, dt, dw, idx)`` advances the members ``idx`` (an index array,
    or ``slice(None)`` for the whole batch) over ``[t, t + dt]`` with Wiener
    increments ``dw`` of shape ``(len(idx), m)``.  ``on_jump(tau, mark, idx)``
    applies a jump to ``idx``.  ``on_grid(n)`` fires once the batch reached
    grid time ``(n + 1) h``.  Inside a grid step the Wiener increment is
    apportioned to sub-steps in proportion to their length.
    """
    noises = list(noises)
    h = noises[0].step
    total = noises[0].steps if steps is None else steps
    for nz in noises:
        if abs(nz.step - h) > _RATIO_TOL * h or nz.steps < total:
            raise InvalidDiscretization("batch members must share step and cover the horizon")
    # members sharing one realisation are advanced together
    groups = {}
    for p, nz in enumerate(noises):
        groups.setdefault(id(nz), (nz, []))[1].append(p)
    groups = [(nz, np.array(members)) for nz, members in groups.values()]
    dW = np.stack([nz.wiener_increments[:total] for nz in noises])
    jumping_steps = {}
    for nz, members in groups:
        for n in np.unique(nz._owner):
            if n < total:
                jumping_steps.setdefault(int(n), []).append((nz, members))
    everyone = slice(None)
    batch = len(noises)
    for n in range(total):
        t0 = n * h
        special = jumping_steps.get(n)
        if special is None:
            on_step(t0, h, dW[:, n], everyone)
        else:
            busy = np.zeros(batch, dtype=bool)
            for _, members in special:
                busy[members] = True
            calm = np.nonzero(~busy)[0]
            if len(calm):
                on_step(t0, h, dW[calm, n], calm)
            for nz, members in special:
                t = t0
                dw = dW[members, n]
                for tau, mark in nz.jumps_in_step(n):
                    if tau > t:
                        on_step(t, tau - t, dw * ((tau - t) / h), members)
                        t = tau
                    on_jump(tau, mark, members)
                t1 = (n + 1) * h
                if t1 > t:
                    on_step(t, t1 - t, dw * ((t1 - t) / h), members)
        if on_grid is not None:
            on_grid(n)
