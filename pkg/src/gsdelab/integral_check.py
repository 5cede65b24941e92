"""Certification of stochastic first integrals.

A candidate ``u(t, x)`` is conserved along every path when three residuals
vanish identically:

* ``wiener``:  ``b_ik d_i u = 0`` for every Wiener component ``k``;
* ``drift``:   ``d_t u + d_i u (a_i - 1/2 c_i) = 0`` with ``c`` the Itô
  correction ``c_i = b_jk d_j b_ik``;
* ``jump``:    ``u(t, x) - u(t, x + g(t, x, mark)) = 0`` for every mark.

:func:`check_conditions` evaluates them on a grid, :func:`monte_carlo_constancy`
measures conservation along simulated paths and :func:`evolve_u_spde` moves
``u`` itself forward so that ``u(t, x(t))`` stays fixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _stencils as st
from .convergence import fit_order
from .errors import NumericalEvaluation, UnstableDiscretization
from .grid import GridSpec, interpolate
from .kernel import C_CFL, GridDensity, _coarsened, check_cfl
from .model import ScalarField, inverse_jump_map
from .noise import generate_ensemble, refine_noise, walk
from .simulate import integrate_ensemble

CONDITIONS = ("wiener", "drift", "jump")
ANALYTIC_TOL = 1e-8
FD_TOL = 1e-4
MAX_FAILED_FRACTION = 0.10


@dataclass(frozen=True)
class FirstIntegralCandidate:
    """A scalar field proposed as a first integral, with a display name."""

    u: ScalarField
    name: str = "u"

    @property
    def analytic(self):
        return self.u.analytic

    def default_tol(self):
        return ANALYTIC_TOL if self.analytic else FD_TOL


@dataclass(frozen=True)
class ConditionStat:
    max: float
    mean: float
    argmax: dict
    tol: float
    failed_nodes: int = 0

    @property
    def passed(self):
        return bool(self.max <= self.tol)

    def as_dict(self):
        return {
            "max": self.max,
            "mean": self.mean,
            "argmax": self.argmax,
            "tol": self.tol,
            "failed_nodes": self.failed_nodes,
            "verdict": "pass" if self.passed else "fail",
        }


@dataclass(frozen=True)
class ConditionReport:
    stats: dict
    nodes: int
    times: list
    marks: int

    @property
    def passed(self):
        return all(s.passed for s in self.stats.values())

    @property
    def failed(self):
        return [name for name, s in self.stats.items() if not s.passed]

    def __getitem__(self, name):
        return self.stats[name]

    def as_dict(self):
        return {
            "conditions": {name: s.as_dict() for name, s in self.stats.items()},
            "nodes": self.nodes,
            "times": list(self.times),
            "marks": self.marks,
            "verdict": "pass" if self.passed else "fail",
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def table(self):
        lines = [f"{'condition':<10} {'max':>12} {'mean':>12} {'tol':>10}  verdict"]
        for name, s in self.stats.items():
            lines.append(f"{name:<10} {s.max:12.4e} {s.mean:12.4e} {s.tol:10.1e}  {'pass' if s.passed else 'FAIL'}")
        lines.append(f"overall: {'pass' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def condition_residuals(system, u: ScalarField, t, x, marks):
    """Residual arrays ``(wiener, drift, jump)`` at points ``x`` of shape ``(N, n)``.

    ``wiener`` is the max over Wiener components and ``jump`` the max over
    ``marks``; each has shape ``(N,)``.
    """
    grad = u.gradient(t, x)
    if system.b.is_zero:
        wiener = np.zeros(len(x))
        transport = system.a(t, x)
    else:
        b = system.b(t, x)
        wiener = np.max(np.abs(np.einsum("...ik,...i->...k", b, grad)), axis=-1)
        transport = system.a(t, x) - 0.5 * system.ito_correction(t, x)
    drift = np.abs(u.dt(t, x) + np.einsum("...i,...i->...", grad, transport))
    jump = np.zeros(len(x))
    if not system.g.is_zero:
        base = u(t, x)
        for mark in marks:
            jump = np.maximum(jump, np.abs(base - u(t, x + system.g(t, x, mark))))
    return wiener, drift, jump


def _nodewise(system, u, t, x, marks):
    """Fallback evaluation one node at a time; failures become NaN."""
    out = np.full((3, len(x)), np.nan)
    for i in range(len(x)):
        try:
            res = condition_residuals(system, u, t, x[i : i + 1], marks)
        except (NumericalEvaluation, FloatingPointError):
            continue
        out[:, i] = [r[0] for r in res]
    return out


def check_conditions(system, candidate, check_grid, times, tol=None, random_marks=32, seed=0):
    """Evaluate the three residual fields on ``check_grid x times x marks``.

    ``check_grid`` is a :class:`GridSpec` or an ``(N, n)`` point array.  Marks
    are the measure's ``mark_grid`` plus ``random_marks`` draws from its
    sampler.  Nodes whose coefficients fail to evaluate count as failures;
    more than 10% failing nodes raises :class:`NumericalEvaluation`.
    """
    if isinstance(candidate, ScalarField):
        candidate = FirstIntegralCandidate(candidate)
    u = candidate.u
    tol = candidate.default_tol() if tol is None else tol
    tols = tol if isinstance(tol, dict) else {name: float(tol) for name in CONDITIONS}
    x = check_grid.nodes.reshape(-1, check_grid.ndim) if isinstance(check_grid, GridSpec) else np.asarray(check_grid, float)
    measure = system.measure
    marks = np.asarray(measure.mark_grid)
    if system.has_jumps and random_marks:
        marks = np.vstack([marks, measure.sample(np.random.default_rng(seed), random_marks)])
    times = [float(t) for t in np.atleast_1d(times)]
    blocks = []
    for t in times:
        try:
            blocks.append(np.array(condition_residuals(system, u, t, x, marks)))
        except NumericalEvaluation:
            blocks.append(_nodewise(system, u, t, x, marks))
    res = np.stack(blocks, axis=1)  # (3, times, N)
    failed = np.isnan(res).any(axis=0)
    if failed.mean() > MAX_FAILED_FRACTION:
        raise NumericalEvaluation(f"{failed.sum()} of {failed.size} node evaluations failed")
    stats = {}
    for c, name in enumerate(CONDITIONS):
        r = np.where(failed, -np.inf, res[c])
        k, i = np.unravel_index(np.argmax(r), r.shape)
        ok = res[c][~failed]
        stats[name] = ConditionStat(
            max=float(r[k, i]),
            mean=float(ok.mean()) if ok.size else float("nan"),
            argmax={"t": times[k], "x": [float(v) for v in x[i]]},
            tol=tols[name],
            failed_nodes=int(failed.sum()),
        )
    return ConditionReport(stats, len(x), times, len(marks))


@dataclass(frozen=True)
class ConstancyLevel:
    step: float
    mean: float
    std: float
    max: float
    paths: int
    blowups: int

    def as_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class ConstancyStats:
    """Sup-deviation statistics per step size, finest last."""

    levels: list
    deviations: list = field(repr=False)
    fit: object = None

    @property
    def means(self):
        return np.array([lv.mean for lv in self.levels])

    @property
    def steps(self):
        return np.array([lv.step for lv in self.levels])

    def plateau(self, ratio=0.9, max_order=0.4):
        """True when refinement stops reducing the mean deviation.

        The finest mean must stay above ``ratio`` times the coarsest and the
        fitted order must stay below ``max_order``.
        """
        means = self.means
        if means[0] == 0:
            return False
        slow = self.fit is not None and not self.fit.exact and self.fit.order < max_order
        return bool(means[-1] >= ratio * means[0] and slow)

    def as_dict(self):
        return {
            "levels": [lv.as_dict() for lv in self.levels],
            "fit": None if self.fit is None else self.fit.as_dict(),
            "plateau": self.plateau() if self.fit is not None else None,
        }


def sup_deviation(u, ensemble, relative=False):
    """``sup_t |u(t, x(t)) - u(0, x(0))|`` per path; NaN for dead paths."""
    values = np.stack([u(t, ensemble.states[:, k]) for k, t in enumerate(ensemble.times)], axis=1)
    dev = np.max(np.abs(values - values[:, :1]), axis=1)
    if relative:
        scale = np.abs(values[:, 0])
        dev = np.where(scale > 0, dev / np.where(scale > 0, scale, 1.0), dev)
    dev[~ensemble.alive] = np.nan
    return dev


def monte_carlo_constancy(system, candidate, x0, master_seed, paths, T, steps, relative=True, first_stream=0):
    """Sup-deviation of ``u`` along simulated paths for each step size in ``steps``.

    All levels use one noise ensemble drawn at the finest step and coarsened
    with :func:`refine_noise`, so the refinement study is pathwise coupled.
    Blown-up paths are excluded from the statistics and counted.  With
    three or more levels a convergence order of the mean is fitted.
    """
    u = candidate.u if isinstance(candidate, FirstIntegralCandidate) else candidate
    steps = sorted((float(h) for h in np.atleast_1d(steps)), reverse=True)
    fine = generate_ensemble(master_seed, paths, T, steps[-1], system.m, system.measure, first_stream)
    levels, deviations = [], []
    for h in steps:
        noises = fine if h == steps[-1] else [refine_noise(h, nz) for nz in fine]
        ens = integrate_ensemble(system, x0, noises, tolerate_blowup=True)
        dev = sup_deviation(u, ens, relative)
        ok = dev[np.isfinite(dev)]
        levels.append(
            ConstancyLevel(h, float(ok.mean()) if ok.size else float("nan"), float(ok.std()) if ok.size else float("nan"),
                           float(ok.max()) if ok.size else float("nan"), int(ok.size), int(ens.n_blowup))
        )
        deviations.append(dev)
    fit = fit_order([lv.step for lv in levels], [lv.mean for lv in levels]) if len(levels) >= 3 else None
    return ConstancyStats(levels, deviations, fit)


def evolve_u_spde(system, u0: GridDensity, noise, T=None, h=None, save_every=1, c_cfl=C_CFL, interp_order=3):
    """Evolve ``u`` so that ``u(t, x(t))`` is transported along the paths.

    Steps

        du = [-(a - c)_i d_i u + 1/2 B_ij d_ij u] dt - b_ik d_i u dw_k

    with ``c`` the Itô correction, upwind first derivatives in the drift,
    central ones in the noise term, and ``u <- u(y(x))`` at jumps where
    ``y + g(y) = x``.  Boundary nodes take the quadratic extrapolation of
    the interior increment.
    """
    noise = _coarsened(noise, h)
    grid = u0.grid
    nd = grid.ndim
    sp = grid.spacing
    check_cfl(system, grid, noise.step, c_cfl=c_cfl)
    steps = noise.steps if T is None else int(round(T / noise.step))
    nodes = grid.nodes
    inner = st.at(nodes, [0] * nd)
    values = np.array(u0.values, dtype=float)
    snaps = [GridDensity(grid, values.copy(), 0.0)]

    def on_step(t, dt, dw, idx):
        v = system.a(t, inner)
        noise_term = 0.0
        drift = 0.0
        if not system.b.is_zero:
            b = system.b(t, inner)
            v = v - system.ito_correction(t, inner)
            drift = 0.5 * st.second_order(values, np.einsum("...ik,...jk->...ij", b, b), sp, nd)
            grad = np.stack([st.central(values, d, sp, nd) for d in range(nd)], axis=-1)
            noise_term = -np.einsum("...ik,...i,k->...", b, grad, dw[0])
        for d in range(nd):
            drift = drift - v[..., d] * st.upwind_gradient(values, d, v[..., d], sp, nd)
        # boundary nodes receive the extrapolated interior increment
        inc = np.zeros(grid.shape)
        st.at(inc, [0] * nd)[...] = drift * dt + noise_term
        values[...] += st.extrapolate_boundary(inc, nd, degree=2)

    def on_jump(tau, mark, idx):
        y = inverse_jump_map(system, tau, nodes, mark)
        values[...] = interpolate(values, grid, y, order=interp_order, outside="extrapolate")

    def on_grid(n):
        if not np.all(np.isfinite(values)):
            raise UnstableDiscretization(f"u became non-finite by t={(n + 1) * noise.step}")
        if (n + 1) % save_every == 0 or n + 1 == steps:
            snaps.append(GridDensity(grid, values.copy(), (n + 1) * noise.step))

    walk([noise], on_step, on_jump, on_grid, steps=steps)
    return snaps
