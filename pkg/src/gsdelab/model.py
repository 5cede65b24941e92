"""Coefficient fields, jump measures and jump-diffusion systems.

Every evaluator in this module is vectorised: states are arrays whose last
axis has length ``n`` and any number of leading batch axes, e.g. ``(n,)`` for
a single point or ``(nx, ny, n)`` for all nodes of a 2-D grid.  Outputs keep
the batch axes and append the field's own shape:

==============  ===============================  =========================
field           call                             output trailing shape
==============  ===============================  =========================
ScalarField     ``f(t, x)``                      ``()``
VectorField     ``a(t, x)``                      ``(dim,)``
MatrixField     ``b(t, x)``                      ``(rows, cols)``
JumpField       ``g(t, x, mark)``                ``(dim,)``
==============  ===============================  =========================

Spatial derivatives are appended as a trailing axis of length ``n``.  When no
analytic derivative is registered, central finite differences with the
field's ``fd_step`` are used.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import InverseMapDivergence, NumericalEvaluation, SingularJumpMap

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
DET_TOL = 1e-10


def _ensure_finite(values, x, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = ~np.isfinite(values)
        # collapse trailing output axes onto the batch axes of x
        x = np.asarray(x, dtype=float)
        batch_ndim = x.ndim - 1
        if batch_ndim > 0 and bad.ndim > batch_ndim:
            bad = bad.reshape(bad.shape[:batch_ndim] + (-1,)).any(axis=-1)
        point = x[np.unravel_index(np.argmax(bad), bad.shape)] if batch_ndim > 0 else x
        raise NumericalEvaluation(f"{what} is not finite at x={point!r}", point=point)
    return values


def _fd_jacobian(func, x, step):
    """Central differences of ``func`` along each component of the last axis."""
    n = x.shape[-1]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        cols.append((np.asarray(func(x + e)) - np.asarray(func(x - e))) / (2.0 * step))
    return np.stack(cols, axis=-1)


def _fd_hessian(func, x, step):
    n = x.shape[-1]
    f0 = np.asarray(func(x))
    hess = np.empty(f0.shape + (n, n))
    for j in range(n):
        ej = np.zeros(n)
        ej[j] = step
        hess[..., j, j] = (np.asarray(func(x + ej)) - 2.0 * f0 + np.asarray(func(x - ej))) / step**2
        for k in range(j + 1, n):
            ek = np.zeros(n)
            ek[k] = step
            mixed = (
                np.asarray(func(x + ej + ek))
                - np.asarray(func(x + ej - ek))
                - np.asarray(func(x - ej + ek))
                + np.asarray(func(x - ej - ek))
            ) / (4.0 * step**2)
            hess[..., j, k] = mixed
            hess[..., k, j] = mixed
    return hess


@dataclass(frozen=True)
class ScalarField:
    """Scalar function ``f(t, x)`` with optional analytic derivatives.

    ``grad`` returns ``(..., n)``, ``hess`` returns ``(..., n, n)`` and
    ``time_deriv`` returns ``(...)``.
    """

    func: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    time_deriv: Optional[Callable] = None
    fd_step: float = 1e-5
    hess_step: float = 1e-4

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        return _ensure_finite(self.func(t, x), x, "scalar field")

    def gradient(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            out = self.grad(t, x)
        else:
            out = _fd_jacobian(lambda y: self.func(t, y), x, self.fd_step)
        return _ensure_finite(np.broadcast_to(out, x.shape), x, "gradient")

    def hessian(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.hess is not None:
            out = self.hess(t, x)
        else:
            out = _fd_hessian(lambda y: self.func(t, y), x, self.hess_step)
        return _ensure_finite(np.broadcast_to(out, x.shape + x.shape[-1:]), x, "hessian")

    def dt(self, t, x):
        """Partial time derivative."""
        x = np.asarray(x, dtype=float)
        if self.time_deriv is not None:
            out = self.time_deriv(t, x)
        else:
            s = self.fd_step
            out = (np.asarray(self.func(t + s, x)) - np.asarray(self.func(t - s, x))) / (2 * s)
        return _ensure_finite(np.broadcast_to(out, x.shape[:-1]), x, "time derivative")

    @property
    def analytic(self):
        return self.grad is not None and self.hess is not None

    def scaled(self, c):
        """Return ``c * f`` with all registered derivatives scaled alike."""

        def mul(fn):
            return None if fn is None else (lambda t, x: c * np.asarray(fn(t, x)))

        return replace(
            self,
            func=mul(self.func),
            grad=mul(self.grad),
            hess=mul(self.hess),
            time_deriv=mul(self.time_deriv),
        )


@dataclass(frozen=True)
class VectorField:
    """Vector function ``a(t, x)`` of output dimension ``dim``."""

    func: Callable
    dim: int
    jac: Optional[Callable] = None
    fd_step: float = 1e-5
    is_zero: bool = False

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(self.func(t, x), x.shape[:-1] + (self.dim,))
        return _ensure_finite(out, x, "vector field")

    def jacobian(self, t, x):
        """``out[..., i, j] = d a_i / d x_j``."""
        x = np.asarray(x, dtype=float)
        if self.jac is not None:
            out = self.jac(t, x)
        else:
            out = _fd_jacobian(lambda y: np.broadcast_to(self.func(t, y), y.shape[:-1] + (self.dim,)), x, self.fd_step)
        return _ensure_finite(np.broadcast_to(out, x.shape[:-1] + (self.dim, x.shape[-1])), x, "jacobian")

    @classmethod
    def zero(cls, n):
        return cls(lambda t, x: np.zeros(x.shape[:-1] + (n,)), n, jac=lambda t, x: np.zeros(x.shape[:-1] + (n, n)), is_zero=True)

    @classmethod
    def constant(cls, c):
        c = np.asarray(c, dtype=float)
        n = c.shape[0]
        return cls(lambda t, x: np.broadcast_to(c, x.shape[:-1] + (n,)).copy(), n, jac=lambda t, x: np.zeros(x.shape[:-1] + (n, x.shape[-1])))

    @classmethod
    def linear(cls, A):
        A = np.asarray(A, dtype=float)
        return cls(lambda t, x: x @ A.T, A.shape[0], jac=lambda t, x: np.broadcast_to(A, x.shape[:-1] + A.shape).copy())


@dataclass(frozen=True)
class MatrixField:
    """Matrix function ``b(t, x)`` of shape ``(rows, cols)``."""

    func: Callable
    shape: tuple
    jac: Optional[Callable] = None
    fd_step: float = 1e-5
    is_zero: bool = False

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(self.func(t, x), x.shape[:-1] + tuple(self.shape))
        return _ensure_finite(out, x, "matrix field")

    def jacobian(self, t, x):
        """``out[..., i, k, j] = d b_ik / d x_j``."""
        x = np.asarray(x, dtype=float)
        shape = tuple(self.shape)
        if self.jac is not None:
            out = self.jac(t, x)
        else:
            out = _fd_jacobian(lambda y: np.broadcast_to(self.func(t, y), y.shape[:-1] + shape), x, self.fd_step)
        return _ensure_finite(np.broadcast_to(out, x.shape[:-1] + shape + (x.shape[-1],)), x, "jacobian")

    @classmethod
    def zero(cls, n, m):
        return cls(
            lambda t, x: np.zeros(x.shape[:-1] + (n, m)),
            (n, m),
            jac=lambda t, x: np.zeros(x.shape[:-1] + (n, m, n)),
            is_zero=True,
        )

    @classmethod
    def constant(cls, c):
        c = np.asarray(c, dtype=float)
        return cls(
            lambda t, x: np.broadcast_to(c, x.shape[:-1] + c.shape).copy(),
            c.shape,
            jac=lambda t, x: np.zeros(x.shape[:-1] + c.shape + (x.shape[-1],)),
        )


@dataclass(frozen=True)
class JumpField:
    """Jump amplitude ``g(t, x, mark)``; ``mark`` is a 1-D array."""

    func: Callable
    dim: int
    jac: Optional[Callable] = None
    fd_step: float = 1e-5
    is_zero: bool = False

    def __call__(self, t, x, mark):
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(self.func(t, x, np.atleast_1d(mark)), x.shape[:-1] + (self.dim,))
        return _ensure_finite(out, x, "jump field")

    def jacobian(self, t, x, mark):
        """``out[..., i, j] = d g_i / d x_j``."""
        x = np.asarray(x, dtype=float)
        mark = np.atleast_1d(mark)
        if self.jac is not None:
            out = self.jac(t, x, mark)
        else:
            out = _fd_jacobian(
                lambda y: np.broadcast_to(self.func(t, y, mark), y.shape[:-1] + (self.dim,)), x, self.fd_step
            )
        return _ensure_finite(np.broadcast_to(out, x.shape[:-1] + (self.dim, x.shape[-1])), x, "jump jacobian")

    @classmethod
    def zero(cls, n):
        return cls(
            lambda t, x, mark: np.zeros(x.shape[:-1] + (n,)),
            n,
            jac=lambda t, x, mark: np.zeros(x.shape[:-1] + (n, n)),
            is_zero=True,
        )


@dataclass(frozen=True)
class JumpMeasure:
    """Finite-activity Poisson random measure on ``[0, T] x marks``.

    ``sampler(rng, size)`` must return an array of shape ``(size, mark_dim)``.
    ``mark_grid`` is a deterministic set of representative marks used by the
    first-integral condition checks.
    """

    intensity: float = 0.0
    sampler: Optional[Callable] = None
    mark_grid: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    mark_dim: int = 1

    def __post_init__(self):
        if not self.intensity >= 0:
            raise ValueError("jump intensity must be non-negative")
        grid = np.asarray(self.mark_grid, dtype=float).reshape(-1, self.mark_dim)
        object.__setattr__(self, "mark_grid", grid)
        if self.intensity > 0 and self.sampler is None:
            raise ValueError("a positive intensity needs a mark sampler")

    def sample(self, rng, size):
        if size == 0:
            return np.zeros((0, self.mark_dim))
        marks = np.asarray(self.sampler(rng, size), dtype=float).reshape(size, self.mark_dim)
        return marks


@dataclass(frozen=True)
class SdeSystem:
    """``dx = a dt + b dw + int g nu(dt, dmark)`` with ``x`` in R^n, ``w`` in R^m."""

    n: int
    m: int
    a: VectorField
    b: MatrixField
    g: Optional[JumpField] = None
    measure: Optional[JumpMeasure] = None

    def __post_init__(self):
        if self.g is None:
            object.__setattr__(self, "g", JumpField.zero(self.n))
        if self.measure is None:
            object.__setattr__(self, "measure", JumpMeasure())
        if self.a.dim != self.n or tuple(self.b.shape) != (self.n, self.m) or self.g.dim != self.n:
            raise ValueError(f"coefficient shapes inconsistent with n={self.n}, m={self.m}")
        if not self.g.is_zero and self.measure.intensity > 0 and len(self.measure.mark_grid) == 0:
            raise ValueError("a non-trivial jump field needs a non-empty mark_grid")
        x = np.zeros(self.n)
        self.a(0.0, x)
        self.b(0.0, x)
        if len(self.measure.mark_grid):
            self.g(0.0, x, self.measure.mark_grid[0])

    @property
    def has_jumps(self):
        return not self.g.is_zero and self.measure.intensity > 0

    def diffusion_matrix(self, t, x):
        """``B = b b^T`` with shape ``(..., n, n)``."""
        b = self.b(t, x)
        return np.einsum("...ik,...jk->...ij", b, b)

    def ito_correction(self, t, x):
        """``c_i = sum_{j,k} b_jk d b_ik / d x_j``.

        Drift minus half this vector is the Stratonovich drift.
        """
        b = self.b(t, x)
        db = self.b.jacobian(t, x)
        return np.einsum("...jk,...ikj->...i", b, db)

    def with_drift(self, extra: VectorField):
        """System with drift ``a + extra``."""
        a = self.a

        def jac(t, x):
            return a.jacobian(t, x) + extra.jacobian(t, x)

        new_a = VectorField(lambda t, x: a(t, x) + extra(t, x), self.n, jac=jac)
        return replace(self, a=new_a)


def eval_derivatives(fld, t, x, mark=None):
    """Spatial derivatives of any field at ``x``.

    Returns ``(gradient, hessian)`` for a :class:`ScalarField` and the
    Jacobian for vector, matrix and jump fields.
    """
    if isinstance(fld, ScalarField):
        return fld.gradient(t, x), fld.hessian(t, x)
    if isinstance(fld, JumpField):
        return fld.jacobian(t, x, mark)
    if isinstance(fld, (VectorField, MatrixField)):
        return fld.jacobian(t, x)
    raise TypeError(f"unsupported field type {type(fld).__name__}")


def derivative_discrepancy(fld, t, points, mark=None):
    """Max |analytic - central FD| over ``points`` for the registered derivatives."""
    points = np.asarray(points, dtype=float)
    if isinstance(fld, ScalarField):
        fd = ScalarField(fld.func, fd_step=fld.fd_step, hess_step=fld.hess_step)
        worst = 0.0
        if fld.grad is not None:
            worst = max(worst, np.max(np.abs(fld.gradient(t, points) - fd.gradient(t, points))))
        if fld.hess is not None:
            worst = max(worst, np.max(np.abs(fld.hessian(t, points) - fd.hessian(t, points))))
        return float(worst)
    if fld.jac is None:
        return 0.0
    fd = replace(fld, jac=None)
    if isinstance(fld, JumpField):
        return float(np.max(np.abs(fld.jacobian(t, points, mark) - fd.jacobian(t, points, mark))))
    return float(np.max(np.abs(fld.jacobian(t, points) - fd.jacobian(t, points))))


def inverse_jump_map(system, t, x, mark, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """Solve ``y + g(t, y, mark) = x`` for ``y`` by damped Newton iteration.

    ``x`` may carry batch axes; every point is solved independently.
    """
    x = np.asarray(x, dtype=float)
    g = system.g
    if g.is_zero:
        return x.copy()
    n = x.shape[-1]
    eye = np.eye(n)
    floor = 64 * np.finfo(float).eps * np.maximum(1.0, np.linalg.norm(x, axis=-1))
    y = x - g(t, x, mark)
    res = np.linalg.norm(y + g(t, y, mark) - x, axis=-1)
    for _ in range(max_iter):
        active = (res > tol) & (res > floor)
        if not active.any():
            return y
        r = y + g(t, y, mark) - x
        jac = eye + g.jacobian(t, y, mark)
        try:
            step = np.linalg.solve(jac, r[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise InverseMapDivergence(f"singular Newton system at t={t}, mark={mark}") from exc
        lam = np.ones(res.shape)
        for _ in range(30):
            y_new = y - lam[..., None] * step
            res_new = np.linalg.norm(y_new + g(t, y_new, mark) - x, axis=-1)
            worse = active & (res_new > res)
            if not worse.any():
                break
            lam = np.where(worse, 0.5 * lam, lam)
        y = np.where(active[..., None], y_new, y)
        res = np.where(active, res_new, res)
    if np.all((res <= tol) | (res <= floor)):
        return y
    worst = np.unravel_index(np.argmax(res), res.shape) if res.ndim else ()
    raise InverseMapDivergence(
        f"inverse jump map did not converge in {max_iter} iterations "
        f"(residual {float(np.max(res)):.3e} at x={x[worst]!r}, mark={mark})"
    )


def inverse_jump_with_det(system, t, x, mark, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, det_tol=DET_TOL):
    """Inverse point ``y`` together with ``det(dy/dx) = 1 / det(I + dg/dx(y))``."""
    y = inverse_jump_map(system, t, x, mark, tol=tol, max_iter=max_iter)
    if system.g.is_zero:
        return y, np.ones(np.shape(x)[:-1])
    n = y.shape[-1]
    forward = np.linalg.det(np.eye(n) + system.g.jacobian(t, y, mark))
    if np.any(np.abs(forward) < det_tol):
        raise SingularJumpMap(f"det(I + dg/dx) below {det_tol:g} at t={t}, mark={mark}")
    return y, 1.0 / forward


def jump_jacobian_det(system, t, x, mark, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, det_tol=DET_TOL):
    """Signed determinant of the Jacobian of the inverse jump transform at ``x``."""
    return inverse_jump_with_det(system, t, x, mark, tol, max_iter, det_tol)[1]
