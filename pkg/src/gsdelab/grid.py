"""Truncated rectangular grids, quadrature and local polynomial interpolation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainEscape

MIN_CELLS = 8


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid; ``cells[d]`` intervals give ``cells[d] + 1`` nodes."""

    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        if not (len(lower) == len(upper) == len(cells)):
            raise ValueError("bounds and cell counts must have the same length")
        if not all(np.isfinite(lower + upper)) or any(u <= lo for lo, u in zip(lower, upper)):
            raise ValueError("grid bounds must be finite with upper > lower")
        if min(cells) < MIN_CELLS:
            raise ValueError(f"need at least {MIN_CELLS} cells per dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def box(cls, half_width, cells, ndim, center=0.0):
        center = np.broadcast_to(np.asarray(center, dtype=float), (ndim,))
        return cls(tuple(center - half_width), tuple(center + half_width), (cells,) * ndim)

    @property
    def ndim(self):
        return len(self.cells)

    @property
    def shape(self):
        return tuple(c + 1 for c in self.cells)

    @property
    def spacing(self):
        return tuple((u - lo) / c for lo, u, c in zip(self.lower, self.upper, self.cells))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self):
        return [np.linspace(lo, u, c + 1) for lo, u, c in zip(self.lower, self.upper, self.cells)]

    @cached_property
    def nodes(self):
        """Node coordinates, shape ``(*shape, ndim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        out = np.stack(mesh, axis=-1)
        out.flags.writeable = False
        return out

    def refined(self, factor=2):
        return GridSpec(self.lower, self.upper, tuple(c * factor for c in self.cells))

    def contains(self, points, margin=0.0):
        points = np.asarray(points, dtype=float)
        lo = np.asarray(self.lower) + margin
        hi = np.asarray(self.upper) - margin
        return np.all((points >= lo) & (points <= hi), axis=-1)


def trapezoid(values, grid: GridSpec):
    """Tensor trapezoidal rule over the grid axes (leading axes of ``values``)."""
    out = np.asarray(values, dtype=float)
    for d in range(grid.ndim):
        out = np.trapezoid(out, dx=grid.spacing[d], axis=0)
    return out


def _stencil(s, n_nodes, order):
    """Base index and 1-D Lagrange weights for fractional node positions ``s``."""
    if order == 1:
        base = np.clip(np.floor(s).astype(int), 0, n_nodes - 2)
        u = s - base
        return base, [1.0 - u, u]
    if order == 3:
        base = np.clip(np.floor(s).astype(int) - 1, 0, n_nodes - 4)
        u = s - base
        u1, u2, u3 = u - 1.0, u - 2.0, u - 3.0
        return base, [-u1 * u2 * u3 / 6.0, u * u2 * u3 / 2.0, -u * u1 * u3 / 2.0, u * u1 * u2 / 6.0]
    raise ValueError("interpolation order must be 1 or 3")


def interpolate(values, grid: GridSpec, points, order=3, outside="raise", fill=0.0, batched=False, time=None):
    """Evaluate a node field at arbitrary points with local Lagrange stencils.

    ``values`` has shape ``(*grid.shape, *trail)``; ``points`` has shape
    ``(..., ndim)``.  With ``batched=True`` the first axis of ``values`` and of
    ``points`` index independent fields (one point per field).  The cubic
    stencil reproduces cubic polynomials exactly; near the boundary it is
    shifted inward.  ``outside`` is ``"raise"`` (:class:`DomainEscape`),
    ``"fill"`` or ``"extrapolate"``.
    """
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float)
    lead = points.shape[:-1]
    pts = points.reshape(-1, grid.ndim)
    q = pts.shape[0]
    lower = np.asarray(grid.lower)
    spacing = np.asarray(grid.spacing)
    s = (pts - lower) / spacing
    n_nodes = np.asarray(grid.shape)
    tol = 1e-9
    out_mask = np.any((s < -tol) | (s > n_nodes - 1 + tol), axis=-1)
    if out_mask.any() and outside == "raise":
        bad = pts[np.argmax(out_mask)]
        raise DomainEscape(f"point {bad!r} outside grid [{grid.lower}, {grid.upper}]", escape_time=time)
    stencils = [_stencil(s[:, d], grid.shape[d], order) for d in range(grid.ndim)]
    trail = values.shape[grid.ndim + (1 if batched else 0):]
    result = np.zeros((q,) + trail)
    width = order + 1
    batch_index = np.arange(q) if batched else None
    for offsets in itertools.product(range(width), repeat=grid.ndim):
        weight = np.ones(q)
        index = []
        for d, o in enumerate(offsets):
            base, w = stencils[d]
            weight = weight * w[o]
            index.append(base + o)
        gathered = values[(batch_index, *index)] if batched else values[tuple(index)]
        result += weight.reshape((q,) + (1,) * len(trail)) * gathered
    if out_mask.any() and outside == "fill":
        result[out_mask] = fill
    return result.reshape(lead + trail)


def central_gradient(values, grid: GridSpec):
    """Second-order differences on interior nodes, one-sided on the boundary.

    Returns shape ``(*values.shape, ndim)``.
    """
    values = np.asarray(values, dtype=float)
    return np.stack([np.gradient(values, grid.spacing[d], axis=d, edge_order=2) for d in range(grid.ndim)], axis=-1)
