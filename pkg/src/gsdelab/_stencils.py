"""Finite-difference stencils evaluated on interior grid nodes.

Every function takes full node arrays (grid shape possibly followed by
trailing axes) and returns values on the interior block ``[1:-1]`` along each
grid axis.
"""

import numpy as np


def at(arr, offsets):
    """Interior block of ``arr`` shifted by ``offsets`` (one int per grid axis)."""
    index = []
    for o, size in zip(offsets, arr.shape):
        stop = size - 1 + o
        index.append(slice(1 + o, stop if stop != size else None))
    return arr[tuple(index)]


def _unit(ndim, d, sign=1):
    e = [0] * ndim
    e[d] = sign
    return e


def central(arr, d, spacing, ndim):
    e = _unit(ndim, d)
    return (at(arr, e) - at(arr, _unit(ndim, d, -1))) / (2.0 * spacing[d])


def second(arr, d, spacing, ndim):
    return (at(arr, _unit(ndim, d)) - 2.0 * at(arr, [0] * ndim) + at(arr, _unit(ndim, d, -1))) / spacing[d] ** 2


def mixed(arr, d1, d2, spacing, ndim):
    def off(s1, s2):
        e = [0] * ndim
        e[d1] += s1
        e[d2] += s2
        return at(arr, e)

    return (off(1, 1) - off(1, -1) - off(-1, 1) + off(-1, -1)) / (4.0 * spacing[d1] * spacing[d2])


def upwind_gradient(arr, d, velocity, spacing, ndim):
    """One-sided difference taken from the side the flow ``velocity`` comes from."""
    centre = at(arr, [0] * ndim)
    back = (centre - at(arr, _unit(ndim, d, -1))) / spacing[d]
    fwd = (at(arr, _unit(ndim, d)) - centre) / spacing[d]
    return np.where(velocity > 0, back, fwd)


def conservative_divergence(rho, vel, d, spacing, ndim):
    """``d(rho * vel)/dx_d`` with donor-cell fluxes at averaged face velocities."""
    zero = [0] * ndim
    plus, minus = _unit(ndim, d), _unit(ndim, d, -1)
    v0 = at(vel, zero)
    face_p = 0.5 * (v0 + at(vel, plus))
    face_m = 0.5 * (at(vel, minus) + v0)
    r0 = at(rho, zero)
    flux_p = np.maximum(face_p, 0.0) * r0 + np.minimum(face_p, 0.0) * at(rho, plus)
    flux_m = np.maximum(face_m, 0.0) * at(rho, minus) + np.minimum(face_m, 0.0) * r0
    return (flux_p - flux_m) / spacing[d]


def second_order(arr, big_b, spacing, ndim):
    """``sum_ij big_b_ij d_i d_j arr`` with ``big_b`` sampled on interior nodes."""
    out = 0.0
    for i in range(ndim):
        out = out + big_b[..., i, i] * second(arr, i, spacing, ndim)
        for j in range(i + 1, ndim):
            out = out + 2.0 * big_b[..., i, j] * mixed(arr, i, j, spacing, ndim)
    return out


def second_order_conservative(rho, big_b, spacing, ndim):
    """``sum_ij d_i d_j (rho big_b_ij)`` with ``big_b`` given on all nodes."""
    out = 0.0
    for i in range(ndim):
        out = out + second(rho * big_b[..., i, i], i, spacing, ndim)
        for j in range(i + 1, ndim):
            out = out + 2.0 * mixed(rho * big_b[..., i, j], i, j, spacing, ndim)
    return out


def extrapolate_boundary(arr, ndim, degree=1):
    """Fill boundary layers by polynomial extrapolation from the interior (in place).

    ``degree`` 1 is linear, 2 reproduces quadratics exactly.
    """
    weights = {1: (2.0, -1.0), 2: (3.0, -3.0, 1.0)}[degree]
    for d in range(ndim):
        for edge, inward in ((0, 1), (-1, -1)):
            target = [slice(None)] * ndim
            target[d] = edge
            acc = 0.0
            for k, w in enumerate(weights, start=1):
                src = [slice(None)] * ndim
                src[d] = edge + inward * k
                acc = acc + w * arr[tuple(src)]
            arr[tuple(target)] = acc
    return arr
