"""Log-log slope fits for refinement studies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OrderFit:
    order: float
    constant: float
    residual: float
    exact: bool = False

    def as_dict(self):
        if self.exact:
            return {"order": "exact", "constant": 0.0, "residual": 0.0}
        return {"order": self.order, "constant": self.constant, "residual": self.residual}


def fit_order(levels, errors, min_levels=3):
    """Least-squares fit of ``error = C * level**order``.

    All-zero errors give an ``exact`` fit.  Zero errors mixed with positive
    ones cannot be fitted on a log scale and raise ``ValueError``.
    """
    levels = np.asarray(levels, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(levels) != len(errors):
        raise ValueError("levels and errors differ in length")
    if len(levels) < min_levels:
        raise ValueError(f"need at least {min_levels} refinement levels")
    if np.any(levels <= 0) or np.any(~np.isfinite(errors)) or np.any(errors < 0):
        raise ValueError("levels must be positive and errors finite and non-negative")
    if np.all(errors == 0):
        return OrderFit(np.inf, 0.0, 0.0, exact=True)
    if np.any(errors == 0):
        raise ValueError("cannot fit an order through zero errors")
    x, y = np.log(levels), np.log(errors)
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return OrderFit(float(slope), float(np.exp(intercept)), rms)
