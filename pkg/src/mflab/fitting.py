"""Log-log rate fits for convergence tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    residuals: np.ndarray
    notes: tuple = field(default_factory=tuple)


def fit_rate(points) -> RateFit:
    """OLS fit of log(error) = intercept + slope * log(N).

    Points with zero error are dropped and reported in ``notes``.
    """
    pts = [(float(n), float(e)) for n, e in points]
    notes = tuple(f"excluded N={n:g}: zero error" for n, e in pts if e == 0.0)
    pts = [(n, e) for n, e in pts if e != 0.0]
    if any(e < 0 or n <= 0 for n, e in pts):
        raise ValueError("rate fits need positive N and non-negative errors")
    if len(pts) < 3:
        raise ValueError("rate fits need at least 3 points with positive error")
    X = np.log([n for n, _ in pts])
    Y = np.log([e for _, e in pts])
    A = np.vstack([X, np.ones_like(X)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, Y, rcond=None)
    res = Y - (slope * X + intercept)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), res, notes)
