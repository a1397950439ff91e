"""Tiny ordinary-least-squares helper shared by the fit utilities."""

from __future__ import annotations

import numpy as np


def linear_fit(x, y) -> tuple[float, float, float]:
    """OLS fit y ~ slope*x + intercept; returns (slope, intercept, r_squared).

    A constant y has zero explained and zero total variance; r_squared is
    reported as 0.0 in that case rather than raising.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need at least two points")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise ValueError("all abscissae identical")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    sst = float(np.sum((y - ym) ** 2))
    if sst <= 1e-300:
        return slope, intercept, 0.0
    ssr = float(np.sum((y - slope * x - intercept) ** 2))
    return slope, intercept, max(0.0, 1.0 - ssr / sst)
