"""Exponential QQ coordinates and a scalar summary of QQ-plot curvature."""

from __future__ import annotations

import numpy as np


def exponential_qq(excesses, sigma: float = 1.0):
    """Theoretical quantiles ``-sigma log(1 - i/(n+1))`` and sorted excesses."""
    y = np.sort(np.asarray(excesses, dtype=float))
    n = y.size
    i = np.arange(1, n + 1)
    return -sigma * np.log1p(-i / (n + 1.0)), y


def _ls_slope(x, y):
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def qq_bend(excesses) -> float:
    """Least-squares QQ slope on the upper half minus that on the lower half.

    Zero (up to noise) for exponential data; positive when the plot is convex.
    """
    x, y = exponential_qq(excesses)
    if y.size < 4:
        raise ValueError("qq_bend needs at least 4 points")
    h = y.size // 2
    return _ls_slope(x[h:], y[h:]) - _ls_slope(x[:h], y[:h])
