"""Polynomial extrapolation to zero and log-log slope utilities."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

__all__ = ["neville_zero", "loglog_slopes", "least_squares_slope"]


def neville_zero(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Value at x = 0 of the polynomial interpolating (xs, ys).

    Neville's scheme; xs must be distinct.  Used to push sequences of
    estimates h -> v(h) to their h -> 0 limit.
    """
    if len(xs) != len(ys) or not xs:
        raise ValueError("need equal, nonempty abscissae and values")
    t = [float(y) for y in ys]
    x = [float(v) for v in xs]
    n = len(t)
    for m in range(1, n):
        for i in range(n - m):
            denom = x[i] - x[i + m]
            if denom == 0:
                raise ValueError("abscissae must be distinct")
            t[i] = (0.0 - x[i + m]) * (t[i] - t[i + 1]) / denom + t[i + 1]
    return t[0]


def loglog_slopes(xs: Sequence[float], ys: Sequence[float]) -> list[float]:
    """Slopes log(y_i/y_{i+1}) / log(x_i/x_{i+1}) between consecutive samples."""
    out = []
    for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
        if y0 <= 0 or y1 <= 0 or x0 <= 0 or x1 <= 0:
            raise ValueError("log-log slopes need positive data")
        out.append(math.log(y0 / y1) / math.log(x0 / x1))
    return out


def least_squares_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    lx = lx - lx.mean()
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))
