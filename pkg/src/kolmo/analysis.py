"""Small regression helpers shared by the verification code."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    residual: float  # max abs residual in log space

    def within(self, target, tol) -> bool:
        return abs(self.slope - target) <= tol


def loglog_slope(x, y) -> SlopeFit:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise InputError("need at least two matching samples")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InputError("log-log regression needs positive data")
    lx, ly = np.log(x), np.log(y)
    slope, icept = np.polyfit(lx, ly, 1)
    res = float(np.max(np.abs(ly - (slope * lx + icept))))
    return SlopeFit(float(slope), float(icept), res)
