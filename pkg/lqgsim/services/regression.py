"""Weighted straight-line fits for log-log exponent extraction."""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..schemas.schemas import FitResult
from .errors import InsufficientDataError


def weighted_fit(x: Sequence[float], y: Sequence[float], se: Optional[Sequence[float]] = None, min_points: int = 2) -> FitResult:
    """Least-squares line y = slope*x + intercept with weights 1/se^2.

    Falls back to equal weights (and a residual-based slope error) when any
    standard error is zero or missing.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < max(min_points, 2):
        raise InsufficientDataError(f"need at least {max(min_points, 2)} points for a fit, got {len(x)}")

    weighted = se is not None and np.all(np.asarray(se, dtype=float) > 0)
    if weighted:
        coeffs, cov = np.polyfit(x, y, 1, w=1.0 / np.asarray(se, dtype=float), cov="unscaled")
        slope_se = math.sqrt(max(cov[0, 0], 0.0))
    elif len(x) > 3:
        coeffs, cov = np.polyfit(x, y, 1, cov=True)
        slope_se = math.sqrt(max(cov[0, 0], 0.0))
    else:
        coeffs = np.polyfit(x, y, 1)
        slope_se = 0.0
    return FitResult(slope=float(coeffs[0]), intercept=float(coeffs[1]), slope_se=slope_se, points=len(x))
