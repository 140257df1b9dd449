"""Tests for the weighted log-log line fit."""
import sys
import os
import math
import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from lqgsim.services.errors import InsufficientDataError
from lqgsim.services.regression import weighted_fit


class TestWeightedFit:
    def test_exact_power_law(self):
        deltas = [2.0**-k for k in range(2, 7)]
        x = [math.log(1 / d) for d in deltas]
        y = [math.log(3.0 * d**-0.8) for d in deltas]
        fit = weighted_fit(x, y, [0.1] * len(x))
        assert fit.slope == pytest.approx(0.8, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert fit.points == 5

    def test_weights_pull_towards_precise_points(self):
        x = [0.0, 1.0, 2.0, 3.0]
        y = [0.0, 1.0, 2.0, 4.0]
        loose = weighted_fit(x, y, [0.01, 0.01, 0.01, 10.0])
        even = weighted_fit(x, y, [1.0, 1.0, 1.0, 1.0])
        assert abs(loose.slope - 1.0) < abs(even.slope - 1.0)

    def test_three_points_unweighted(self):
        fit = weighted_fit([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
        assert fit.slope == pytest.approx(1.0)
        assert fit.slope_se == 0.0

    def test_zero_se_falls_back_to_residuals(self):
        rng = np.random.default_rng(0)
        x = np.arange(6, dtype=float)
        y = 2.0 * x + rng.normal(0, 0.1, 6)
        fit = weighted_fit(x, y, [0.0] * 6)
        assert fit.slope == pytest.approx(2.0, abs=0.2)
        assert fit.slope_se > 0

    def test_too_few_points(self):
        with pytest.raises(InsufficientDataError):
            weighted_fit([1.0], [1.0])
        with pytest.raises(InsufficientDataError):
            weighted_fit([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], min_points=4)
