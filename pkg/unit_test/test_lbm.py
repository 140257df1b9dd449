"""Tests for Brownian paths, the Liouville clock and heat-kernel estimates."""
import sys
import os
import math
import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from lqgsim.models.models import EstimateMode, FieldEngine
from lqgsim.schemas.schemas import HeatKernelEstimate
from lqgsim.services.errors import DomainError, InsufficientDataError
from lqgsim.services.field import sample_stack
from lqgsim.services.lbm import (
    dt_halving_check,
    gaussian_hitting_oracle,
    heat_exponent_fit,
    heat_fit_points,
    hitting_probability,
    inverse_pcaf_index,
    lbm_at,
    pcaf_accumulate,
    sample_sbm,
    weight_grid,
)

T_GRID = [0.005, 0.01, 0.02, 0.04]


def synthetic_estimate(t, p_hat):
    return HeatKernelEstimate(t=t, r=0.05, q_hat=0.5, q_se=0.01, p_hat=p_hat, replicas=1000)


class TestBrownianPaths:
    def test_path_shape_and_start(self):
        traj = sample_sbm((0.5, 0.5), 1e-3, 0.01, seed=1)
        assert traj.positions.shape == (11, 2)
        assert tuple(traj.positions[0]) == (0.5, 0.5)
        assert traj.killed_at is None

    def test_same_seed_same_path(self):
        a = sample_sbm((0.5, 0.5), 1e-3, 0.05, seed=4, replica_index=2)
        b = sample_sbm((0.5, 0.5), 1e-3, 0.05, seed=4, replica_index=2)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_killed_on_exit(self):
        traj = sample_sbm((0.01, 0.5), 1e-3, 5.0, seed=0)
        assert traj.killed_at is not None
        assert len(traj.positions) == traj.killed_at

    def test_start_must_be_interior(self):
        with pytest.raises(DomainError):
            sample_sbm((0.0, 0.5), 1e-3, 0.1, seed=0)


class TestLiouvilleClock:
    def test_flat_clock_is_identity(self):
        traj = pcaf_accumulate(sample_sbm((0.5, 0.5), 1e-3, 0.01, seed=2), None, 0.0)
        np.testing.assert_allclose(traj.pcaf, np.arange(11) * 1e-3)

    def test_inverse_index(self):
        traj = pcaf_accumulate(sample_sbm((0.5, 0.5), 1e-3, 0.01, seed=2), None, 0.0)
        assert inverse_pcaf_index(traj, 0.0035) == 3
        assert inverse_pcaf_index(traj, 0.5) is None

    def test_lbm_interpolates(self):
        traj = pcaf_accumulate(sample_sbm((0.5, 0.5), 1e-3, 0.01, seed=2), None, 0.0)
        x, y = lbm_at(traj, 0.0035)
        expected = 0.5 * (traj.positions[3] + traj.positions[4])
        assert (x, y) == pytest.approx(tuple(expected))

    def test_weighted_clock_is_increasing(self, small_stack):
        weights = weight_grid(small_stack, 1.0)
        traj = pcaf_accumulate(sample_sbm((0.5, 0.5), 1e-3, 0.02, seed=3), weights, 1.0)
        assert traj.pcaf[0] == 0.0
        assert (np.diff(traj.pcaf) > 0).all()

    def test_clock_mean_equals_time(self):
        gamma, t = 0.5, 0.01
        traj = sample_sbm((0.5, 0.5), 1e-3, t, seed=2)
        clocks = []
        for seed in range(400):
            stack = sample_stack(FieldEngine.HAT_H, 32, 3, seed=seed, time_slices_per_octave=2, threads=1)
            clocks.append(pcaf_accumulate(traj, weight_grid(stack, gamma), gamma).pcaf[-1])
        clocks = np.asarray(clocks)
        assert abs(float(clocks.mean()) - t) < 4 * float(clocks.std(ddof=1)) / math.sqrt(len(clocks))

    def test_missing_clock(self):
        with pytest.raises(DomainError):
            inverse_pcaf_index(sample_sbm((0.5, 0.5), 1e-3, 0.01, seed=2), 0.001)


class TestHittingProbability:
    def test_flat_matches_gaussian(self):
        t, r = 0.01, 0.05
        est = hitting_probability((0.5, 0.5), (0.5, 0.5), t, r, 2000, 0.0, dt=1e-4, seed=3)
        exact = 1.0 - math.exp(-r * r / (2.0 * t))
        assert abs(est.q_hat - exact) < 4 * est.q_se

    def test_thread_count_does_not_change_estimate(self):
        kwargs = dict(dt=1e-4, seed=9)
        one = hitting_probability((0.4, 0.5), (0.5, 0.5), 0.01, 0.05, 5000, 0.0, threads=1, **kwargs)
        two = hitting_probability((0.4, 0.5), (0.5, 0.5), 0.01, 0.05, 5000, 0.0, threads=2, **kwargs)
        assert one.q_hat == two.q_hat

    def test_quenched_uses_given_field(self, small_stack):
        est = hitting_probability(
            (0.4, 0.5), (0.6, 0.5), 0.01, 0.1, 1000, 1.0, small_stack, dt=1e-4, mode=EstimateMode.QUENCHED
        )
        assert est.mode == EstimateMode.QUENCHED
        assert 0.0 <= est.q_hat <= 1.0
        assert est.p_hat >= 0.0

    def test_liouville_paths_all_reach_t(self, small_stack):
        est = hitting_probability(
            (0.5, 0.5), (0.5, 0.5), 0.01, 0.1, 1000, 1.0, small_stack, dt=1e-4, mode=EstimateMode.QUENCHED, seed=3
        )
        assert est.unreached == 0

    def test_short_horizon_is_refused(self):
        # the median weight is below one, so a Brownian horizon of t leaves many clocks short of t
        with pytest.raises(InsufficientDataError, match="horizon_factor"):
            hitting_probability(
                (0.5, 0.5), (0.5, 0.5), 0.01, 0.1, 1000, 1.0,
                dt=1e-4, seed=3, N=32, J=3, slices=2, paths_per_field=10, horizon_factor=1.0,
            )

    def test_flat_paths_never_unreached(self):
        est = hitting_probability((0.5, 0.5), (0.5, 0.5), 0.01, 0.05, 1000, 0.0, dt=1e-4, seed=1)
        assert est.unreached == 0

    def test_annealed_small_grid(self):
        est = hitting_probability(
            (0.4, 0.5), (0.6, 0.5), 0.01, 0.1, 1000, 1.0, dt=1e-4, N=32, J=3, slices=2, paths_per_field=500
        )
        assert est.replicas == 1000
        assert 0.0 <= est.q_hat <= 1.0

    def test_no_hits_reports_upper_bound(self):
        est = hitting_probability((0.1, 0.1), (0.9, 0.9), 0.001, 0.05, 1000, 0.0, dt=1e-4)
        assert est.below_resolution
        assert est.q_upper == pytest.approx(0.003)

    @pytest.mark.parametrize(
        "kwargs",
        [dict(r=0.001), dict(replicas=10), dict(t=-1.0)],
    )
    def test_domain_errors(self, kwargs):
        args = dict(u=(0.5, 0.5), v=(0.5, 0.5), t=0.01, r=0.05, replicas=1000, gamma=0.0)
        args.update(kwargs)
        with pytest.raises(DomainError):
            hitting_probability(**args)

    def test_dt_halving_check(self):
        coarse, fine, passed = dt_halving_check((0.5, 0.5), (0.5, 0.5), 0.01, 0.05, 1000, 0.0, dt=1e-4)
        assert coarse.t == fine.t == 0.01
        assert isinstance(passed, bool)


class TestHeatFit:
    def test_oracle_formula(self):
        assert gaussian_hitting_oracle((0.4, 0.5), (0.6, 0.5), 0.01, 0.05) == pytest.approx(
            0.0025 / 0.02 * math.exp(-0.04 / 0.02)
        )

    def test_off_diagonal_oracle_value(self):
        assert gaussian_hitting_oracle((0.35, 0.5), (0.65, 0.5), 0.02, 0.02) == pytest.approx(1.054e-3, rel=1e-3)

    def test_flat_off_diagonal_matches_oracle(self):
        replicas = 100_000
        est = hitting_probability((0.35, 0.5), (0.65, 0.5), 0.02, 0.02, replicas, 0.0, dt=1e-4, seed=5)
        oracle = gaussian_hitting_oracle((0.35, 0.5), (0.65, 0.5), 0.02, 0.02)
        assert abs(est.q_hat - oracle) < 4 * math.sqrt(oracle / replicas)

    def test_exact_power_law(self):
        estimates = [synthetic_estimate(t, math.exp(-0.001 / t)) for t in T_GRID]
        fit = heat_exponent_fit(estimates)
        assert fit.slope == pytest.approx(1.0, abs=1e-9)
        assert fit.points == 4

    def test_on_diagonal_correction(self):
        estimates = [synthetic_estimate(t, math.exp(-0.001 / t) / (2 * math.pi * t)) for t in T_GRID]
        fit = heat_exponent_fit(estimates, on_diagonal_correction=True)
        assert fit.slope == pytest.approx(1.0, abs=1e-9)

    def test_unresolved_points_dropped(self):
        estimates = [synthetic_estimate(t, math.exp(-0.001 / t)) for t in T_GRID]
        estimates.append(HeatKernelEstimate(t=0.08, r=0.05, q_hat=0.0, q_se=0.0, p_hat=0.0, replicas=1000,
                                            below_resolution=True, q_upper=0.003))
        xs, _, _ = heat_fit_points(estimates)
        assert len(xs) == 4

    def test_insufficient_points(self):
        estimates = [synthetic_estimate(t, math.exp(-0.001 / t)) for t in T_GRID[:3]]
        with pytest.raises(InsufficientDataError):
            heat_exponent_fit(estimates)
