"""Tests for Pydantic schemas validation."""
import sys
import os
import pytest
from pydantic import ValidationError

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from lqgsim.models.models import DistanceKind, EstimateMode, FieldEngine
from lqgsim.schemas.schemas import (
    ChiConfig,
    ChiEstimate,
    ConsistencyConfig,
    DistanceConfig,
    FieldSampleConfig,
    HeatConfig,
    PartitionConfig,
    parse_point,
    parse_scale_list,
)


class TestParsers:
    def test_dyadic_range(self):
        assert parse_scale_list("2^-3..2^-5") == [0.125, 0.0625, 0.03125]

    def test_mixed_list(self):
        assert parse_scale_list("0.1, 2^-2,") == [0.1, 0.25]

    def test_list_passthrough(self):
        assert parse_scale_list([0.5]) == [0.5]

    def test_point(self):
        assert parse_point("(0.25, 0.5)") == (0.25, 0.5)
        assert parse_point("0.1 0.2") == (0.1, 0.2)


class TestRunConfigBase:
    def test_defaults(self):
        c = FieldSampleConfig()
        assert c.N == 256
        assert c.J == 6
        assert c.gamma == 1.0
        assert c.engine == FieldEngine.HAT_H
        assert c.dump

    def test_strings_are_coerced(self):
        c = FieldSampleConfig.model_validate({"N": "64", "gamma": "0.5", "engine": "eta", "moment_p": "1,2"})
        assert (c.N, c.gamma, c.engine, c.moment_p) == (64, 0.5, FieldEngine.ETA, [1.0, 2.0])

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValidationError) as err:
            FieldSampleConfig(N=100)
        assert err.value.errors()[0]["loc"] == ("N",)

    def test_rejects_too_many_octaves(self):
        with pytest.raises(ValidationError):
            FieldSampleConfig(N=64, J=5)

    def test_gamma_range(self):
        with pytest.raises(ValidationError):
            FieldSampleConfig(gamma=2.0)

    def test_unknown_key(self):
        with pytest.raises(ValidationError):
            FieldSampleConfig.model_validate({"gama": 1.0})

    def test_moment_replicas_floor(self):
        with pytest.raises(ValidationError):
            FieldSampleConfig(moment_replicas=50)


class TestPartitionConfig:
    def test_depth_cap_defaults_to_field_depth(self):
        c = PartitionConfig(N=128, delta=0.25)
        assert c.depth_cap == 3

    def test_depth_cap_range(self):
        with pytest.raises(ValidationError):
            PartitionConfig(N=128, delta=0.25, depth_cap=4)

    def test_delta_required(self):
        with pytest.raises(ValidationError):
            PartitionConfig(N=128)


class TestDistanceConfig:
    def test_points_from_strings(self):
        c = DistanceConfig.model_validate({"delta": "0.125", "u": "0.1,0.2", "v": "0.9,0.8"})
        assert c.u == (0.1, 0.2)
        assert c.v == (0.9, 0.8)

    def test_margin_range(self):
        with pytest.raises(ValidationError):
            DistanceConfig(delta=0.1, margin=0.5)


class TestChiConfig:
    def test_scales_sorted_descending(self):
        c = ChiConfig(deltas="2^-7..2^-3")
        assert c.deltas == [0.125, 0.0625, 0.03125, 0.015625, 0.0078125]

    def test_needs_four_scales(self):
        with pytest.raises(ValidationError):
            ChiConfig(deltas="2^-3..2^-5")

    def test_scales_must_be_dyadic(self):
        with pytest.raises(ValidationError):
            ChiConfig(deltas=[0.125, 0.0625, 0.03125, 0.02])

    def test_endpoints_apart(self):
        with pytest.raises(ValidationError):
            ChiConfig(u=(0.5, 0.5), v=(0.6, 0.5))

    def test_endpoints_interior(self):
        with pytest.raises(ValidationError):
            ChiConfig(u=(0.0, 0.5))

    def test_checks_from_string(self):
        c = ChiConfig(checks="concentration, variants")
        assert c.checks == ["concentration", "variants"]

    def test_unknown_check(self):
        with pytest.raises(ValidationError):
            ChiConfig(checks="speed")

    def test_kind(self):
        assert ChiConfig(kind="D_prime").kind == DistanceKind.D_PRIME


class TestHeatConfig:
    def test_defaults(self):
        c = HeatConfig()
        assert c.mode == EstimateMode.ANNEALED
        assert c.heat_replicas == 1000
        assert c.on_diagonal_correction

    def test_radius_below_mesh(self):
        with pytest.raises(ValidationError):
            HeatConfig(N=64, r=0.01)

    def test_replica_floor(self):
        with pytest.raises(ValidationError):
            HeatConfig(heat_replicas=999)

    def test_dt_ceiling(self):
        with pytest.raises(ValidationError):
            HeatConfig(dt=1e-3)

    def test_consistency_combines_both(self):
        c = ConsistencyConfig(N=64, r=0.05, t_grid="0.01,0.02,0.04,0.08")
        assert c.t_grid == [0.01, 0.02, 0.04, 0.08]
        assert c.deltas[0] == 0.125


class TestChiEstimate:
    def make(self, slope, gamma=1.0, bound=0.876894):
        return ChiEstimate(
            gamma=gamma, deltas=[0.25, 0.125], mean_log=[1.0, 1.5], se_log=[0.1, 0.1], counts=[5, 5],
            slope=slope, slope_se=0.05, intercept=0.0, kind=DistanceKind.D, engine=FieldEngine.HAT_H,
            N=256, replicas=5, kpz_bound=bound,
        )

    def test_within_bound(self):
        est = self.make(0.85)
        assert est.bound_ok
        assert est.floor_ok

    def test_above_bound(self):
        assert not self.make(0.95).bound_ok

    def test_floor(self):
        assert not self.make(0.05).floor_ok

    def test_computed_fields_serialized(self):
        data = self.make(0.85).model_dump(mode="json")
        assert data["bound_ok"] is True
        assert data["kind"] == "D"
