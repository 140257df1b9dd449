"""Tests for the dyadic delta-partition and its graph distance."""
import sys
import os
import math
import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from lqgsim.services.errors import DomainError
from lqgsim.services.partition import (
    approx_graph_distance,
    audit_partition,
    build_partition,
    degrees,
    is_refinement,
    locate_cell,
    partition_stats,
    partition_to_json,
)


class TestBuildPartition:
    @pytest.mark.parametrize("delta", [0.5, 0.25, 0.125, 0.0625])
    def test_audit_passes(self, partition_stack, delta):
        partition = build_partition(partition_stack, 1.0, delta)
        audit_partition(partition)
        assert partition_stats(partition).side_square_sum == 1.0

    def test_flat_measure_gives_regular_grid(self, partition_stack):
        partition = build_partition(partition_stack, 0.0, 0.25)
        stats = partition_stats(partition)
        assert stats.leaf_count == 64
        assert stats.min_side == stats.max_side == 0.125
        assert not stats.depth_cap_hit
        assert stats.degree_histogram == {2: 4, 3: 24, 4: 36}

    def test_depth_cap_flag(self, partition_stack):
        partition = build_partition(partition_stack, 1.0, 0.5, depth_cap=0)
        assert len(partition.leaves) == 1
        assert partition.depth_cap_hit

    def test_cap_beyond_field_depth(self, partition_stack):
        with pytest.raises(DomainError):
            build_partition(partition_stack, 1.0, 0.25, depth_cap=4)

    def test_delta_range(self, partition_stack):
        with pytest.raises(DomainError):
            build_partition(partition_stack, 1.0, 0.0)

    def test_smaller_delta_refines(self, partition_stack):
        coarse = build_partition(partition_stack, 1.0, 0.25)
        fine = build_partition(partition_stack, 1.0, 0.0625)
        assert is_refinement(fine, coarse)
        assert len(fine.leaves) >= len(coarse.leaves)

    def test_degrees_match_edges(self, partition_stack):
        partition = build_partition(partition_stack, 1.0, 0.125)
        assert int(degrees(partition).sum()) == 2 * len(partition.edges)


class TestGraphDistance:
    def test_flat_measure_distance(self, partition_stack):
        partition = build_partition(partition_stack, 0.0, 0.25)
        assert approx_graph_distance(partition, (0.25, 0.5), (0.75, 0.5)) == 4

    def test_same_cell(self, partition_stack):
        partition = build_partition(partition_stack, 1.0, 0.5)
        assert approx_graph_distance(partition, (0.26, 0.51), (0.26, 0.51)) == 0

    def test_symmetric_and_triangle(self, partition_stack):
        partition = build_partition(partition_stack, 1.0, 0.0625)
        rng = np.random.default_rng(1)
        for _ in range(10):
            a, b, c = (tuple(p) for p in rng.uniform(0.05, 0.95, (3, 2)))
            ab = approx_graph_distance(partition, a, b)
            assert ab == approx_graph_distance(partition, b, a)
            assert approx_graph_distance(partition, a, c) <= ab + approx_graph_distance(partition, b, c)

    def test_locate_outside(self, partition_stack):
        partition = build_partition(partition_stack, 1.0, 0.5)
        with pytest.raises(DomainError):
            locate_cell(partition, (1.2, 0.5))

    def test_locate_upper_edge(self, partition_stack):
        partition = build_partition(partition_stack, 0.0, 0.25)
        cell = partition.leaves[locate_cell(partition, (1.0, 1.0))]
        assert (cell.ix, cell.iy) == (7, 7)


class TestPartitionJson:
    def test_cells_and_edges(self, partition_stack):
        partition = build_partition(partition_stack, 1.0, 0.25)
        data = partition_to_json(partition)
        assert len(data["cells"]) == len(partition.leaves)
        assert len(data["edges"]) == len(partition.edges)
        assert math.fsum(c["side"] ** 2 for c in data["cells"]) == 1.0
