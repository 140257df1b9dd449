"""Random dyadic delta-partition of the unit square and its graph distance D'."""
from __future__ import annotations

import logging
import math
from collections import Counter, deque

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from ..models.models import Cell, CellPartition, FieldStack
from ..schemas.schemas import PartitionStats
from .errors import DomainError, InvariantViolation
from .gmc import approx_lqg_box

logger = logging.getLogger(__name__)


def build_partition(stack: FieldStack, gamma: float, delta: float, depth_cap: int | None = None) -> CellPartition:
    """Subdivide boxes breadth-first while their approximate LQG mass is at least delta^2."""
    if depth_cap is None:
        depth_cap = stack.J - 2
    if not 0 <= depth_cap <= stack.J - 2:
        raise DomainError(f"depth_cap must lie in 0..{stack.J - 2}, got {depth_cap}")
    if not 0 < delta <= 1:
        raise DomainError(f"delta must lie in (0, 1], got {delta}")

    threshold = delta * delta
    leaves: list[Cell] = []
    parent_masses: dict[tuple[int, int, int], float] = {}
    capped = False
    queue = deque([(0, 0, 0)])
    while queue:
        depth, ix, iy = queue.popleft()
        mass = approx_lqg_box(stack, gamma, depth, ix, iy)
        if mass >= threshold and depth < depth_cap:
            parent_masses[(depth, ix, iy)] = mass
            for dy in (0, 1):
                for dx in (0, 1):
                    queue.append((depth + 1, 2 * ix + dx, 2 * iy + dy))
            continue
        if mass >= threshold:
            capped = True
        leaves.append(Cell(len(leaves), depth, ix, iy, mass))

    resolution = 1 << depth_cap
    labels = np.full((resolution, resolution), -1, dtype=np.int64)
    for cell in leaves:
        span = 1 << (depth_cap - cell.depth)
        labels[cell.iy * span : (cell.iy + 1) * span, cell.ix * span : (cell.ix + 1) * span] = cell.id

    if capped:
        logger.warning("Partition at delta=%.4g hit the depth cap %d; leaves there are not below delta^2", delta, depth_cap)
    logger.debug("Partition at delta=%.4g: %d leaves, %d internal boxes", delta, len(leaves), len(parent_masses))
    return CellPartition(
        delta=float(delta),
        gamma=float(gamma),
        depth_cap=depth_cap,
        leaves=leaves,
        edges=_adjacency(labels),
        labels=labels,
        parent_masses=parent_masses,
        depth_cap_hit=capped,
    )


def _adjacency(labels: np.ndarray) -> np.ndarray:
    # Neighbouring fine squares with different labels share a full edge,
    # so corner-only contact never produces a pair.
    horizontal = np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1)
    vertical = np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)
    pairs = np.concatenate([horizontal, vertical])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.sort(pairs, axis=1), axis=0)


def locate_cell(partition: CellPartition, v: tuple[float, float]) -> int:
    """Leaf containing v; cells are closed on their lower and left edges."""
    x, y = v
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"point {v} outside the unit square")
    resolution = partition.labels.shape[0]
    ix = min(int(math.floor(x * resolution)), resolution - 1)
    iy = min(int(math.floor(y * resolution)), resolution - 1)
    return int(partition.labels[iy, ix])


def _graph(partition: CellPartition):
    n = len(partition.leaves)
    edges = partition.edges
    data = np.ones(len(edges))
    return coo_matrix((data, (edges[:, 0], edges[:, 1])), shape=(n, n)).tocsr()


def approx_graph_distance(partition: CellPartition, u: tuple[float, float], v: tuple[float, float]) -> int:
    """Edge count between the leaves containing u and v (cell count is this plus one)."""
    a = locate_cell(partition, u)
    b = locate_cell(partition, v)
    if a == b:
        return 0
    dist = shortest_path(_graph(partition), directed=False, unweighted=True, indices=a)
    if not np.isfinite(dist[b]):
        raise InvariantViolation(f"partition graph disconnected between leaves {a} and {b}")
    return int(dist[b])


def degrees(partition: CellPartition) -> np.ndarray:
    return np.bincount(partition.edges.ravel(), minlength=len(partition.leaves))


def partition_stats(partition: CellPartition) -> PartitionStats:
    sides = [cell.side for cell in partition.leaves]
    histogram = Counter(int(d) for d in degrees(partition))
    return PartitionStats(
        leaf_count=len(partition.leaves),
        min_side=min(sides),
        max_side=max(sides),
        degree_histogram=dict(sorted(histogram.items())),
        side_square_sum=math.fsum(s * s for s in sides),
        depth_cap_hit=partition.depth_cap_hit,
    )


def audit_partition(partition: CellPartition) -> None:
    """Raise InvariantViolation unless tiling, stopping rule and adjacency all hold."""
    if (partition.labels < 0).any():
        raise InvariantViolation("partition leaves do not cover the unit square")
    if math.fsum(c.side * c.side for c in partition.leaves) != 1.0:
        raise InvariantViolation("leaf areas do not sum to one")
    counts = np.bincount(partition.labels.ravel(), minlength=len(partition.leaves))
    for cell in partition.leaves:
        if counts[cell.id] != 4 ** (partition.depth_cap - cell.depth):
            raise InvariantViolation(f"leaf {cell.id} overlaps another leaf")

    threshold = partition.delta * partition.delta
    for cell in partition.leaves:
        if cell.approx_mass >= threshold and cell.depth < partition.depth_cap:
            raise InvariantViolation(f"leaf {cell.id} should have been subdivided")
        if cell.depth > 0:
            parent = partition.parent_masses.get((cell.depth - 1, cell.ix // 2, cell.iy // 2))
            if parent is None or parent < threshold:
                raise InvariantViolation(f"parent of leaf {cell.id} was below delta^2")

    for a, b in partition.edges:
        if _shared_boundary(partition.leaves[a], partition.leaves[b]) <= 0:
            raise InvariantViolation(f"edge ({a}, {b}) has no shared boundary segment")


def _shared_boundary(a: Cell, b: Cell) -> float:
    ax0, ay0 = a.ix * a.side, a.iy * a.side
    bx0, by0 = b.ix * b.side, b.iy * b.side
    ox = min(ax0 + a.side, bx0 + b.side) - max(ax0, bx0)
    oy = min(ay0 + a.side, by0 + b.side) - max(ay0, by0)
    if ox == 0 and oy > 0:
        return oy
    if oy == 0 and ox > 0:
        return ox
    return 0.0


def is_refinement(fine: CellPartition, coarse: CellPartition) -> bool:
    """True if every leaf of ``coarse`` is a union of leaves of ``fine``."""
    for cell in fine.leaves:
        host = coarse.leaves[locate_cell(coarse, cell.center)]
        if host.depth > cell.depth:
            return False
    return True


def partition_to_json(partition: CellPartition) -> dict:
    return {
        "delta": partition.delta,
        "gamma": partition.gamma,
        "depth_cap": partition.depth_cap,
        "depth_cap_hit": partition.depth_cap_hit,
        "cells": [
            {"id": c.id, "center": list(c.center), "side": c.side, "mass": c.approx_mass}
            for c in partition.leaves
        ],
        "edges": partition.edges.tolist(),
    }
