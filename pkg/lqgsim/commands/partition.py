"""partition: build and audit one delta-partition, optionally measuring D'(u, v)."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from ..schemas.schemas import PartitionConfig
from ..services.field import sample_stack
from ..services.partition import approx_graph_distance, audit_partition, build_partition, partition_stats, partition_to_json
from ..services.persistence import write_json
from ..services.rng import StreamRole, replica_seed
from .options import SUPPRESS, RunOutcome, add_endpoint_flags, add_run_flags

logger = logging.getLogger(__name__)

NAME = "partition"
CONFIG = PartitionConfig


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="random dyadic delta-partition and its adjacency graph")
    add_run_flags(parser)
    add_endpoint_flags(parser)
    parser.add_argument("--delta", default=SUPPRESS)
    parser.add_argument("--depth-cap", dest="depth_cap", default=SUPPRESS)
    return parser


def run(config: PartitionConfig, run_dir: Path, threads: int) -> RunOutcome:
    seed = replica_seed(config.seed, 0, StreamRole.FIELD)
    outcome = RunOutcome(seeds={"master": config.seed, "field": seed})
    stack = sample_stack(config.engine, config.N, config.J, seed, config.slices, threads=threads)
    partition = build_partition(stack, config.gamma, config.delta, config.depth_cap)
    audit_partition(partition)

    stats = partition_stats(partition)
    logger.info("Partition at delta=%.4g has %d leaves", config.delta, stats.leaf_count)
    summary = stats.model_dump(mode="json")
    if config.u is not None and config.v is not None:
        summary["u"] = list(config.u)
        summary["v"] = list(config.v)
        summary["d_prime_edges"] = approx_graph_distance(partition, config.u, config.v)
    outcome.add(write_json(run_dir / "partition_stats.json", summary))
    outcome.add(write_json(run_dir / "partition.json", partition_to_json(partition)))
    return outcome
