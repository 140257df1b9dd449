"""distance: Liouville graph distance between two points on one field sample."""
from __future__ import annotations

import argparse
import logging
import time
from pathlib import Path

from ..models.models import RadiusVariant
from ..schemas.schemas import DistanceConfig, DistanceRow
from ..services.distance import ball_hop_distance, radius_field, validate_witness
from ..services.field import sample_stack
from ..services.gmc import density_grid, lebesgue_grid
from ..services.persistence import write_csv, write_json
from ..services.rng import StreamRole, replica_seed
from .options import SUPPRESS, RunOutcome, add_endpoint_flags, add_run_flags

logger = logging.getLogger(__name__)

NAME = "distance"
CONFIG = DistanceConfig


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="ball-hop distance D(u, v) at one scale")
    add_run_flags(parser)
    add_endpoint_flags(parser)
    parser.add_argument("--delta", default=SUPPRESS)
    parser.add_argument("--variant", default=SUPPRESS, choices=[v.value for v in RadiusVariant])
    parser.add_argument("--margin", default=SUPPRESS, help="confine balls to [margin, 1 - margin]^2")
    parser.add_argument(
        "--compare-variants", dest="compare_variants", action=argparse.BooleanOptionalAction, default=SUPPRESS,
    )
    return parser


def _point(p) -> str:
    return f"{p[0]!r},{p[1]!r}"


def run(config: DistanceConfig, run_dir: Path, threads: int) -> RunOutcome:
    seed = replica_seed(config.seed, 0, StreamRole.FIELD)
    outcome = RunOutcome(seeds={"master": config.seed, "field": seed})
    if config.gamma == 0:
        mass, field = lebesgue_grid(config.N), None
    else:
        stack = sample_stack(config.engine, config.N, config.J, seed, config.slices, threads=threads)
        mass, field = density_grid(stack, config.gamma), stack.full_field[0]

    variants = list(RadiusVariant) if config.compare_variants else [config.variant]
    rows, witnesses = [], {}
    for variant in variants:
        start = time.perf_counter()
        rf = radius_field(mass, config.delta, variant, field=field, margin=config.margin, threads=threads)
        result = ball_hop_distance(rf, config.u, config.v)
        if not result.disconnected:
            validate_witness(rf, result, config.u, config.v)
        wall_ms = 1e3 * (time.perf_counter() - start)
        logger.info(
            "D_%s(delta=%.4g) = %s, %d nodes expanded in %.1f ms",
            variant.value, config.delta, result.distance, result.expanded_nodes, wall_ms,
        )
        rows.append(DistanceRow(
            gamma=config.gamma, delta=config.delta, variant=variant, N=config.N, seed=config.seed,
            u=_point(config.u), v=_point(config.v), distance=result.distance, expanded_nodes=result.expanded_nodes,
            wall_ms=wall_ms,
        ))
        witnesses[variant.value] = {
            "disconnected": result.disconnected,
            "centers": [list(c) for c in result.witness_path],
            "r2": list(result.witness_r2),
            "mesh": rf.mesh,
        }
    outcome.add(write_csv(run_dir / "distance.csv", rows))
    outcome.add(write_json(run_dir / "witness.json", witnesses))
    return outcome
