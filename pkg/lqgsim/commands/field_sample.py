"""field-sample: draw one field stack, dump it, and tabulate per-octave variances."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from ..models.models import RegionQuery
from ..schemas.schemas import FieldSampleConfig, OctaveRow
from ..services.field import continuity_constant, continuity_scaling, dump_stack, sample_stack
from ..services.gmc import density_grid, moment_estimate
from ..services.persistence import export_moment_csv, write_csv, write_json
from ..services.rng import StreamRole, replica_seed
from .options import SUPPRESS, RunOutcome, add_run_flags

logger = logging.getLogger(__name__)

NAME = "field-sample"
CONFIG = FieldSampleConfig


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="sample a log-correlated field stack")
    add_run_flags(parser)
    parser.add_argument("--dump", action=argparse.BooleanOptionalAction, default=SUPPRESS, help="write the LQGF1 dump")
    parser.add_argument("--moment-p", dest="moment_p", default=SUPPRESS, help="GMC moment orders, comma separated")
    parser.add_argument("--moment-replicas", dest="moment_replicas", default=SUPPRESS)
    parser.add_argument(
        "--continuity-replicas", dest="continuity_replicas", default=SUPPRESS,
        help="stacks for the increment-variance table; 0 skips it",
    )
    return parser


def run(config: FieldSampleConfig, run_dir: Path, threads: int) -> RunOutcome:
    # Replica 0 of every experiment with the same master seed sees this field.
    seed = replica_seed(config.seed, 0, StreamRole.FIELD)
    outcome = RunOutcome(seeds={"master": config.seed, "field": seed})
    stack = sample_stack(config.engine, config.N, config.J, seed, config.slices, threads=threads)
    logger.info("Sampled %s stack N=%d J=%d", config.engine.value, config.N, config.J)

    if config.dump:
        outcome.add(dump_stack(stack, run_dir / "field.lqgf"))
    rows = [
        OctaveRow(octave=j, sample_var=float(stack.layers[j].var()), model_var=float(stack.var_profile[j].mean()))
        for j in range(stack.J)
    ]
    outcome.add(write_csv(run_dir / "octaves.csv", rows))

    mass = density_grid(stack, config.gamma)
    outcome.add(write_json(run_dir / "field_summary.json", {
        "gamma": config.gamma,
        "engine": config.engine.value,
        "N": config.N,
        "J": config.J,
        "total_mass": mass.total,
        "min_cell_mass": float(mass.cell_mass.min()),
        "max_cell_mass": float(mass.cell_mass.max()),
    }))

    if config.moment_p:
        square = RegionQuery.box((0.0, 0.0), 1.0)
        estimates = [
            moment_estimate(
                config.gamma, p, config.moment_replicas, square, N=config.N, J=config.J,
                engine=config.engine, seed=config.seed, threads=threads,
            )
            for p in config.moment_p
        ]
        outcome.add(export_moment_csv(estimates, run_dir / "moments.csv"))

    if config.continuity_replicas:
        rows = continuity_scaling(
            config.engine, config.N, config.J, config.continuity_replicas, seed=config.seed,
            slices=config.slices, threads=threads,
        )
        outcome.add(write_csv(run_dir / "continuity.csv", rows))
        constant, spread = continuity_constant(rows)
        logger.info("Continuity constant %.4g, spread %.2f across octave counts", constant, spread)
    return outcome
