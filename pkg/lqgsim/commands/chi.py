"""chi: distance exponent over a dyadic delta grid, plus the optional statistical checks."""
from __future__ import annotations

import argparse
import logging
import math
from pathlib import Path

from ..schemas.schemas import ChiConfig, ChiEstimate, ChiRow, SampleRow
from ..services.experiments import (
    Sampling,
    boundary_exponent,
    boundary_rows,
    cell_size_exponents,
    chi_from_samples,
    concentration_rows,
    distance_samples,
    prime_agreement,
    prime_equivalence,
    subadditivity_check,
    variant_equivalence,
)
from ..services.persistence import write_csv, write_json
from .options import SUPPRESS, RunOutcome, add_chi_flags, add_run_flags

logger = logging.getLogger(__name__)

NAME = "chi"
CONFIG = ChiConfig


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="distance exponent chi from a replica sweep")
    add_run_flags(parser)
    add_chi_flags(parser)
    parser.add_argument(
        "--checks", default=SUPPRESS,
        help="comma list of subadditivity, concentration, point_to_boundary, variants, cell_sizes, prime_equivalence",
    )
    parser.add_argument("--boundary-lambda", dest="boundary_lambda", default=SUPPRESS)
    return parser


def chi_rows(estimate: ChiEstimate) -> list[ChiRow]:
    return [
        ChiRow(delta=d, mean_logD=m, se=s, n=n)
        for d, m, s, n in zip(estimate.deltas, estimate.mean_log, estimate.se_log, estimate.counts)
    ]


def estimate_chi(config: ChiConfig, sampling: Sampling, run_dir: Path, outcome: RunOutcome) -> ChiEstimate:
    """Sweep, write distances.csv / chi.csv / chi_summary.json, return the estimate."""
    samples, capped = distance_samples(
        config.gamma, config.deltas, config.replicas, config.kind, config.u, config.v, sampling,
    )
    outcome.add(write_csv(run_dir / "distances.csv", [
        SampleRow(replica=i, delta=d, distance=None if math.isnan(samples[i, k]) else float(samples[i, k]))
        for i in range(len(samples))
        for k, d in enumerate(config.deltas)
    ], SampleRow))
    estimate = chi_from_samples(
        config.gamma, config.deltas, samples, capped, config.kind, sampling, config.max_drop_fraction,
    )
    outcome.add(write_csv(run_dir / "chi.csv", chi_rows(estimate)))
    outcome.add(write_json(run_dir / "chi_summary.json", estimate))
    logger.info("chi = %.4f +- %.4f (bound %.4f)", estimate.slope, estimate.slope_se, estimate.kpz_bound)
    run_checks(config, sampling, samples, run_dir, outcome)
    return estimate


def _subadditivity_pairs(config: ChiConfig) -> list[tuple[float, float]]:
    coarse = config.deltas[:2]
    return [(a, b) for a in coarse for b in coarse if a >= b and a * b * config.N >= 2]


def run_checks(config: ChiConfig, sampling: Sampling, samples, run_dir: Path, outcome: RunOutcome) -> None:
    if "concentration" in config.checks:
        rows = concentration_rows(config.deltas, samples, config.max_drop_fraction)
        outcome.add(write_csv(run_dir / "concentration.csv", rows))

    if "subadditivity" in config.checks:
        pairs = _subadditivity_pairs(config)
        if pairs:
            rows = subadditivity_check(
                config.gamma, pairs, config.replicas, config.kind, config.u, config.v,
                max_drop_fraction=config.max_drop_fraction, sampling=sampling,
            )
            outcome.add(write_csv(run_dir / "subadditivity.csv", rows))
        else:
            logger.warning("No subadditivity pair has a product scale above two mesh steps at N=%d", config.N)

    if "point_to_boundary" in config.checks:
        rows = boundary_rows(
            config.gamma, config.deltas, config.u, config.boundary_lambda, config.replicas,
            max_drop_fraction=config.max_drop_fraction, sampling=sampling,
        )
        outcome.add(write_csv(run_dir / "boundary.csv", rows))
        outcome.add(write_json(run_dir / "boundary_fit.json", boundary_exponent(rows)))

    if "variants" in config.checks:
        rows = variant_equivalence(config.gamma, config.deltas[-1], config.replicas, config.u, config.v, sampling=sampling)
        outcome.add(write_csv(run_dir / "variants.csv", rows))

    if "prime_equivalence" in config.checks:
        rows = prime_equivalence(config.gamma, config.deltas, config.replicas, config.u, config.v, sampling=sampling)
        outcome.add(write_csv(run_dir / "prime_equivalence.csv", rows))
        summary = prime_agreement(rows)
        outcome.add(write_json(run_dir / "prime_equivalence.json", summary))
        logger.info("D and D' agree on %.0f%% of samples", 100 * summary.fraction)

    if "cell_sizes" in config.checks:
        rows = cell_size_exponents(config.gamma, config.deltas, config.replicas, sampling=sampling)
        outcome.add(write_csv(run_dir / "cell_sizes.csv", rows))


def run(config: ChiConfig, run_dir: Path, threads: int) -> RunOutcome:
    outcome = RunOutcome(seeds={"master": config.seed})
    estimate_chi(config, Sampling.from_config(config, threads), run_dir, outcome)
    return outcome
