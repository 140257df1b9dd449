"""consistency: chi and the heat-kernel exponent on matched samples, and their residual."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from ..schemas.schemas import ConsistencyConfig
from ..services.experiments import Sampling, heat_distance_consistency
from ..services.persistence import write_json
from .chi import estimate_chi
from .lbm_heat import estimate_heat
from .options import RunOutcome, add_chi_flags, add_heat_flags, add_run_flags

logger = logging.getLogger(__name__)

NAME = "consistency"
CONFIG = ConsistencyConfig


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="heat slope against chi / (2 - chi)")
    add_run_flags(parser)
    add_chi_flags(parser)
    add_heat_flags(parser)
    return parser


def run(config: ConsistencyConfig, run_dir: Path, threads: int) -> RunOutcome:
    outcome = RunOutcome(seeds={"master": config.seed})
    sampling = Sampling.from_config(config, threads)
    chi = estimate_chi(config, sampling, run_dir, outcome)
    _, fit = estimate_heat(config, config.gamma, sampling, run_dir, outcome)
    result = heat_distance_consistency(config.gamma, chi, fit)
    logger.info(
        "Heat slope %.4f vs chi/(2-chi) = %.4f, residual %.4f", result.heat_slope, result.target, result.residual,
    )
    outcome.add(write_json(run_dir / "consistency.json", result))
    return outcome
