"""lbm-heat: Liouville Brownian motion hitting probabilities and the heat-kernel exponent."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from ..schemas.schemas import FitResult, HeatConfig, HeatKernelEstimate, HeatParams, HeatRow
from ..services.errors import InsufficientDataError
from ..services.experiments import Sampling, heat_curve
from ..services.lbm import dt_halving_check, heat_exponent_fit
from ..services.persistence import write_csv, write_json
from .options import RunOutcome, add_heat_flags, add_run_flags

logger = logging.getLogger(__name__)

NAME = "lbm-heat"
CONFIG = HeatConfig


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="hitting probabilities of Liouville Brownian motion")
    add_run_flags(parser)
    add_heat_flags(parser)
    return parser


def estimate_heat(
    config: HeatParams, gamma: float, sampling: Sampling, run_dir: Path, outcome: RunOutcome
) -> tuple[list[HeatKernelEstimate], FitResult]:
    """Run the t grid, write heat.csv / heat_summary.json, return estimates and fit."""
    estimates = heat_curve(
        gamma, config.heat_u, config.heat_v, config.t_grid, config.r, config.heat_replicas, sampling,
        dt=config.dt, mode=config.mode, paths_per_field=config.paths_per_field,
        horizon_factor=config.horizon_factor,
    )
    outcome.add(write_csv(run_dir / "heat.csv", [
        HeatRow(
            gamma=gamma, t=e.t, r=e.r, replicas=e.replicas, q_hat=e.q_hat, q_se=e.q_se,
            p_hat=e.p_hat, mode=e.mode, seed_base=sampling.seed, unreached=e.unreached,
        )
        for e in estimates
    ]))

    summary: dict = {
        "gamma": gamma,
        "on_diagonal_correction": config.on_diagonal_correction,
        "estimates": [e.model_dump(mode="json") for e in estimates],
    }
    try:
        fit = heat_exponent_fit(estimates, config.on_diagonal_correction)
    except InsufficientDataError:
        outcome.add(write_json(run_dir / "heat_summary.json", summary))
        raise
    summary["fit"] = fit.model_dump(mode="json")
    logger.info("Heat exponent %.4f +- %.4f", fit.slope, fit.slope_se)

    if config.dt_check:
        coarse, fine, passed = dt_halving_check(
            config.heat_u, config.heat_v, config.t_grid[0], config.r, config.heat_replicas, gamma,
            dt=config.dt, mode=config.mode, seed=sampling.seed, engine=sampling.engine, N=sampling.N,
            J=sampling.depth, slices=sampling.slices, paths_per_field=config.paths_per_field,
            horizon_factor=config.horizon_factor, threads=sampling.workers,
        )
        summary["dt_check"] = {"coarse": coarse.q_hat, "fine": fine.q_hat, "passed": passed}
    outcome.add(write_json(run_dir / "heat_summary.json", summary))
    return estimates, fit


def run(config: HeatConfig, run_dir: Path, threads: int) -> RunOutcome:
    outcome = RunOutcome(seeds={"master": config.seed})
    estimate_heat(config, config.gamma, Sampling.from_config(config, threads), run_dir, outcome)
    return outcome
