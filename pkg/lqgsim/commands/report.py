"""report: per-figure CSVs from a finished run directory."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from ..schemas.schemas import ChiEstimate, HeatFigureRow, HeatKernelEstimate, ReportConfig
from ..services.errors import DomainError
from ..services.lbm import heat_fit_points
from ..services.persistence import read_json, read_manifest, write_csv
from .chi import chi_rows
from .options import SUPPRESS, RunOutcome

logger = logging.getLogger(__name__)

NAME = "report"
CONFIG = ReportConfig
MANIFEST = "report_manifest.json"


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="figure-ready CSVs from a chi, lbm-heat or consistency run")
    parser.add_argument("--config", default=None)
    parser.add_argument("run_dir", nargs="?", default=SUPPRESS, help="directory holding manifest.json")
    parser.add_argument("--output-dir", dest="output_dir", default=SUPPRESS, help="defaults to run_dir")
    return parser


def heat_figure_rows(estimates: list[HeatKernelEstimate], on_diagonal_correction: bool) -> list[HeatFigureRow]:
    """Points of the heat-exponent fit, one row per resolved time."""
    rows = []
    for est in estimates:
        xs, ys, ses = heat_fit_points([est], on_diagonal_correction)
        if xs:
            rows.append(HeatFigureRow(t=est.t, log_inv_t=xs[0], log_level=ys[0], se=ses[0]))
    return rows


def output_path(config: ReportConfig) -> Path:
    return Path(config.output_dir or config.run_dir)


def run(config: ReportConfig, run_dir: Path, threads: int) -> RunOutcome:
    source = Path(config.run_dir)
    manifest = read_manifest(source)
    outcome = RunOutcome(seeds=dict(manifest.seeds))
    written = False

    chi_path = source / "chi_summary.json"
    if chi_path.is_file():
        estimate = ChiEstimate.model_validate(read_json(chi_path))
        outcome.add(write_csv(run_dir / "figure_distance.csv", chi_rows(estimate)))
        written = True

    heat_path = source / "heat_summary.json"
    if heat_path.is_file():
        summary = read_json(heat_path)
        estimates = [HeatKernelEstimate.model_validate(e) for e in summary["estimates"]]
        rows = heat_figure_rows(estimates, summary.get("on_diagonal_correction", False))
        outcome.add(write_csv(run_dir / "figure_heat.csv", rows, HeatFigureRow))
        written = True

    if not written:
        raise DomainError(f"run_dir: {manifest.command} runs have nothing to report")
    logger.info("Report for %s run written to %s", manifest.command, run_dir)
    return outcome
