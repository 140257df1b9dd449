"""Flag groups shared by the subcommands.

Every flag defaults to ``argparse.SUPPRESS`` so only flags given on the command
line override config-file values; pydantic does all parsing and validation.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

SUPPRESS = argparse.SUPPRESS


@dataclass
class RunOutcome:
    outputs: list[str] = field(default_factory=list)
    seeds: dict[str, int] = field(default_factory=dict)

    def add(self, path: Path) -> None:
        self.outputs.append(Path(path).name)


def add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON or key=value config file (or a previous manifest.json)")
    parser.add_argument("--seed", default=SUPPRESS, help="master seed")
    parser.add_argument("--gamma", default=SUPPRESS, help="coupling in [0, 2)")
    parser.add_argument("--engine", default=SUPPRESS, choices=["tilde_h", "eta", "hat_h"])
    parser.add_argument("-N", "--N", dest="N", default=SUPPRESS, help="grid points per side (power of two)")
    parser.add_argument("-J", "--J", dest="J", default=SUPPRESS, help="number of octaves")
    parser.add_argument("--slices", default=SUPPRESS, help="time slices per octave")
    parser.add_argument("--threads", default=SUPPRESS, help="worker threads (LQG_THREADS overrides)")
    parser.add_argument("--output-dir", dest="output_dir", default=SUPPRESS)


def add_endpoint_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-u", dest="u", default=SUPPRESS, help="start point 'x,y'")
    parser.add_argument("-v", dest="v", default=SUPPRESS, help="end point 'x,y'")


def add_chi_flags(parser: argparse.ArgumentParser) -> None:
    add_endpoint_flags(parser)
    parser.add_argument("--deltas", default=SUPPRESS, help="dyadic scales, e.g. 2^-3..2^-7")
    parser.add_argument("--replicas", default=SUPPRESS)
    parser.add_argument("--kind", default=SUPPRESS, choices=["D", "D_prime", "D2", "D_circle"])
    parser.add_argument("--max-drop-fraction", dest="max_drop_fraction", default=SUPPRESS)


def add_heat_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--t-grid", dest="t_grid", default=SUPPRESS, help="Liouville times, comma separated")
    parser.add_argument("--r", dest="r", default=SUPPRESS, help="target ball radius")
    parser.add_argument("--heat-replicas", dest="heat_replicas", default=SUPPRESS)
    parser.add_argument("--dt", default=SUPPRESS)
    parser.add_argument("--mode", default=SUPPRESS, choices=["annealed", "quenched"])
    parser.add_argument("--paths-per-field", dest="paths_per_field", default=SUPPRESS)
    parser.add_argument("--horizon-factor", dest="horizon_factor", default=SUPPRESS)
    parser.add_argument("--heat-u", dest="heat_u", default=SUPPRESS)
    parser.add_argument("--heat-v", dest="heat_v", default=SUPPRESS)
    parser.add_argument("--dt-check", dest="dt_check", action=argparse.BooleanOptionalAction, default=SUPPRESS)
    parser.add_argument(
        "--on-diagonal-correction", dest="on_diagonal_correction",
        action=argparse.BooleanOptionalAction, default=SUPPRESS,
    )


def flag_values(args: argparse.Namespace) -> dict:
    """Config overrides given on the command line."""
    values = vars(args).copy()
    for key in ("command", "config", "handler"):
        values.pop(key, None)
    return values
