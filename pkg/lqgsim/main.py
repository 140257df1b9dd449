"""Command-line entry point: one subcommand per experiment pipeline."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from typing import Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .commands import chi, consistency, distance, field_sample, lbm_heat, partition, report
from .commands.options import flag_values
from .config import get_settings
from .services.errors import DomainError, ExperimentFailure, InsufficientDataError, NumericError, ResourceError
from .services.persistence import build_manifest, load_config_file, run_directory, write_manifest

logger = logging.getLogger("lqgsim")

COMMANDS = (field_sample, partition, distance, chi, lbm_heat, consistency, report)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqgsim", description="Liouville graph distance and Liouville heat kernel experiments",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMANDS:
        module.add_parser(subparsers).set_defaults(handler=module)
    return parser


def resolve_threads(requested: Optional[int]) -> int:
    """LQG_THREADS wins over the config; otherwise the config, then the settings default."""
    settings = get_settings()
    if "threads" in settings.model_fields_set:
        return settings.threads
    return requested or settings.threads


def _diagnostics(exc: ValidationError) -> list[str]:
    return [
        f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
        for err in exc.errors()
    ]


def _config_values(args: argparse.Namespace, command: str) -> dict:
    values: dict = {}
    if args.config:
        loaded = load_config_file(args.config)
        if "command" in loaded and isinstance(loaded.get("config"), dict):
            if loaded["command"] != command:
                raise DomainError(f"config: manifest is for '{loaded['command']}', not '{command}'")
            loaded = loaded["config"]
        values.update(loaded)
    values.update(flag_values(args))
    return values


def run(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    module = args.handler

    try:
        config = module.CONFIG.model_validate(_config_values(args, module.NAME))
        if hasattr(module, "output_path"):
            run_dir = run_directory(module.NAME, str(module.output_path(config)), 0)
        else:
            run_dir = run_directory(module.NAME, config.output_dir, config.seed)
    except ValidationError as exc:
        for line in _diagnostics(exc):
            print(line, file=sys.stderr)
        return EXIT_INVALID
    except DomainError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID

    threads = resolve_threads(getattr(config, "threads", None))
    manifest_name = getattr(module, "MANIFEST", "manifest.json")
    start = time.perf_counter()
    logger.info("Running %s into %s with %d threads", module.NAME, run_dir, threads)
    try:
        outcome = module.run(config, run_dir, threads)
    except (DomainError, ResourceError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except (ExperimentFailure, InsufficientDataError, NumericError) as exc:
        logger.error("%s failed: %s", module.NAME, exc)
        seeds = {"master": config.seed} if hasattr(config, "seed") else {}
        write_manifest(
            run_dir,
            build_manifest(module.NAME, config, seeds, time.perf_counter() - start, status=f"failed: {exc}"),
            manifest_name,
        )
        return EXIT_FAILED

    wall = time.perf_counter() - start
    write_manifest(run_dir, build_manifest(module.NAME, config, outcome.seeds, wall, outcome.outputs), manifest_name)
    logger.info("%s finished in %.1f s", module.NAME, wall)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
