"""Run directories: CSV tables, JSON summaries, manifests and config files."""
from __future__ import annotations

import csv
import json
import logging
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence, Type, TypeVar

import numpy as np
import scipy
from dotenv import dotenv_values
from pydantic import BaseModel

from .. import __version__
from ..config import get_settings
from ..schemas.schemas import MomentEstimate, MomentRow, RunManifest
from .errors import DomainError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

Row = TypeVar("Row", bound=BaseModel)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path | str, rows: Sequence[BaseModel], model: Optional[Type[BaseModel]] = None) -> Path:
    """Write pydantic rows as RFC-4180 CSV with LF endings; columns follow field order."""
    path = Path(path)
    model = model or type(rows[0])
    columns = list(model.model_fields)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            data = row.model_dump(mode="json")
            writer.writerow([_cell(data[c]) for c in columns])
    logger.debug("Wrote %d rows to %s", len(rows), path)
    return path


def read_csv(path: Path | str, model: Type[Row]) -> list[Row]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            model.model_validate({k: (v if v != "" else None) for k, v in record.items()})
            for record in csv.DictReader(fh)
        ]


def export_moment_csv(estimates: Iterable[MomentEstimate], path: Path | str) -> Path:
    rows = [MomentRow(**e.model_dump(exclude={"regime_boundary"})) for e in estimates]
    return write_csv(path, rows, MomentRow)


def write_json(path: Path | str, payload: BaseModel | dict | list) -> Path:
    path = Path(path)
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def read_json(path: Path | str):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def build_manifest(
    command: str,
    config: BaseModel,
    seeds: dict[str, int],
    wall_time_s: float,
    outputs: Sequence[str] = (),
    status: str = "ok",
) -> RunManifest:
    return RunManifest(
        command=command,
        config=config.model_dump(mode="json"),
        seeds=seeds,
        version=__version__,
        numpy_version=np.__version__,
        scipy_version=scipy.__version__,
        wall_time_s=wall_time_s,
        outputs=sorted(outputs),
        status=status,
    )


def write_manifest(run_dir: Path | str, manifest: RunManifest, name: str = MANIFEST_NAME) -> Path:
    return write_json(Path(run_dir) / name, manifest)


def read_manifest(run_dir: Path | str) -> RunManifest:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.is_file():
        raise DomainError(f"run_dir: no {MANIFEST_NAME} in {run_dir}")
    return RunManifest.model_validate(read_json(path))


def run_directory(command: str, output_dir: Optional[str], seed: int) -> Path:
    """Explicit output_dir, else <settings.output_dir>/<command>-seed<seed>."""
    path = Path(output_dir) if output_dir else Path(get_settings().output_dir) / f"{command}-seed{seed}"
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DomainError(f"output_dir: cannot create {path} ({exc.strerror})") from exc
    if not os.access(path, os.W_OK):
        raise DomainError(f"output_dir: {path} is not writable")
    return path


def load_config_file(path: Path | str) -> dict:
    """Flat key=value text or a JSON object; values stay strings for key=value files."""
    path = Path(path)
    if not path.is_file():
        raise DomainError(f"config: {path} does not exist")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"config: {path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise DomainError(f"config: {path} must hold a JSON object")
        return data

    values = dotenv_values(path)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#") and "=" not in stripped:
            raise DomainError(f"config: {path}:{lineno}: expected key=value, got {stripped!r}")
    return {key: value for key, value in values.items() if value is not None}
