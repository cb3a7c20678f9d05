"""Deterministic result emission: CSV/JSON writers and run manifests.

Floats are written with ``repr``, the shortest representation that parses
back to the same value, so re-runs with the same seed produce byte-identical
files regardless of worker count or platform line conventions.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_config_echo(out_dir: str | Path, config: dict) -> Path:
    """The effective configuration of a run, flags merged over file values."""
    return write_json(Path(out_dir) / "config.json", config)


def write_manifest(
    out_dir: str | Path,
    subcommand: str,
    master_seed: int,
    wall_time_s: float,
    extra: dict | None = None,
) -> Path:
    payload = {
        "subcommand": subcommand,
        "master_seed": master_seed,
        "wall_time_s": round(wall_time_s, 3),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if extra:
        payload.update(extra)
    return write_json(Path(out_dir) / "manifest.json", payload)


def write_error(out_dir: str | Path | None, subcommand: str, exc: Exception) -> None:
    payload = {
        "subcommand": subcommand,
        "error": type(exc).__name__,
        "message": str(exc),
    }
    if out_dir is not None:
        try:
            write_json(Path(out_dir) / "error.json", payload)
        except OSError:
            pass
    print(json.dumps(payload), file=sys.stderr)
