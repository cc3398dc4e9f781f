"""CSV and manifest writers."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .config import ExperimentConfig


def format_value(value) -> str:
    if value is None:  # empty cell: no data
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float) or hasattr(value, "dtype") and value.dtype.kind == "f":
        value = float(value)
        if not math.isfinite(value):
            raise ValueError("non-finite value cannot be written to CSV")
        return repr(value)
    if hasattr(value, "dtype"):
        return str(value.item())
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """UTF-8 CSV with a header row; floats use the shortest round-trip repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_manifest(path: str | Path, config: ExperimentConfig, command: str,
                   files: Sequence[str | Path] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"tool_version={__version__}",
        f"command={command}",
        f"seed={config.seed}",
        f"config_sha256={config.config_hash()}",
    ]
    lines += [f"file={Path(f).name}" for f in files]
    lines.append("")
    lines.append(config.canonical_text())
    path.write_text("\n".join(lines), encoding="utf-8")
    return path
