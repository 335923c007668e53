"""Experiment reports: named tables plus a JSON summary, written deterministically."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__


def _plain(value):
    """Convert numpy scalars/arrays and non-finite floats to JSON-friendly values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _cell(value) -> str:
    value = _plain(value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True)
    return str(value)


@dataclass
class ExperimentReport:
    name: str
    tables: dict = field(default_factory=dict)  # table name -> list of row dicts
    summary: dict = field(default_factory=dict)
    seed: int | None = None
    extras: dict = field(default_factory=dict, repr=False)  # in-memory only, never written

    def add_rows(self, table: str, rows) -> None:
        self.tables.setdefault(table, []).extend(rows)

    def stamp(self, timestamp: bool = True) -> dict:
        env = {"package_version": __version__, "numpy_version": np.__version__, "seed": self.seed}
        if timestamp:
            env["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        return env

    def to_json(self, timestamp: bool = True) -> str:
        doc = {
            "experiment": self.name,
            "environment": self.stamp(timestamp),
            "summary": self.summary,
            "tables": {name: len(rows) for name, rows in self.tables.items()},
        }
        return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir, fmt: str = "csv", timestamp: bool = True) -> list[Path]:
        """Write one file per table (CSV or JSON) and ``<name>_summary.json``."""
        if fmt not in ("csv", "json"):
            raise ValueError(f"format must be csv or json, got {fmt!r}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for table, rows in self.tables.items():
            path = out / f"{self.name}_{table}.{fmt}"
            if fmt == "csv":
                write_csv(path, rows)
            else:
                path.write_text(json.dumps(_plain(rows), indent=2, sort_keys=True) + "\n")
            written.append(path)
        summary = out / f"{self.name}_summary.json"
        summary.write_text(self.to_json(timestamp))
        written.append(summary)
        return written


def write_csv(path, rows: list[dict]) -> None:
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
