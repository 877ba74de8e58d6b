"""JSON and CSV export of empirical runs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fitting import transfer_factors

REPORT_SCHEMA_VERSION = "1.0"


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class FitReport:
    """Everything one command produced: configuration, curve rows and the underlying fits.

    ``lambda_table`` (providers x users) is stored whenever strong fits
    were run so the transfer factors can be recomputed from the report.
    """

    command: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    weak: list[dict] = field(default_factory=list)
    strong: list[dict] = field(default_factory=list)
    lambda_table: list[list[float]] | None = None

    @property
    def transfer(self) -> list[float] | None:
        if self.lambda_table is None:
            return None
        return transfer_factors(np.asarray(self.lambda_table)).tolist()

    def to_dict(self) -> dict:
        return _plain({
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "rows": self.rows,
            "weak": self.weak,
            "strong": self.strong,
            "lambda_table": self.lambda_table,
            "transfer": self.transfer,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def csv_name(self) -> str:
        return f"{self.command}_{self.config.get('partition', 'groups')}_{self.config.get('score', 'linear')}.csv"

    def write_csv(self, directory) -> Path:
        """Flat table of ``rows`` (nested values are JSON-encoded)."""
        path = Path(directory) / self.csv_name()
        keys: list[str] = []
        for row in self.rows:
            keys += [k for k in row if k not in keys]
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(keys)
            for row in self.rows:
                cells = []
                for k in keys:
                    v = _plain(row.get(k, ""))
                    cells.append(json.dumps(v) if isinstance(v, (list, dict)) else repr(v) if isinstance(v, float) else v)
                out.writerow(cells)
        return path
