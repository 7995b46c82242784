"""Experiment reports and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import ParameterError

EXPERIMENTS = ("screen", "sensitivity", "misspec", "worstcase", "concentration")
FORMATS = ("csv", "json")
FAILED = "failed"

# leading columns per experiment; extra keys follow in first-seen order
COLUMNS = {
    "screen": ["mu", "sigma2", "ell", "tau2", "direction", "J", "fim_ii"],
    "sensitivity": [
        "goal", "direction", "eps", "method", "re", "xi_minus", "xi_minus_sd",
        "xi_plus", "xi_plus_sd", "fd_mean", "fd_sd", "c_star_plus", "containment", "runs",
    ],
    "misspec": [
        "goal", "q", "method", "re", "xi_minus_q1", "xi_minus_median", "xi_minus_q3",
        "xi_plus_q1", "xi_plus_median", "xi_plus_q3", "fd_q1", "fd_median", "fd_q3",
        "containment", "runs",
    ],
    "worstcase": [
        "nominal", "kind", "selection", "goal", "method", "re", "budget", "xi_minus",
        "xi_plus", "fd_mean", "fd_sd", "contained", "bin_lo", "bin_hi", "count",
    ],
}
COLUMNS["concentration"] = COLUMNS["sensitivity"] + ["estimator_variance"]


def _clean(value):
    """JSON-safe scalar: numpy types unwrapped, non-finite floats marked failed."""
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value + 0.0 if math.isfinite(value) else FAILED
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_clean(v) for v in value]
    return value


def _cell(value):
    value = _clean(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def timestamp():
    """UTC timestamp; ``SOURCE_DATE_EPOCH`` pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (
        datetime.fromtimestamp(int(epoch), tz=timezone.utc)
        if epoch
        else datetime.now(timezone.utc).replace(microsecond=0)
    )
    return moment.isoformat().replace("+00:00", "Z")


@dataclass
class ExperimentReport:
    experiment: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.experiment!r}")
        self.rows = [_clean(dict(r)) for r in self.rows]
        self.metadata = _clean(dict(self.metadata))

    def columns(self):
        cols = list(COLUMNS[self.experiment])
        for row in self.rows:
            for key in row:
                if key not in cols:
                    cols.append(key)
        if self.rows:
            present = {k for r in self.rows for k in r}
            cols = [c for c in cols if c in present]
        return cols

    def to_csv(self):
        buf = io.StringIO()
        cols = self.columns()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(cols)
        for row in self.rows:
            writer.writerow([_cell(row.get(c)) for c in cols])
        return buf.getvalue()

    def to_json(self):
        doc = {"metadata": self.metadata, "rows": self.rows}
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def emit(report, fmt="csv", destination=None):
    """Write ``report`` to ``destination`` (path, stream, or stdout when None)."""
    if fmt not in FORMATS:
        raise ParameterError(f"format must be one of {FORMATS}, got {fmt!r}")
    text = report.to_csv() if fmt == "csv" else report.to_json()
    if destination is None:
        import sys

        sys.stdout.write(text)
        return
    if hasattr(destination, "write"):
        destination.write(text)
        return
    try:
        with open(destination, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {destination}: {exc.strerror}") from exc
