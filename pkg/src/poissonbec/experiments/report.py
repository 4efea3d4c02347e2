"""Experiment reports and their on-disk layout."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .config import ExperimentConfig


def clt_half_width(p: float, m: int) -> float:
    """``3 sqrt(p (1 - p) / M)``."""
    return 3.0 * math.sqrt(max(p * (1.0 - p), 0.0) / m) if m > 0 else float("nan")


def frequency(flags) -> dict:
    """Frequency of true flags with its CLT half-width."""
    flags = [bool(f) for f in flags]
    m = len(flags)
    p = sum(flags) / m if m else float("nan")
    return {"frequency": p, "half_width": clt_half_width(p, m), "trials": m}


def tally(outcomes) -> dict:
    """Counts of held / vacuous / violated / solver_failed."""
    out = {"held": 0, "vacuous": 0, "violated": 0, "solver_failed": 0}
    for o in outcomes:
        out[o] += 1
    return out


def nondecreasing(xs) -> bool:
    return all(b >= a for a, b in zip(xs, xs[1:]))


def strictly_increasing(xs) -> bool:
    return all(b > a for a, b in zip(xs, xs[1:]))


def strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if (math.isnan(v) or math.isinf(v)) else v
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    columns: list
    rows: list
    aggregates: dict
    tallies: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    def trials_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def summary(self) -> dict:
        return _jsonable({
            "kind": self.config.kind,
            "tool_version": __version__,
            "config": self.config.to_ini(),
            "aggregates": self.aggregates,
            "tallies": self.tallies,
            "warnings": self.warnings,
            "timing": self.timing,
        })

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> Path:
        """Write ``<out_dir>/<kind>-<timestamp>/{trials.csv, summary.json, config.echo}``."""
        stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
        base = Path(out_dir)
        base.mkdir(parents=True, exist_ok=True)
        target = base / f"{self.config.kind}-{stamp}"
        suffix = 1
        while target.exists():
            target = base / f"{self.config.kind}-{stamp}-{suffix}"
            suffix += 1
        target.mkdir()
        (target / "trials.csv").write_text(self.trials_csv(), encoding="utf-8")
        (target / "summary.json").write_text(self.summary_json(), encoding="utf-8")
        (target / "config.echo").write_text(self.config.to_ini(), encoding="utf-8")
        return target
