"""CSV emission and ingestion for experiment artifacts, plus the run manifest.

All floats are written with shortest round-trip formatting and undefined
rates as "NA", so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

from .metrics import MetricsReport

METRICS_HEADER = ["model", "revenue", "no_change_rate", "cost", "net_revenue", "oracle_overlap", "tau"]


def _fmt(x) -> str:
    return "NA" if x is None else repr(float(x))


def _parse(x: str):
    return None if x == "NA" else float(x)


def write_metrics_csv(path, reports: list[MetricsReport]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for r in reports:
            writer.writerow([
                r.label, _fmt(r.revenue), _fmt(r.no_change_rate), _fmt(r.cost),
                _fmt(r.net_revenue), _fmt(r.oracle_overlap), _fmt(r.tau),
            ])


def read_metrics_csv(path) -> list[dict]:
    rows = []
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != METRICS_HEADER:
            raise ValueError(f"expected header {METRICS_HEADER}, got {header}")
        for row in reader:
            rows.append({
                "model": row[0],
                **{key: _parse(val) for key, val in zip(METRICS_HEADER[1:], row[1:])},
            })
    return rows


def write_rates_csv(path, model_rates, oracle_rates) -> None:
    """Per-bucket audit-rate curve: bucket, rate, plus the oracle's rate."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bucket", "rate", "oracle_rate"])
        for b, (rate, oracle) in enumerate(zip(model_rates, oracle_rates), start=1):
            writer.writerow([b, _fmt(rate), _fmt(oracle)])


def read_rates_csv(path) -> list[dict]:
    rows = []
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["bucket", "rate", "oracle_rate"]:
            raise ValueError(f"unexpected header {header}")
        for row in reader:
            rows.append({"bucket": int(row[0]), "rate": _parse(row[1]), "oracle_rate": _parse(row[2])})
    return rows


def config_hash(config_dict: dict) -> str:
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(path, config_dict: dict, seed: int, outputs: list[str], warnings: list[str]) -> None:
    doc = {
        "config_hash": config_hash(config_dict),
        "seed": seed,
        "outputs": sorted(outputs),
        "warnings": list(warnings),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
