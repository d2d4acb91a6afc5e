"""NDJSON / CSV output helpers shared by the experiment harness."""

from __future__ import annotations

import csv
import hashlib
import json
import time


def json_line(record):
    """Deterministic single-line JSON (sorted keys, no whitespace drift)."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"), default=_coerce)


def _coerce(obj):
    try:
        import numpy as np

        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if isinstance(obj, np.bool_):
            return bool(obj)
    except ImportError:
        pass
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_ndjson(path, records, header=None):
    """Records as NDJSON; the (timestamped) header goes on its own first
    line so the remaining payload is byte-reproducible."""
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json_line(header) + "\n")
        for rec in records:
            fh.write(json_line(rec) + "\n")


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow(row)


def config_hash(config):
    return hashlib.sha256(json_line(config).encode()).hexdigest()[:16]


def manifest(config, seed, version, wall_time=None):
    return {
        "record": "manifest",
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config_hash": config_hash(config),
        "seed": seed,
        "version": version,
        "wall_time_s": wall_time,
    }
