"""Input schemas for the roughplane CLI artifacts.

Each figure kind declares the artifact it reads; inputs are validated
against these schemas before any drawing happens, and a mismatch raises
SchemaMismatch (CLI exit code 1).
"""

from __future__ import annotations

import csv
import json


class SchemaMismatch(Exception):
    """The input file does not match the expected CLI artifact schema."""


CSV_SCHEMAS = {
    "survival": ["t", "survival"],
    "chi": ["r", "std_d"],
    "jacobi": ["t", "j", "jp", "K"],
    "shape": ["r", "mu", "ci95"],
    "path": ["t", "x1", "x2", "v1", "v2", "lambda"],
    "frontier": ["r", "alpha", "Z", "in_Q"],
}

NDJSON_RECORDS = {
    "pov-table": "pov_verify",
}


def read_csv_columns(path, kind):
    """Columns of a CLI CSV artifact as {name: list of floats}."""
    expected = CSV_SCHEMAS[kind]
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise SchemaMismatch(f"cannot read {path}: {exc}") from exc
    if header != expected:
        raise SchemaMismatch(f"{path}: expected columns {expected}, found {header}")
    if not rows:
        raise SchemaMismatch(f"{path}: no data rows")
    cols = {name: [] for name in expected}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(expected):
            raise SchemaMismatch(f"{path}:{lineno}: expected {len(expected)} fields")
        for name, value in zip(expected, row):
            try:
                cols[name].append(float(value))
            except ValueError as exc:
                raise SchemaMismatch(f"{path}:{lineno}: non-numeric {name}={value!r}") from exc
    return cols


def read_ndjson_records(path, record_kind):
    """Records of the given kind from an NDJSON artifact (the manifest
    header line is skipped)."""
    out = []
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise SchemaMismatch(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"{path}:{lineno}: invalid JSON") from exc
        if rec.get("record") == record_kind:
            out.append(rec)
    if not out:
        raise SchemaMismatch(f"{path}: no {record_kind!r} records")
    required = {"functional", "t", "N", "A", "B", "SE", "z", "excluded"}
    for rec in out:
        missing = required - set(rec)
        if missing:
            raise SchemaMismatch(f"{path}: {record_kind} record missing {sorted(missing)}")
    return out
