"""Shared file formats: JSONL and CSV layouts, schema tags, config hashes.

Every file the pipeline writes starts with a header that embeds the
schema name+version and the hash of the configuration that produced it,
so downstream stages can refuse to mix incompatible artifacts.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Iterator

SCHEMA_WIFI = "wifi.v1"
SCHEMA_BLUETOOTH = "bluetooth.v1"
SCHEMA_GROUND_TRUTH = "ground_truth.v1"
SCHEMA_CANDIDATES = "candidates.v1"
SCHEMA_FEATURES = "features.v1"
SCHEMA_MODEL = "model.v1"
SCHEMA_EVAL = "eval.v1"
SCHEMA_REPORT = "report.v1"
SCHEMA_CLEANING = "cleaning_report.v1"
SCHEMA_HOMES = "home_routers.v1"
SCHEMA_SUMMARY = "scan_summary.v1"


class DataError(Exception):
    """Bad or missing input data (CLI exit code 3)."""


def config_hash(values: dict) -> str:
    """Deterministic short hash of a flat config mapping."""
    payload = json.dumps(values, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def check_schema(found_schema, found_hash, expect_schema, expect_hash=None, path=""):
    if found_schema != expect_schema:
        raise DataError(f"{path}: schema {found_schema!r}, expected {expect_schema!r}")
    if expect_hash is not None and found_hash != expect_hash:
        raise DataError(
            f"{path}: config hash {found_hash!r} does not match {expect_hash!r}"
        )


# ---------------------------------------------------------------------------
# JSONL
# ---------------------------------------------------------------------------

def write_jsonl(path, schema: str, cfg_hash: str, rows: Iterable[dict]) -> int:
    """Write a JSONL file with a leading header line. Returns the row count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": schema, "config_hash": cfg_hash}) + "\n")
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
            n += 1
    return n


def read_jsonl_header(path, expect_schema: str, expect_hash: str | None = None) -> dict:
    """Read and check the header line of a JSONL file."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing input file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    try:
        header = json.loads(first)
    except json.JSONDecodeError:
        raise DataError(f"{path}: missing JSONL header line")
    if not isinstance(header, dict) or "schema" not in header:
        raise DataError(f"{path}: missing JSONL header line")
    check_schema(header.get("schema"), header.get("config_hash"),
                 expect_schema, expect_hash, str(path))
    return header


def iter_jsonl(path) -> Iterator[tuple[int, str]]:
    """Yield (line_no, line) for the data lines of a JSONL file.

    Line numbers are 1-based file positions; the header line is skipped.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line_no == 1 and '"schema"' in line:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    obj = None
                if isinstance(obj, dict) and "schema" in obj:
                    continue
            yield line_no, line


# ---------------------------------------------------------------------------
# CSV (header comment line + column header + rows)
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def write_csv(path, schema: str, cfg_hash: str, columns: list[str],
              rows: Iterable[tuple]) -> int:
    """Write a CSV with a '#' metadata line before the column header."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={schema} config_hash={cfg_hash}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
            n += 1
    return n


def read_csv(path, expect_schema: str, expect_hash: str | None = None):
    """Read a pipeline CSV. Returns (header_meta, columns, rows-of-strings)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing input file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        meta_line = fh.readline().strip()
        if not meta_line.startswith("# "):
            raise DataError(f"{path}: missing CSV metadata line")
        meta = dict(kv.split("=", 1) for kv in meta_line[2:].split(" ") if "=" in kv)
        check_schema(meta.get("schema"), meta.get("config_hash"),
                     expect_schema, expect_hash, str(path))
        columns = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    return meta, columns, rows


# ---------------------------------------------------------------------------
# JSON documents (reports, models, ...)
# ---------------------------------------------------------------------------

def _encode_special(obj):
    """Wrap non-finite floats; json.dump rejects them under allow_nan=False."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return {"__float__": repr(obj)}
        return obj
    if isinstance(obj, dict):
        return {key: _encode_special(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode_special(value) for value in obj]
    return obj


def _decode_special(obj):
    if set(obj) == {"__float__"}:
        return float(obj["__float__"])
    return obj


def write_json(path, schema: str, cfg_hash: str, payload: dict) -> None:
    doc = {"schema": schema, "config_hash": cfg_hash}
    doc.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_encode_special(doc), fh, indent=2, allow_nan=False)
        fh.write("\n")


def read_json(path, expect_schema: str, expect_hash: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing input file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh, object_hook=_decode_special)
    check_schema(doc.get("schema"), doc.get("config_hash"),
                 expect_schema, expect_hash, str(path))
    return doc
