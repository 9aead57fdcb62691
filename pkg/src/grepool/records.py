"""Line-delimited JSON result records and the human-readable summary table.

A records file starts with a header line naming the schema and version;
every following line is one JSON object with a ``kind`` of ``run`` or
``aggregate``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable

SCHEMA = "grepool-records"
SCHEMA_VERSION = 1


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _clean(x):
    # NaN does not survive a JSON round trip as an equal value
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item"):  # numpy scalars
        return _clean(x.item())
    return x


def dumps(records: Iterable[dict]) -> str:
    lines = [json.dumps({"schema": SCHEMA, "version": SCHEMA_VERSION})]
    lines += [json.dumps(_clean(r), sort_keys=True) for r in records]
    return "\n".join(lines) + "\n"


def loads(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty records file")
    header = json.loads(lines[0])
    if header.get("schema") != SCHEMA:
        raise ValueError(f"not a {SCHEMA} file")
    if header.get("version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported records version {header.get('version')}")
    return [json.loads(ln) for ln in lines[1:]]


def write_records(path, records: Iterable[dict]) -> None:
    Path(path).write_text(dumps(records))


def read_records(path) -> list[dict]:
    return loads(Path(path).read_text())


def write_curves(path, curves: dict[str, list[float]]) -> None:
    keys = list(curves)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", *keys])
        for i, row in enumerate(zip(*(curves[k] for k in keys))):
            w.writerow([i, *(repr(float(v)) for v in row)])


def format_table(rows: list[dict], columns: list[str]) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        return "-" if v is None else str(v)

    cells = [[fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c)
              for i, c in enumerate(columns)]
    line = "  ".join(c.ljust(w) for c, w in zip(columns, widths))
    out = [line, "  ".join("-" * w for w in widths)]
    out += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(out) + "\n"
