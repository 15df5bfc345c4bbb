"""CSV and JSON artifacts.

Every CSV starts with one ``#`` comment line holding run metadata (including
a timestamp and wall time); everything below it is a deterministic function
of the inputs. Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def csv_body(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = {"generated_at": timestamp(), **(meta or {})}
    path.write_text("# " + json.dumps(head, sort_keys=True, default=str) + "\n" + csv_body(columns, rows))
    return path


def read_csv(path: str | Path) -> tuple[dict, list[str], np.ndarray]:
    """Return (metadata, column names, float array) of a numeric CSV written by :func:`write_csv`."""
    lines = Path(path).read_text().splitlines()
    meta = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else {}
    body = lines[1:] if meta else lines
    columns = body[0].split(",")
    data = [[float(v) if v != "" else math.nan for v in line.split(",")] for line in body[1:]]
    return meta, columns, np.array(data, dtype=float).reshape(len(data), len(columns))


def read_table(path: str | Path) -> tuple[dict, list[dict[str, str]]]:
    """Return (metadata, rows as dicts of strings); for tables with text columns."""
    lines = Path(path).read_text().splitlines()
    meta = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else {}
    return meta, list(csv.DictReader(lines[1:] if meta else lines))


def csv_body_bytes(path: str | Path) -> bytes:
    """File contents without the metadata line."""
    raw = Path(path).read_bytes()
    return raw.split(b"\n", 1)[1] if raw.startswith(b"# ") else raw


def write_q(path: str | Path, q: np.ndarray, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"shape": list(q.shape), "q": np.asarray(q, dtype=float).tolist(), **extra}
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def read_q(path: str | Path) -> np.ndarray:
    doc = json.loads(Path(path).read_text())
    q = np.asarray(doc["q"], dtype=float)
    if list(q.shape) != list(doc.get("shape", q.shape)):
        raise ValueError(f"{path}: stored shape {doc['shape']} does not match table {q.shape}")
    return q
