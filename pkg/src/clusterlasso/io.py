"""File formats: numeric CSV ingestion with located errors, atomic writes
and versioned key-value documents."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1


class InputError(ValueError):
    """Bad user input; the CLI maps it to exit code 2."""


def _parse_float(tok: str) -> float | None:
    try:
        v = float(tok)
    except ValueError:
        return None
    return v


def read_matrix_csv(path, name: str = "design") -> tuple[np.ndarray, list[str] | None]:
    """Read a comma separated numeric matrix.

    A first row containing any non-numeric cell is taken as a header. Every
    other cell must parse to a finite float; errors report the 1-based line
    and column.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise InputError(f"{name}: cannot read {path}: {e.strerror}") from None
    rows = list(csv.reader(text.splitlines()))
    lines = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not lines:
        raise InputError(f"{name}: {path} is empty")
    header = None
    first_line, first = lines[0]
    if any(_parse_float(c.strip()) is None for c in first):
        header = [c.strip() for c in first]
        lines = lines[1:]
        if not lines:
            raise InputError(f"{name}: {path} has a header but no data rows")
    width = len(header) if header is not None else len(lines[0][1])
    data = np.empty((len(lines), width))
    for i, (ln, row) in enumerate(lines):
        if len(row) != width:
            raise InputError(f"{name}: {path} line {ln}: expected {width} columns, found {len(row)}")
        for j, cell in enumerate(row):
            v = _parse_float(cell.strip())
            if v is None:
                raise InputError(f"{name}: {path} line {ln}, column {j + 1}: not a number: {cell.strip()!r}")
            if not math.isfinite(v):
                raise InputError(f"{name}: {path} line {ln}, column {j + 1}: non-finite value {cell.strip()!r}")
            data[i, j] = v
    return data, header


def read_response_csv(path) -> np.ndarray:
    data, _ = read_matrix_csv(path, "response")
    if data.shape[1] != 1:
        raise InputError(f"response: expected a single column, found {data.shape[1]}")
    return data[:, 0]


def fmt(x) -> str:
    """Shortest round-tripping text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return "\n".join(out) + "\n"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    atomic_write(path, csv_text(header, rows))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return obj


def document_text(kind: str, body: dict) -> str:
    """Versioned, indented JSON document with sorted keys."""
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind}
    doc.update(_plain(body))
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_document(path, kind: str, body: dict) -> None:
    atomic_write(path, document_text(kind, body))


def read_document(path, kind: str | None = None) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path} line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a key-value document")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    if kind is not None and doc.get("kind") != kind:
        raise InputError(f"{path}: expected a {kind!r} document, found {doc.get('kind')!r}")
    return doc
