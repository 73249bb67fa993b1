"""Tab-separated tables with embedded metadata, plus content hashing.

Tables open with ``# key=value`` comment lines (sorted by key, so output
is byte-stable), then a header row naming the id column and the value
columns. Used for feature tables (essay_id + K reals) and ability tables
(essay_id, theta, posterior_sd).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class TableFormatError(ValueError):
    pass


def write_table(
    path: str | Path,
    ids: list[str],
    matrix: np.ndarray,
    columns: list[str],
    meta: dict[str, str] | None = None,
) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape != (len(ids), len(columns)):
        raise TableFormatError(
            f"matrix shape {matrix.shape} does not match {len(ids)} ids x {len(columns)} columns"
        )
    lines = []
    for key in sorted(meta or {}):
        lines.append(f"# {key}={meta[key]}")
    lines.append("\t".join(["essay_id", *columns]))
    for eid, row in zip(ids, matrix):
        lines.append("\t".join([eid, *(repr(float(v)) for v in row)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_table(path: str | Path) -> tuple[list[str], np.ndarray, list[str], dict[str, str]]:
    meta: dict[str, str] = {}
    ids: list[str] = []
    rows: list[list[float]] = []
    columns: list[str] | None = None
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value
            continue
        fields = line.split("\t")
        if columns is None:
            if fields[0] != "essay_id":
                raise TableFormatError(f"{path}: line {line_no}: header must start with essay_id")
            columns = fields[1:]
            continue
        if len(fields) != len(columns) + 1:
            raise TableFormatError(
                f"{path}: line {line_no}: expected {len(columns) + 1} fields, got {len(fields)}"
            )
        ids.append(fields[0])
        try:
            rows.append([float(v) for v in fields[1:]])
        except ValueError as exc:
            raise TableFormatError(f"{path}: line {line_no}: {exc}") from None
    if columns is None:
        raise TableFormatError(f"{path}: missing header row")
    matrix = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(columns)))
    return ids, matrix, columns, meta
