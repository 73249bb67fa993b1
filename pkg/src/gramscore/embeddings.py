"""Reader for frozen essay-embedding files.

Layout: one JSON header line, then n*d little-endian float32 values in
row-major order. The header carries the essay ids aligned with the rows,
the producing encoder id, and the truncation length, so a table is fully
self-describing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EmbeddingFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    ids: tuple[str, ...]
    vectors: np.ndarray  # (n, d) float32
    encoder_id: str
    max_len: int | None

    def row_for(self, essay_id: str) -> np.ndarray:
        idx = self.index().get(essay_id)
        if idx is None:
            raise KeyError(f"no embedding for essay '{essay_id}'")
        return self.vectors[idx]

    def index(self) -> dict[str, int]:
        cached = getattr(self, "_index", None)
        if cached is None:
            cached = {eid: i for i, eid in enumerate(self.ids)}
            object.__setattr__(self, "_index", cached)
        return cached


def read_embeddings(path: str | Path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EmbeddingFormatError(f"{path}: bad header ({exc})") from None
    for key in ("n", "d", "dtype", "order", "ids"):
        if key not in header:
            raise EmbeddingFormatError(f"{path}: header missing '{key}'")
    n, d = int(header["n"]), int(header["d"])
    if header["dtype"] != "f32" or header["order"] != "row-major":
        raise EmbeddingFormatError(f"{path}: unsupported layout {header['dtype']}/{header['order']}")
    if len(payload) != 4 * n * d:
        raise EmbeddingFormatError(
            f"{path}: payload is {len(payload)} bytes, header promises {4 * n * d}"
        )
    ids = tuple(header["ids"])
    if len(ids) != n or len(set(ids)) != n:
        raise EmbeddingFormatError(f"{path}: ids must be {n} unique strings")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    return EmbeddingTable(
        ids=ids,
        vectors=vectors,
        encoder_id=header.get("encoder_id", "unknown"),
        max_len=header.get("max_len"),
    )


def write_embeddings(
    path: str | Path,
    ids: list[str],
    vectors: np.ndarray,
    encoder_id: str = "fixture",
    max_len: int | None = None,
) -> None:
    """Write a table in the same format (used for fixtures and tests)."""
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise EmbeddingFormatError("vectors must be (len(ids), d)")
    header = {
        "n": int(vectors.shape[0]),
        "d": int(vectors.shape[1]),
        "dtype": "f32",
        "order": "row-major",
        "ids": list(ids),
        "encoder_id": encoder_id,
        "max_len": max_len,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(vectors.tobytes())
