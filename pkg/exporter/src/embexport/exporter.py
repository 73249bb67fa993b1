"""Embedding export: real encoder runs and seeded random fixtures."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_ENCODER = "bert-base-uncased"
DEFAULT_MAX_LEN = 512


class ExportError(RuntimeError):
    pass


class EncoderResolutionError(ExportError):
    """The encoder checkpoint could not be resolved by its identifier."""


@dataclass(frozen=True)
class CorpusEntry:
    essay_id: str
    text: str


def read_corpus(
    path: str | Path, id_column: str = "essay_id", text_column: str = "essay"
) -> list[CorpusEntry]:
    """Minimal reader for the pipeline's tab-separated corpus format."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ExportError(f"{path}: empty corpus file")
    header = lines[0].split("\t")
    try:
        id_idx, text_idx = header.index(id_column), header.index(text_column)
    except ValueError as exc:
        raise ExportError(f"{path}: missing column ({exc})") from None
    entries = []
    for row_no, line in enumerate(lines[1:], start=1):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            raise ExportError(
                f"{path}: row {row_no}: expected {len(header)} fields, got {len(fields)}"
            )
        entries.append(CorpusEntry(essay_id=fields[id_idx], text=fields[text_idx]))
    ids = [e.essay_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ExportError(f"{path}: duplicate essay ids")
    return entries


def write_embedding_file(
    path: str | Path,
    ids: list[str],
    vectors: np.ndarray,
    encoder_id: str,
    max_len: int | None,
) -> None:
    """One JSON header line, then float32 little-endian rows."""
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
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


def read_embedding_file(path: str | Path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = fh.read()
    expected = 4 * header["n"] * header["d"]
    if len(payload) != expected:
        raise ExportError(f"{path}: payload {len(payload)} bytes, expected {expected}")
    return header, np.frombuffer(payload, dtype="<f4").reshape(header["n"], header["d"])


def _load_encoder(encoder_id: str):
    """Resolve a checkpoint id to (tokenizer, model) in eval mode."""
    try:
        import torch
        from transformers import AutoModel, AutoTokenizer
    except ImportError as exc:
        raise EncoderResolutionError(
            f"encoder '{encoder_id}' needs the optional [encoder] dependencies ({exc})"
        ) from None
    try:
        tokenizer = AutoTokenizer.from_pretrained(encoder_id)
        model = AutoModel.from_pretrained(encoder_id)
    except Exception as exc:
        raise EncoderResolutionError(
            f"could not resolve encoder '{encoder_id}': {exc}"
        ) from None
    model.eval()
    torch.set_grad_enabled(False)
    return tokenizer, model


def export_embeddings(
    corpus_path: str | Path,
    out_path: str | Path,
    encoder_id: str = DEFAULT_ENCODER,
    max_len: int = DEFAULT_MAX_LEN,
    batch_size: int = 8,
    id_column: str = "essay_id",
    text_column: str = "essay",
    loader=None,
) -> dict:
    """Deterministic eval-mode encoding of every essay.

    Row i is the first-position pooled vector of essay i, truncated to
    ``max_len`` sub-tokens. Returns the written header.
    """
    entries = read_corpus(corpus_path, id_column, text_column)
    for entry in entries:
        if not entry.text.strip():
            raise ExportError(f"essay '{entry.essay_id}' produced zero tokens")
    tokenizer, model = (loader or _load_encoder)(encoder_id)
    rows = []
    for start in range(0, len(entries), batch_size):
        batch = entries[start : start + batch_size]
        encoded = tokenizer(
            [e.text for e in batch],
            padding=True,
            truncation=True,
            max_length=max_len,
            return_tensors="pt",
        )
        output = model(**encoded)
        pooled = output.last_hidden_state[:, 0, :]
        rows.append(pooled.detach().cpu().numpy().astype("<f4"))
    vectors = np.concatenate(rows, axis=0)
    write_embedding_file(out_path, [e.essay_id for e in entries], vectors, encoder_id, max_len)
    return {"n": vectors.shape[0], "d": int(vectors.shape[1]), "encoder_id": encoder_id}


def export_random(
    corpus_path: str | Path,
    out_path: str | Path,
    d: int,
    seed: int,
    id_column: str = "essay_id",
    text_column: str = "essay",
) -> dict:
    """Seeded standard-normal rows in the same file format.

    A fixture generator: the scoring pipeline's tests run against these
    files without any encoder installed.
    """
    if d <= 0:
        raise ExportError(f"embedding dimension must be positive, got {d}")
    entries = read_corpus(corpus_path, id_column, text_column)
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((len(entries), d)).astype("<f4")
    write_embedding_file(
        out_path, [e.essay_id for e in entries], vectors, f"random:{seed}", None
    )
    return {"n": len(entries), "d": d, "encoder_id": f"random:{seed}"}
