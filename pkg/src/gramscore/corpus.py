"""Corpus ingestion: essays, score scales, fold assignments.

The corpus file is a UTF-8 tab-separated file with a header row. Column
names are supplied through a :class:`ColumnMapping`, so any essay dataset
with one essay per row can be loaded. Fields must not contain tabs or
newlines; rows are split verbatim so the essay text survives byte-for-byte.
"""

from __future__ import annotations

import json
import math
import random
import unicodedata
from dataclasses import dataclass
from pathlib import Path


class CorpusFormatError(ValueError):
    """File-level problem: missing column, bad header, malformed config."""


class RowParseError(ValueError):
    """Row-level problem; message carries the 1-based data row number."""


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> tuple[str, ...]:
    """Split on Unicode whitespace and strip punctuation from token edges.

    Pieces that are pure punctuation vanish, so ``word_count`` counts words
    rather than symbols. Deterministic: no locale or state involved.
    """
    tokens = []
    for piece in text.split():
        start, end = 0, len(piece)
        while start < end and _is_punct(piece[start]):
            start += 1
        while end > start and _is_punct(piece[end - 1]):
            end -= 1
        if end > start:
            tokens.append(piece[start:end])
    return tuple(tokens)


@dataclass(frozen=True)
class Essay:
    essay_id: str
    prompt_id: int
    text: str
    tokens: tuple[str, ...]
    raw_score: int
    grammar_score: int | None = None

    @property
    def word_count(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class ScoreScale:
    """Integer score range for one prompt; maps bijectively onto [-1, 1]."""

    prompt_id: int
    min_score: int
    max_score: int

    def __post_init__(self) -> None:
        if self.max_score <= self.min_score:
            raise CorpusFormatError(
                f"prompt {self.prompt_id}: max_score {self.max_score} must exceed "
                f"min_score {self.min_score}"
            )


def normalize_score(s: int, scale: ScoreScale) -> float:
    """Affine map of an integer score onto [-1, 1]."""
    if not scale.min_score <= s <= scale.max_score:
        raise ValueError(
            f"score {s} outside [{scale.min_score}, {scale.max_score}] "
            f"for prompt {scale.prompt_id}"
        )
    return 2.0 * (s - scale.min_score) / (scale.max_score - scale.min_score) - 1.0


def denormalize_prediction(y: float, scale: ScoreScale) -> int:
    """Inverse of :func:`normalize_score` for arbitrary model outputs.

    Rounds half away from zero, then clamps into the scale, so wild
    predictions still yield a reportable integer score.
    """
    if not math.isfinite(y):
        raise ValueError(f"prediction must be finite, got {y}")
    x = (y + 1.0) / 2.0 * (scale.max_score - scale.min_score) + scale.min_score
    s = math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)
    return max(scale.min_score, min(scale.max_score, s))


@dataclass(frozen=True)
class ColumnMapping:
    """Names of the corpus columns holding each essay field."""

    essay_id: str = "essay_id"
    prompt_id: str = "essay_set"
    text: str = "essay"
    score: str = "domain1_score"
    grammar_score: str | None = None


def load_corpus(path: str | Path, mapping: ColumnMapping | None = None) -> list[Essay]:
    """Read a tab-separated corpus file into a list of essays.

    Raises CorpusFormatError when a mapped column is missing from the
    header, RowParseError (with the 1-based data row number) for malformed
    rows.
    """
    mapping = mapping or ColumnMapping()
    raw = Path(path).read_text(encoding="utf-8")
    lines = raw.splitlines()
    if not lines:
        raise CorpusFormatError(f"{path}: empty corpus file")
    header = lines[0].split("\t")
    col = {name: i for i, name in enumerate(header)}

    wanted = [mapping.essay_id, mapping.prompt_id, mapping.text, mapping.score]
    if mapping.grammar_score is not None:
        wanted.append(mapping.grammar_score)
    for name in wanted:
        if name not in col:
            raise CorpusFormatError(f"{path}: missing column '{name}'")

    essays = []
    for row_no, line in enumerate(lines[1:], start=1):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            raise RowParseError(
                f"row {row_no}: expected {len(header)} fields, found {len(fields)}"
            )
        text = fields[col[mapping.text]]
        if not text:
            raise RowParseError(f"empty essay text, row {row_no}")
        tokens = tokenize(text)
        if not tokens:
            raise RowParseError(f"no word tokens in essay text, row {row_no}")
        try:
            prompt_id = int(fields[col[mapping.prompt_id]])
            raw_score = int(fields[col[mapping.score]])
        except ValueError as exc:
            raise RowParseError(f"row {row_no}: non-integer value ({exc})") from None
        grammar: int | None = None
        if mapping.grammar_score is not None:
            cell = fields[col[mapping.grammar_score]]
            if cell:
                try:
                    grammar = int(cell)
                except ValueError:
                    raise RowParseError(
                        f"row {row_no}: non-integer grammar score '{cell}'"
                    ) from None
        essays.append(
            Essay(
                essay_id=fields[col[mapping.essay_id]],
                prompt_id=prompt_id,
                text=text,
                tokens=tokens,
                raw_score=raw_score,
                grammar_score=grammar,
            )
        )
    return essays


@dataclass(frozen=True)
class FoldAssignment:
    fold_index: int
    train: frozenset[str]
    dev: frozenset[str]
    test: frozenset[str]

    def __post_init__(self) -> None:
        pairs = [(self.train, self.dev), (self.train, self.test), (self.dev, self.test)]
        if any(a & b for a, b in pairs):
            raise CorpusFormatError(f"fold {self.fold_index}: splits overlap")


def load_folds(path: str | Path) -> list[FoldAssignment]:
    """Read a fold file: {"folds": [{"train": [...], "dev": [...], "test": [...]}]}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "folds" not in doc:
        raise CorpusFormatError(f"{path}: missing 'folds' key")
    folds = []
    for i, entry in enumerate(doc["folds"]):
        try:
            folds.append(
                FoldAssignment(
                    fold_index=i,
                    train=frozenset(entry["train"]),
                    dev=frozenset(entry["dev"]),
                    test=frozenset(entry["test"]),
                )
            )
        except KeyError as exc:
            raise CorpusFormatError(f"{path}: fold {i} missing split {exc}") from None
    return folds


def validate_folds(folds: list[FoldAssignment], essay_ids: set[str]) -> None:
    """Check each fold partitions exactly the given id set."""
    for fold in folds:
        union = fold.train | fold.dev | fold.test
        if union != essay_ids:
            missing = essay_ids - union
            extra = union - essay_ids
            raise CorpusFormatError(
                f"fold {fold.fold_index} does not partition the corpus "
                f"(missing {len(missing)}, unknown {len(extra)})"
            )


def make_folds(essay_ids: list[str], seed: int, n_folds: int = 5) -> list[FoldAssignment]:
    """Deterministic fallback splitter when no published fold file exists.

    Shuffles ids with the seed, cuts them into ``n_folds`` chunks, and for
    fold i uses chunk i as test, chunk i+1 as dev, and the rest as train,
    giving the 60/20/20 proportions for five folds.
    """
    ids = sorted(essay_ids)
    random.Random(seed).shuffle(ids)
    chunks = [ids[i::n_folds] for i in range(n_folds)]
    folds = []
    for i in range(n_folds):
        test = chunks[i]
        dev = chunks[(i + 1) % n_folds]
        train = [x for j, c in enumerate(chunks) if j not in (i, (i + 1) % n_folds) for x in c]
        folds.append(
            FoldAssignment(
                fold_index=i,
                train=frozenset(train),
                dev=frozenset(dev),
                test=frozenset(test),
            )
        )
    return folds


def load_scales(path: str | Path) -> dict[int, ScoreScale]:
    """Read the per-prompt score range config: {"1": {"min": 2, "max": 12}, ...}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    scales = {}
    for key, entry in doc.items():
        try:
            pid = int(key)
            scales[pid] = ScoreScale(pid, int(entry["min"]), int(entry["max"]))
        except (TypeError, ValueError, KeyError):
            raise CorpusFormatError(f"{path}: bad scale entry for prompt '{key}'") from None
    return scales
