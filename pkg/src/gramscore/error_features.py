"""Error-rate features from M2-format annotation files.

An M2 file is a sequence of blocks. Each block opens with an ``S`` line
carrying the (tokenized) sentence, followed by zero or more ``A`` lines:

    A <start> <end>|||<tag>|||<correction>|||...

``noop`` edits mark error-free sentences and are discarded. A comment line
``# id=<essay_id>`` before a block attaches it to an essay; without id
comments, blocks are aligned to the corpus positionally.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


class M2ParseError(ValueError):
    """Malformed line; message carries the 1-based line number."""


class M2StructureError(ValueError):
    """Well-formed lines in an impossible order (e.g. A before any S)."""


@dataclass(frozen=True)
class Edit:
    start: int
    end: int
    tag: str


@dataclass
class M2Block:
    sentence: str
    essay_id: str | None = None
    edits: list[Edit] = field(default_factory=list)


@dataclass(frozen=True)
class ErrorTagVocabulary:
    """Ordered, unique error tags; vector index = list position.

    A literal ``OTHER`` entry, when present, absorbs tags that match
    neither verbatim nor by category.
    """

    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.tags)) != len(self.tags):
            raise ValueError("error tags must be unique")

    def __len__(self) -> int:
        return len(self.tags)

    def index_of(self, tag: str) -> int | None:
        """Resolve a tag: verbatim first, then its category (the part after
        the operation prefix, supporting category-only vocabularies), then
        the reserved OTHER slot if configured."""
        idx = self._index().get(tag)
        if idx is not None:
            return idx
        if ":" in tag:
            idx = self._index().get(tag.split(":", 1)[1])
            if idx is not None:
                return idx
        return self._index().get("OTHER")

    def _index(self) -> dict[str, int]:
        cached = getattr(self, "_cache", None)
        if cached is None:
            cached = {t: i for i, t in enumerate(self.tags)}
            object.__setattr__(self, "_cache", cached)
        return cached


def load_vocabulary(source: str | Path | list[str]) -> ErrorTagVocabulary:
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text(encoding="utf-8"))
    return ErrorTagVocabulary(tags=tuple(source))


def default_vocabulary() -> ErrorTagVocabulary:
    text = resources.files("gramscore.data").joinpath("err54.json").read_text("utf-8")
    return ErrorTagVocabulary(tags=tuple(json.loads(text)))


@dataclass(frozen=True)
class NFVector:
    """Grammatical errors per 100 words, one element per vocabulary tag."""

    values: np.ndarray

    def __post_init__(self) -> None:
        if (self.values < 0).any() or not np.isfinite(self.values).all():
            raise ValueError("error rates must be nonnegative and finite")


def parse_m2(path: str | Path) -> list[M2Block]:
    """Parse an M2 file into blocks, discarding noop edits."""
    blocks: list[M2Block] = []
    pending_id: str | None = None
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.rstrip()
        if not line:
            continue
        if line.startswith("# id="):
            pending_id = line[len("# id=") :].strip()
        elif line.startswith("#"):
            continue
        elif line.startswith("S ") or line == "S":
            blocks.append(M2Block(sentence=line[2:], essay_id=pending_id))
            pending_id = None
        elif line.startswith("A "):
            if not blocks:
                raise M2StructureError(f"line {line_no}: A line before any S line")
            fields = line[2:].split("|||")
            if len(fields) < 2:
                raise M2ParseError(f"line {line_no}: A line needs '|||'-separated fields")
            span = fields[0].split()
            if len(span) != 2:
                raise M2ParseError(f"line {line_no}: span must be '<start> <end>'")
            try:
                start, end = int(span[0]), int(span[1])
            except ValueError:
                raise M2ParseError(f"line {line_no}: non-integer span '{fields[0]}'") from None
            tag = fields[1]
            if tag == "noop":
                continue
            blocks[-1].edits.append(Edit(start=start, end=end, tag=tag))
        else:
            raise M2ParseError(f"line {line_no}: unrecognized line '{line[:40]}'")
    return blocks


def format_m2(blocks: list[M2Block]) -> str:
    """Render blocks back to M2 text (round-trips everything parse_m2 keeps)."""
    lines = []
    for block in blocks:
        if block.essay_id is not None:
            lines.append(f"# id={block.essay_id}")
        lines.append(f"S {block.sentence}" if block.sentence else "S")
        for e in block.edits:
            lines.append(f"A {e.start} {e.end}|||{e.tag}|||-NONE-|||REQUIRED|||-NONE-|||0")
    return "\n".join(lines) + "\n"


def edits_by_essay(
    blocks: list[M2Block], corpus_ids: list[str] | None = None
) -> dict[str, list[Edit]]:
    """Group edits per essay.

    Uses the ``# id=`` comments when every block carries one; otherwise
    falls back to positional alignment against ``corpus_ids`` (block k
    belongs to essay k).
    """
    if all(b.essay_id is not None for b in blocks) and blocks:
        grouped: dict[str, list[Edit]] = {}
        for b in blocks:
            grouped.setdefault(b.essay_id, []).extend(b.edits)
        return grouped
    if corpus_ids is None:
        raise M2StructureError(
            "blocks lack '# id=' comments and no corpus ids were given for "
            "positional alignment"
        )
    if len(blocks) != len(corpus_ids):
        raise M2StructureError(
            f"positional alignment needs one block per essay: "
            f"{len(blocks)} blocks vs {len(corpus_ids)} essays"
        )
    return {eid: list(b.edits) for eid, b in zip(corpus_ids, blocks)}


def extract_nf(
    edits: list[Edit],
    word_count: int,
    vocab: ErrorTagVocabulary,
    dropped: Counter | None = None,
) -> NFVector:
    """Turn an essay's edits into errors-per-100-words rates.

    Tags that resolve to no vocabulary slot are dropped; pass a Counter to
    see what was discarded.
    """
    if word_count <= 0:
        raise ValueError(f"word_count must be positive, got {word_count}")
    counts = np.zeros(len(vocab), dtype=np.float64)
    for edit in edits:
        idx = vocab.index_of(edit.tag)
        if idx is None:
            if dropped is not None:
                dropped[edit.tag] += 1
            continue
        counts[idx] += 1
    return NFVector(values=counts * 100.0 / word_count)
