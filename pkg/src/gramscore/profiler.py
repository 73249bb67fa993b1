"""Grammatical-item catalog: pattern DSL, compiler, and usage counting.

Patterns are written over tokens, not characters. A pattern is a sequence
of elements separated by spaces:

* a literal word, matched case-insensitively against one token;
* an alternation ``(a|b c)`` whose branches are word sequences;
* a placeholder ``<NAME>`` matching one token from a closed word class
  defined in the lexicon file;
* a bounded wildcard ``\\w{m,n}`` matching between m and n arbitrary
  tokens;
* any element followed by ``?`` is optional.

Matching runs over a canonical rendering of the token sequence: tokens are
lowercased and joined with single spaces, and every element must start and
end on a token boundary. Counting is leftmost non-overlapping, with
wildcards taking the shortest extent, so counts are unambiguous.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

_WORD_CHARS = re.compile(r"[0-9A-Za-z'’\-]+")


class CatalogError(ValueError):
    """Structural problem in a catalog file (duplicate ids, bad merges)."""


class PatternSyntaxError(CatalogError):
    """Bad pattern expression; carries the item id and column offset."""

    def __init__(self, message: str, item_id: int | None = None, column: int | None = None):
        self.item_id = item_id
        self.column = column
        where = ""
        if item_id is not None:
            where += f"item {item_id}: "
        if column is not None:
            message += f" (column {column})"
        super().__init__(where + message)


@dataclass(frozen=True)
class GrammarPattern:
    item_id: int
    label: str
    expr: str
    level: str | None = None
    merge_into: int | None = None


@dataclass(frozen=True)
class PFVector:
    """Positive-feature vector for one essay; binary after binarization."""

    values: np.ndarray
    binary: bool

    def __post_init__(self) -> None:
        if self.binary and not np.isin(self.values, (0.0, 1.0)).all():
            raise ValueError("binary PFVector must contain only 0 and 1")


def load_lexicon(source: str | Path | dict) -> dict[str, tuple[str, ...]]:
    """Load the closed-class word lists used by ``<NAME>`` placeholders."""
    if isinstance(source, (str, Path)):
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        doc = source
    lexicon = {}
    for name, words in doc.items():
        if not words:
            raise CatalogError(f"lexicon class '{name}' is empty")
        lexicon[name] = tuple(w.lower() for w in words)
    return lexicon


def default_lexicon() -> dict[str, tuple[str, ...]]:
    text = resources.files("gramscore.data").joinpath("lexicon.json").read_text("utf-8")
    return load_lexicon(json.loads(text))


def _word_fragment(word: str) -> str:
    return re.escape(word.lower()) + " "


def _alt_fragment(branches: list[str]) -> str:
    return "(?:" + "|".join(branches) + ")"


def _parse_group(expr: str, start: int, lexicon: dict, item_id: int) -> tuple[str, int]:
    end = expr.find(")", start)
    if end < 0:
        raise PatternSyntaxError("unbalanced group", item_id, start)
    body = expr[start + 1 : end]
    if "(" in body:
        raise PatternSyntaxError("nested group", item_id, start + 1 + body.index("("))
    branches = []
    for alt in body.split("|"):
        alt = alt.strip()
        if not alt:
            raise PatternSyntaxError("empty alternation branch", item_id, start)
        words = []
        for word in alt.split():
            if word.startswith("<") and word.endswith(">"):
                words.append(_placeholder_fragment(word[1:-1], lexicon, item_id, start))
            elif _WORD_CHARS.fullmatch(word):
                words.append(_word_fragment(word))
            else:
                raise PatternSyntaxError(
                    f"bad word '{word}' in alternation", item_id, start
                )
        branches.append("".join(words))
    return _alt_fragment(branches), end + 1


def _placeholder_fragment(name: str, lexicon: dict, item_id: int, column: int) -> str:
    if name not in lexicon:
        raise PatternSyntaxError(f"unknown word class <{name}>", item_id, column)
    return _alt_fragment([_word_fragment(w) for w in lexicon[name]])


_WILDCARD = re.compile(r"\\w\{(\d+),(\d+)\}")


def compile_expr(expr: str, lexicon: dict, item_id: int = -1) -> re.Pattern:
    """Compile one DSL expression to a regex over the canonical rendering."""
    fragments = []
    any_required = False
    i = 0
    n = len(expr)
    while i < n:
        if expr[i] == " ":
            i += 1
            continue
        if expr[i] == "(":
            frag, i = _parse_group(expr, i, lexicon, item_id)
        elif expr[i] == "<":
            end = expr.find(">", i)
            if end < 0:
                raise PatternSyntaxError("unclosed placeholder", item_id, i)
            frag = _placeholder_fragment(expr[i + 1 : end], lexicon, item_id, i)
            i = end + 1
        elif expr.startswith("\\w", i):
            m = _WILDCARD.match(expr, i)
            if not m:
                raise PatternSyntaxError("wildcard must be of the form \\w{m,n}", item_id, i)
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo or hi > 20:
                raise PatternSyntaxError(f"bad wildcard bounds {{{lo},{hi}}}", item_id, i)
            frag = "(?:[^ ]+ ){%d,%d}?" % (lo, hi)
            if lo == 0:
                # zero-width lower bound: the element is inherently optional
                i = m.end()
                fragments.append(frag)
                if i < n and expr[i] == "?":
                    raise PatternSyntaxError("'?' after \\w{0,n} is redundant", item_id, i)
                continue
            i = m.end()
        else:
            m = _WORD_CHARS.match(expr, i)
            if not m:
                raise PatternSyntaxError(f"unexpected character '{expr[i]}'", item_id, i)
            frag = _word_fragment(m.group(0))
            i = m.end()
        if i < n and expr[i] == "?":
            frag = "(?:" + frag + ")?"
            i += 1
        else:
            any_required = True
        fragments.append(frag)
    if not fragments:
        raise PatternSyntaxError("empty pattern", item_id, 0)
    if not any_required:
        raise PatternSyntaxError("pattern would match an empty token sequence", item_id, 0)
    return re.compile("(?<= )" + "".join(fragments))


class CompiledCatalog:
    """Immutable compiled catalog; safe to share across threads.

    ``size`` is the number of effective items after applying the optional
    many-to-one merge map; raw pattern counts are summed into their merge
    target before any downstream use.
    """

    def __init__(self, patterns: list[GrammarPattern], lexicon: dict, content_hash: str | None):
        ids = sorted(p.item_id for p in patterns)
        for i, pid in enumerate(ids):
            if i > 0 and pid == ids[i - 1]:
                raise CatalogError(f"duplicate item {pid}")
        if ids != list(range(len(ids))):
            raise CatalogError(f"item ids must be dense 0..{len(ids) - 1}")
        self.patterns = sorted(patterns, key=lambda p: p.item_id)
        by_id = {p.item_id: p for p in self.patterns}
        for p in self.patterns:
            if p.merge_into is not None:
                if p.merge_into not in by_id:
                    raise CatalogError(f"item {p.item_id}: merge target {p.merge_into} missing")
                if p.merge_into == p.item_id:
                    raise CatalogError(f"item {p.item_id} merges into itself")
                if by_id[p.merge_into].merge_into is not None:
                    raise CatalogError(
                        f"item {p.item_id}: merge target {p.merge_into} is itself merged"
                    )
        self._regexes = [compile_expr(p.expr, lexicon, p.item_id) for p in self.patterns]
        targets = [p for p in self.patterns if p.merge_into is None]
        self._effective = targets
        index_of = {p.item_id: k for k, p in enumerate(targets)}
        self._raw_to_effective = [
            index_of[p.merge_into if p.merge_into is not None else p.item_id]
            for p in self.patterns
        ]
        self.content_hash = content_hash

    @property
    def size(self) -> int:
        return len(self._effective)

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self._effective]

    @property
    def levels(self) -> list[str | None]:
        return [p.level for p in self._effective]

    def raw_counts(self, tokens) -> np.ndarray:
        rendering = " " + " ".join(t.lower() for t in tokens) + " "
        return np.array(
            [sum(1 for _ in rx.finditer(rendering)) for rx in self._regexes], dtype=np.int64
        )

    def aggregate(self, raw: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.int64)
        for raw_idx, eff_idx in enumerate(self._raw_to_effective):
            out[eff_idx] += raw[raw_idx]
        return out


def compile_catalog(
    source: str | Path | list[dict],
    lexicon: str | Path | dict | None = None,
) -> CompiledCatalog:
    """Compile a catalog file (JSON array of pattern entries).

    Each entry: {"id": int, "label": str, "expr": str, "level": str?,
    "merge_into": int?}. Compilation happens once; matching afterwards is
    pure.
    """
    content_hash = None
    if isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
        content_hash = hashlib.sha256(raw).hexdigest()
        entries = json.loads(raw.decode("utf-8"))
    else:
        entries = source
    if lexicon is None:
        lex = default_lexicon()
    elif isinstance(lexicon, dict):
        lex = load_lexicon(lexicon)
    else:
        lex = load_lexicon(Path(lexicon))
    patterns = []
    for entry in entries:
        try:
            patterns.append(
                GrammarPattern(
                    item_id=int(entry["id"]),
                    label=str(entry["label"]),
                    expr=str(entry["expr"]),
                    level=entry.get("level"),
                    merge_into=entry.get("merge_into"),
                )
            )
        except KeyError as exc:
            raise CatalogError(f"catalog entry missing field {exc}") from None
    return CompiledCatalog(patterns, lex, content_hash)


def default_catalog() -> CompiledCatalog:
    raw = resources.files("gramscore.data").joinpath("demo_catalog.json").read_bytes()
    catalog = compile_catalog(json.loads(raw.decode("utf-8")))
    catalog.content_hash = hashlib.sha256(raw).hexdigest()
    return catalog


def count_items(tokens, catalog: CompiledCatalog) -> np.ndarray:
    """Count non-overlapping matches of every catalog item over the tokens."""
    return catalog.aggregate(catalog.raw_counts(tokens))


def binarize(counts: np.ndarray) -> PFVector:
    """Indicator of use: 1 where the count is positive, else 0."""
    counts = np.asarray(counts)
    if (counts < 0).any():
        raise ValueError("counts must be nonnegative")
    return PFVector(values=(counts > 0).astype(np.float64), binary=True)
