"""Annotated sentences, CoNLL/IOB2 I/O, the span lattice and entity-sparsity statistics."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

OUTSIDE = "O"

Span = tuple[int, int]


class ConllFormatError(ValueError):
    """Malformed CoNLL input; ``lineno`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"invalid token {tok!r}")

    @property
    def n(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Inclusive, 0-based token span with an entity label."""

    start: int
    end: int
    label: str

    @property
    def span(self) -> Span:
        return (self.start, self.end)

    def overlaps(self, other: "EntitySpan") -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass(frozen=True)
class AnnotatedSentence:
    sentence: Sentence
    visible: frozenset[EntitySpan] = field(default_factory=frozenset)
    hidden: frozenset[EntitySpan] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "visible", frozenset(self.visible))
        object.__setattr__(self, "hidden", frozenset(self.hidden))
        n = self.sentence.n
        seen: set[Span] = set()
        for ent in (*self.visible, *self.hidden):
            if ent.label == OUTSIDE:
                raise ValueError("entity spans cannot carry the O label")
            if not 0 <= ent.start <= ent.end < n:
                raise ValueError(f"span {ent} out of range for n={n}")
            if ent.span in seen:
                raise ValueError(f"duplicate span {ent.span}")
            seen.add(ent.span)

    @property
    def n(self) -> int:
        return self.sentence.n

    @property
    def gold(self) -> frozenset[EntitySpan]:
        return self.visible | self.hidden


class LabelSet:
    """Ordered label inventory; ``"O"`` always sits at index 0."""

    def __init__(self, entity_labels: Iterable[str]):
        labels: list[str] = []
        for lab in entity_labels:
            if lab == OUTSIDE:
                raise ValueError("'O' is implicit and cannot be an entity label")
            if lab not in labels:
                labels.append(lab)
        if not labels:
            raise ValueError("need at least one entity label")
        self.entity_labels: tuple[str, ...] = tuple(labels)
        self.labels: tuple[str, ...] = (OUTSIDE, *labels)
        self._index = {lab: i for i, lab in enumerate(self.labels)}

    @classmethod
    def from_dataset(cls, dataset: Iterable[AnnotatedSentence]) -> "LabelSet":
        found = {ent.label for ex in dataset for ent in ex.gold}
        return cls(sorted(found))

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label) -> bool:
        return label in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelSet) and self.labels == other.labels

    def __repr__(self) -> str:
        return f"LabelSet({list(self.entity_labels)!r})"


def enumerate_spans(n: int, max_len: int | None = None) -> list[Span]:
    """All ``(start, end)`` pairs of an ``n``-token sentence, start-major."""
    if n < 1:
        raise ValueError("n must be >= 1")
    limit = n if max_len is None else max_len
    return [(i, j) for i in range(n) for j in range(i, min(n, i + limit))]


def lattice_size(n: int) -> int:
    return n * (n + 1) // 2


def span_index(start: int, end: int, n: int) -> int:
    """Position of ``(start, end)`` within ``enumerate_spans(n)``."""
    return start * n - start * (start - 1) // 2 + (end - start)


def _decode_tags(tags: Sequence[str], linenos: Sequence[int]) -> set[EntitySpan]:
    spans: set[EntitySpan] = set()
    cur_start, cur_label = None, None
    for i, (tag, lineno) in enumerate(zip(tags, linenos)):
        if tag == OUTSIDE:
            if cur_label is not None:
                spans.add(EntitySpan(cur_start, i - 1, cur_label))
            cur_start, cur_label = None, None
            continue
        prefix, sep, label = tag.partition("-")
        if not sep or not label or prefix not in ("B", "I"):
            raise ConllFormatError(f"malformed tag {tag!r}", lineno)
        if prefix == "B":
            if cur_label is not None:
                spans.add(EntitySpan(cur_start, i - 1, cur_label))
            cur_start, cur_label = i, label
        elif cur_label != label:
            raise ConllFormatError(
                f"tag {tag!r} does not continue a {label} entity", lineno
            )
    if cur_label is not None:
        spans.add(EntitySpan(cur_start, len(tags) - 1, cur_label))
    return spans


def parse_conll(text: str) -> list[AnnotatedSentence]:
    """Parse IOB2-tagged CoNLL text; the tag is the last column, the token the first.

    ``-DOCSTART-`` lines act as sentence separators.
    """
    out: list[AnnotatedSentence] = []
    tokens: list[str] = []
    tags: list[str] = []
    linenos: list[int] = []

    def flush():
        if tokens:
            spans = _decode_tags(tags, linenos)
            out.append(AnnotatedSentence(Sentence(tuple(tokens)), frozenset(spans)))
        tokens.clear()
        tags.clear()
        linenos.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        cols = line.split()
        if not cols or cols[0] == "-DOCSTART-":
            flush()
            continue
        if len(cols) < 2:
            raise ConllFormatError("expected at least a token and a tag column", lineno)
        tokens.append(cols[0])
        tags.append(cols[-1])
        linenos.append(lineno)
    flush()
    return out


def read_conll(path) -> list[AnnotatedSentence]:
    with open(path, encoding="utf-8") as fh:
        return parse_conll(fh.read())


def to_iob(sentence: Sentence, spans: Iterable[EntitySpan]) -> list[str]:
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for a, b in zip(ordered, ordered[1:]):
        if a.overlaps(b):
            raise ValueError(f"overlapping spans {a} and {b}")
    tags = [OUTSIDE] * sentence.n
    for ent in ordered:
        if not 0 <= ent.start <= ent.end < sentence.n:
            raise ValueError(f"span {ent} out of range for n={sentence.n}")
        tags[ent.start] = f"B-{ent.label}"
        for i in range(ent.start + 1, ent.end + 1):
            tags[i] = f"I-{ent.label}"
    return tags


def format_conll(dataset: Iterable[AnnotatedSentence], include_hidden: bool = False) -> str:
    """Two-column CoNLL text. Hidden spans are written as ``O`` unless ``include_hidden``."""
    buf = io.StringIO()
    for ex in dataset:
        spans = ex.gold if include_hidden else ex.visible
        for tok, tag in zip(ex.sentence.tokens, to_iob(ex.sentence, spans)):
            buf.write(f"{tok} {tag}\n")
        buf.write("\n")
    return buf.getvalue()


def format_hidden_sidecar(dataset: Sequence[AnnotatedSentence]) -> str:
    lines = []
    for idx, ex in enumerate(dataset):
        for ent in sorted(ex.hidden):
            lines.append(f"{idx} {ent.start} {ent.end} {ent.label}\n")
    return "".join(lines)


def attach_hidden(dataset: Sequence[AnnotatedSentence], sidecar: str) -> list[AnnotatedSentence]:
    """Re-attach hidden spans from a ``sentence_index start end label`` sidecar."""
    extra: dict[int, set[EntitySpan]] = defaultdict(set)
    for lineno, line in enumerate(sidecar.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ConllFormatError("sidecar lines need 4 fields", lineno)
        try:
            idx, start, end = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise ConllFormatError("non-integer sidecar field", lineno) from None
        if not 0 <= idx < len(dataset):
            raise ConllFormatError(f"sentence index {idx} out of range", lineno)
        extra[idx].add(EntitySpan(start, end, parts[3]))
    return [
        AnnotatedSentence(ex.sentence, ex.visible, ex.hidden | extra.get(i, set()))
        for i, ex in enumerate(dataset)
    ]


@dataclass(frozen=True)
class SparsityRow:
    length: int
    support: int
    mean_entities: float
    variance: float
    sqrt_length: float
    violation_fraction: float


SPARSITY_COLUMNS = ("length", "support", "mean_entities", "variance", "sqrt_length", "violation_fraction")


def sparsity_report(dataset: Sequence[AnnotatedSentence], min_support: int = 20) -> list[SparsityRow]:
    """Per-length entity counts (visible + hidden) against sqrt(n).

    Lengths with fewer than ``min_support`` sentences are dropped.
    Variance is the population variance.
    """
    if min_support < 1:
        raise ValueError("min_support must be >= 1")
    by_len: dict[int, list[int]] = defaultdict(list)
    for ex in dataset:
        by_len[ex.n].append(len(ex.visible) + len(ex.hidden))
    rows = []
    for n in sorted(by_len):
        counts = np.array(sorted(by_len[n]), dtype=float)
        if len(counts) < min_support:
            continue
        root = math.sqrt(n)
        rows.append(SparsityRow(
            length=n,
            support=len(counts),
            mean_entities=float(counts.mean()),
            variance=float(counts.var()),
            sqrt_length=root,
            violation_fraction=float(np.mean(counts > root)),
        ))
    return rows


def sparsity_csv(rows: Sequence[SparsityRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SPARSITY_COLUMNS)
    for r in rows:
        writer.writerow([r.length, r.support, repr(r.mean_entities), repr(r.variance),
                         repr(r.sqrt_length), repr(r.violation_fraction)])
    return buf.getvalue()
