"""Span classifier: a linear softmax over hashed sparse features, trained with Adam."""

from __future__ import annotations

import io
import zipfile
import zlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import OUTSIDE, EntitySpan, LabelSet, Sentence, Span, enumerate_spans, span_index

CHECKPOINT_VERSION = 1
PROB_FLOOR = 1e-12
DEFAULT_HASH_DIMS = 2**20

LabeledSpan = tuple[Span, str]


@dataclass(frozen=True)
class LabelDistribution:
    probs: np.ndarray
    labels: LabelSet

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(self.labels),):
            raise ValueError("one probability per label expected")
        if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-6:
            raise ValueError("not a probability vector")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, float]) -> "LabelDistribution":
        labels = LabelSet([k for k in mapping if k != OUTSIDE])
        return cls(np.array([mapping.get(lab, 0.0) for lab in labels]), labels)

    def __getitem__(self, label: str) -> float:
        return float(self.probs[self.labels.index(label)])

    def argmax(self) -> str:
        return self.labels.labels[int(np.argmax(self.probs))]


class SpanScorer(Protocol):
    """Anything that maps spans of a sentence to label distributions.

    Rows of the returned matrix follow ``labels`` order, with ``"O"`` first.
    """

    labels: LabelSet

    def score_spans(self, sentence: Sentence, spans: Sequence[Span]) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# features


def _hash(feature: str, dims: int) -> int:
    return zlib.crc32(feature.encode("utf-8")) % dims


@lru_cache(maxsize=None)
def _shape(token: str) -> str:
    if token.isdigit():
        return "d"
    if token.isupper() and any(c.isalpha() for c in token):
        return "A"
    if token[:1].isupper():
        return "X"
    if token.islower():
        return "x"
    return "p"


def _shape_pattern(tokens: Sequence[str]) -> str:
    runs: list[str] = []
    for tok in tokens:
        s = _shape(tok)
        if not runs or runs[-1] != s:
            runs.append(s)
    return "".join(runs)


def length_bucket(length: int) -> str:
    return str(length) if length < 5 else "5+"


def featurize(sentence: Sentence, span: Span, hash_dims: int = DEFAULT_HASH_DIMS) -> list[tuple[int, float]]:
    """Sorted ``(bucket, value)`` pairs for one span; repeated buckets are summed."""
    start, end = span
    toks = sentence.tokens
    if not 0 <= start <= end < len(toks):
        raise ValueError(f"span {span} out of range for n={len(toks)}")
    inside = toks[start:end + 1]
    names = [
        "bias",
        "first=" + toks[start].lower(),
        "last=" + toks[end].lower(),
        "prev=" + (toks[start - 1].lower() if start > 0 else "<s>"),
        "next=" + (toks[end + 1].lower() if end + 1 < len(toks) else "</s>"),
        "len=" + length_bucket(end - start + 1),
        "shape=" + _shape_pattern(inside),
    ]
    names += ["in=" + t.lower() for t in inside]
    acc: dict[int, float] = {}
    for name in names:
        h = _hash(name, hash_dims)
        acc[h] = acc.get(h, 0.0) + 1.0
    return sorted(acc.items())


def lattice_features(sentence: Sentence, hash_dims: int) -> sp.csr_matrix:
    """Feature matrix with one row per span of ``enumerate_spans(n)``.

    Equivalent to stacking :func:`featurize` over the lattice, built in bulk.
    """
    toks = [t.lower() for t in sentence.tokens]
    n = len(toks)
    spans = np.array(enumerate_spans(n), dtype=np.int64).reshape(-1, 2)
    starts, ends = spans[:, 0], spans[:, 1]
    n_spans = len(spans)

    first = np.array([_hash("first=" + t, hash_dims) for t in toks])
    last = np.array([_hash("last=" + t, hash_dims) for t in toks])
    prev = np.array([_hash("prev=" + t, hash_dims) for t in ["<s>", *toks[:-1]]])
    nxt = np.array([_hash("next=" + t, hash_dims) for t in [*toks[1:], "</s>"]])
    bag = np.array([_hash("in=" + t, hash_dims) for t in toks])
    lens = ends - starts + 1
    len_ids = np.array([_hash("len=" + length_bucket(k), hash_dims) for k in range(1, 6)])
    shape_ids = np.array([
        _hash("shape=" + _shape_pattern(sentence.tokens[s:e + 1]), hash_dims) for s, e in spans
    ])

    fixed = np.stack([
        np.full(n_spans, _hash("bias", hash_dims)),
        first[starts], last[ends], prev[starts], nxt[ends],
        len_ids[np.minimum(lens, 5) - 1], shape_ids,
    ], axis=1)
    rows_fixed = np.repeat(np.arange(n_spans), fixed.shape[1])

    offsets = np.concatenate([[0], np.cumsum(lens)[:-1]])
    rows_bag = np.repeat(np.arange(n_spans), lens)
    pos = starts[rows_bag] + (np.arange(lens.sum()) - offsets[rows_bag])

    rows = np.concatenate([rows_fixed, rows_bag])
    cols = np.concatenate([fixed.ravel(), bag[pos]])
    mat = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_spans, hash_dims))
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


# ---------------------------------------------------------------------------
# the built-in scorer


class HashedLinearScorer:
    """Linear softmax over hashed span features, trained with Adam and L2.

    Weights start at zero, so an untrained scorer is uniform over labels.
    Lattice feature matrices are cached per sentence.
    """

    def __init__(self, labels: LabelSet, hash_dims: int = DEFAULT_HASH_DIMS,
                 learning_rate: float = 0.05, l2: float = 1e-5,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if hash_dims < 1:
            raise ValueError("hash_dims must be positive")
        self.labels = labels
        self.hash_dims = int(hash_dims)
        self.learning_rate = float(learning_rate)
        self.l2 = float(l2)
        self.beta1, self.beta2, self.eps = float(beta1), float(beta2), float(eps)
        shape = (self.hash_dims, len(labels))
        self.weights = np.zeros(shape)
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self._cache: dict[tuple[str, ...], sp.csr_matrix] = {}

    # -- features

    def lattice(self, sentence: Sentence) -> sp.csr_matrix:
        key = sentence.tokens
        mat = self._cache.get(key)
        if mat is None:
            mat = lattice_features(sentence, self.hash_dims)
            self._cache[key] = mat
        return mat

    def span_rows(self, sentence: Sentence, spans: Sequence[Span]) -> sp.csr_matrix:
        idx = [span_index(s, e, sentence.n) for s, e in spans]
        return self.lattice(sentence)[idx]

    # -- scoring

    def proba(self, features: sp.spmatrix) -> np.ndarray:
        return _softmax_rows(np.asarray(features @ self.weights))

    def score_spans(self, sentence: Sentence, spans: Sequence[Span]) -> np.ndarray:
        if len(spans) == 0:
            return np.zeros((0, len(self.labels)))
        return self.proba(self.span_rows(sentence, spans))

    def score_lattice(self, sentence: Sentence) -> np.ndarray:
        return self.proba(self.lattice(sentence))

    # -- objective

    def penalty(self) -> float:
        return 0.5 * self.l2 * float(np.sum(self.weights * self.weights))

    def data_loss_and_grad(self, features: sp.spmatrix, targets: np.ndarray,
                           weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        """Summed cross-entropy and its gradient w.r.t. ``weights`` (no L2 term)."""
        w = self.weights if weights is None else weights
        probs = _softmax_rows(np.asarray(features @ w))
        rows = np.arange(len(targets))
        loss = float(-np.log(np.maximum(probs[rows, targets], PROB_FLOOR)).sum())
        probs[rows, targets] -= 1.0
        grad = np.asarray(features.T @ probs)
        return loss, grad

    def encode(self, batch: Iterable[tuple[Sentence, Iterable[LabeledSpan]]]) -> tuple[sp.csr_matrix, np.ndarray]:
        blocks, targets = [], []
        for sentence, labeled in batch:
            labeled = list(labeled)
            if not labeled:
                continue
            blocks.append(self.span_rows(sentence, [s for s, _ in labeled]))
            targets.extend(self.labels.index(lab) for _, lab in labeled)
        if not blocks:
            return sp.csr_matrix((0, self.hash_dims)), np.zeros(0, dtype=np.int64)
        return sp.vstack(blocks, format="csr"), np.array(targets, dtype=np.int64)

    def step(self, features: sp.spmatrix, targets: np.ndarray) -> float:
        """One Adam update on the summed loss plus L2; returns the pre-update data loss."""
        loss, grad = self.data_loss_and_grad(features, targets)
        if self.l2:
            grad += self.l2 * self.weights
        if not np.all(np.isfinite(grad)):
            bad = np.argwhere(~np.isfinite(grad))[0]
            raise FloatingPointError(
                f"non-finite gradient at bucket {bad[0]}, label {self.labels.labels[bad[1]]!r} "
                f"(step {self.t + 1}, loss {loss})"
            )
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        self.weights -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return loss

    # -- persistence

    def save(self, path) -> None:
        """Write a checkpoint: a zip of ``.npy`` members with fixed timestamps.

        Members: ``version``, ``labels``, ``hash_dims``, ``hyper`` (learning
        rate, l2, beta1, beta2, eps), ``t``, ``weights``, ``m``, ``v``.
        Loadable with ``numpy.load``.
        """
        arrays = {
            "version": np.array(CHECKPOINT_VERSION),
            "labels": np.array(self.labels.entity_labels, dtype=str),
            "hash_dims": np.array(self.hash_dims),
            "hyper": np.array([self.learning_rate, self.l2, self.beta1, self.beta2, self.eps]),
            "t": np.array(self.t),
            "weights": self.weights,
            "m": self.m,
            "v": self.v,
        }
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
                info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(info, buf.getvalue())

    @classmethod
    def load(cls, path) -> "HashedLinearScorer":
        with np.load(path, allow_pickle=False) as data:
            version = int(data["version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            lr, l2, b1, b2, eps = (float(x) for x in data["hyper"])
            scorer = cls(LabelSet([str(x) for x in data["labels"]]), int(data["hash_dims"]),
                         learning_rate=lr, l2=l2, beta1=b1, beta2=b2, eps=eps)
            scorer.t = int(data["t"])
            scorer.weights = data["weights"].copy()
            scorer.m = data["m"].copy()
            scorer.v = data["v"].copy()
        return scorer


# ---------------------------------------------------------------------------
# module-level operations


def score_span(scorer: SpanScorer, sentence: Sentence, span: Span) -> LabelDistribution:
    return LabelDistribution(scorer.score_spans(sentence, [span])[0], scorer.labels)


def loss(scorer: HashedLinearScorer, sentence: Sentence, labeled_spans: Iterable[LabeledSpan]) -> float:
    """Summed ``-log P(label | span)`` over the labeled spans; L2 is not included."""
    feats, targets = scorer.encode([(sentence, labeled_spans)])
    if len(targets) == 0:
        return 0.0
    return scorer.data_loss_and_grad(feats, targets)[0]


def train_step(scorer: HashedLinearScorer, batch: Sequence[tuple[Sentence, Iterable[LabeledSpan]]]) -> float:
    if not batch:
        raise ValueError("empty batch")
    feats, targets = scorer.encode(batch)
    return scorer.step(feats, targets)


def decode(probs: np.ndarray, spans: Sequence[Span], labels: LabelSet) -> set[EntitySpan]:
    """Greedy non-overlapping decoding of per-span label distributions.

    Each span takes its argmax label (ties go to the earlier label, so ``"O"``
    wins ties). Entity spans are accepted by descending probability, then
    label order, then span order, skipping any that overlap an accepted one.
    """
    best = np.argmax(probs, axis=1)
    keep = np.nonzero(best != 0)[0]
    ranked = sorted(keep, key=lambda i: (-probs[i, best[i]], best[i], i))
    taken = np.zeros(max((e for _, e in spans), default=-1) + 1, dtype=bool)
    out: set[EntitySpan] = set()
    for i in ranked:
        s, e = spans[i]
        if taken[s:e + 1].any():
            continue
        taken[s:e + 1] = True
        out.add(EntitySpan(s, e, labels.labels[best[i]]))
    return out


def predict(scorer: SpanScorer, sentence: Sentence) -> set[EntitySpan]:
    spans = enumerate_spans(sentence.n)
    if hasattr(scorer, "score_lattice"):
        probs = scorer.score_lattice(sentence)
    else:
        probs = scorer.score_spans(sentence, spans)
    return decode(probs, spans, scorer.labels)
