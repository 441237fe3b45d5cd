"""Missampling rate, zero-missampling probabilities, uncertainty strata and span F1."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import AnnotatedSentence, EntitySpan, Span, lattice_size
from .sampler import build_candidates, compute_u, sample_count
from .span_model import SpanScorer


@dataclass(frozen=True)
class MissamplingReport:
    gamma: float
    sampled_count: int
    hit_spans: list[Span] = field(default_factory=list)


def missampling_rate(sampled: Iterable[Span], hidden: Iterable[EntitySpan]) -> MissamplingReport:
    """Fraction of sampled negatives that are actually unlabeled entities (0 for no draws)."""
    sampled = list(dict.fromkeys(sampled))
    hidden_spans = {ent.span for ent in hidden}
    hits = [s for s in sampled if s in hidden_spans]
    gamma = len(hits) / len(sampled) if sampled else 0.0
    return MissamplingReport(gamma, len(sampled), hits)


def exact_zero_missample_prob(n: int, m: int, h: int, k: int) -> float:
    """Probability that ``k`` uniform draws without replacement avoid all ``h`` hidden spans.

    The candidate pool is the ``n(n+1)/2`` lattice minus ``m`` visible spans.
    """
    if min(m, h, k) < 0:
        raise ValueError("m, h and k must be non-negative")
    pool = lattice_size(n) - m
    if h > pool:
        raise ValueError(f"{h} hidden spans do not fit in a pool of {pool}")
    q = 1.0
    for i in range(k):
        denom = pool - i
        if denom <= 0:
            raise ValueError(f"oversampling: draw {i} from an exhausted pool of {pool}")
        q *= 1.0 - h / denom
    return q


def theorem_bound(n: int, lam: float) -> float:
    """Closed-form lower bound ``1 - 4 lam sqrt(n) / (n - 1)``; negative values are vacuous."""
    if n < 2:
        raise ValueError("the bound needs n >= 2")
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    return 1.0 - 4.0 * lam * math.sqrt(n) / (n - 1)


def sparsity_premise(n: int, n_entities: int) -> bool:
    return n_entities <= math.sqrt(n)


@dataclass(frozen=True)
class BoundReport:
    n: int
    lam: float
    m: int
    h: int
    k: int
    exact_q: float
    lower_bound: float
    empirical_prob: float
    trials: int
    tolerance: float
    in_premise: bool
    consistent: bool  # empirical >= lower_bound - tolerance

    def to_dict(self) -> dict:
        return asdict(self)


def monte_carlo_bound_check(n: int, lam: float, h: int, m: int, trials: int,
                            rng: np.random.Generator) -> BoundReport:
    """Simulate uniform negative sampling and count trials with zero missampling.

    Each trial places ``m`` visible and ``h`` hidden entities on distinct
    random lattice spans, removes the visible ones, and draws
    ``ceil(lam * n)`` negatives uniformly without replacement.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    in_premise = sparsity_premise(n, m + h)
    if not in_premise:
        warnings.warn(f"m + h = {m + h} exceeds sqrt(n) = {math.sqrt(n):.3f}; "
                      "the bound's premise does not hold", stacklevel=2)
    total = lattice_size(n)
    if m + h > total:
        raise ValueError("more entities than spans")
    k = sample_count(n, lam, total - m)
    exact = exact_zero_missample_prob(n, m, h, k)
    bound = theorem_bound(n, lam)

    clean = 0
    if h == 0 or k == 0:
        clean = trials
    else:
        lattice = np.arange(total)
        for _ in range(trials):
            placed = rng.choice(total, size=m + h, replace=False)
            hidden = placed[m:]
            pool = np.delete(lattice, placed[:m]) if m else lattice
            drawn = pool[rng.choice(len(pool), size=k, replace=False)]
            if not np.isin(drawn, hidden, assume_unique=True).any():
                clean += 1
    empirical = clean / trials
    tol = 4.0 * math.sqrt(0.25 / trials)
    return BoundReport(n=n, lam=lam, m=m, h=h, k=k, exact_q=exact, lower_bound=bound,
                       empirical_prob=empirical, trials=trials, tolerance=tol,
                       in_premise=in_premise, consistent=empirical >= bound - tol)


# ---------------------------------------------------------------------------
# uncertainty strata

STRATA = ("top", "middle", "bottom")


@dataclass(frozen=True)
class StratumDraw:
    spans: list[Span]
    short: bool  # fewer than k eligible candidates; all were taken


def stratum_slice(n_candidates: int, k: int, stratum: str) -> slice:
    if stratum == "top":
        return slice(0, k)
    if stratum == "bottom":
        return slice(n_candidates - k, n_candidates)
    if stratum == "middle":
        start = (n_candidates - k) // 2
        return slice(start, start + k)
    raise ValueError(f"stratum must be one of {STRATA}")


def rank_by_uncertainty(spans: Sequence[Span], u: np.ndarray) -> list[Span]:
    """Spans by descending uncertainty; equal values keep span order."""
    order = np.lexsort((np.arange(len(spans)), -np.asarray(u)))
    return [spans[i] for i in order]


def uncertainty_strata(sentences: Sequence[AnnotatedSentence], oracle: SpanScorer, lam: float,
                       stratum: str) -> list[StratumDraw]:
    """Per-sentence negatives taken from one band of the oracle's uncertainty ranking.

    Hidden entity spans are excluded up front, so every draw has zero missampling.
    """
    if stratum not in STRATA:
        raise ValueError(f"stratum must be one of {STRATA}")
    out = []
    for ex in sentences:
        forbidden = {ent.span for ent in ex.hidden}
        cands = [s for s in build_candidates(ex.sentence, ex.visible) if s not in forbidden]
        k = sample_count(ex.n, lam)
        if len(cands) <= k:
            out.append(StratumDraw(cands, len(cands) < k))
            continue
        u = compute_u(oracle.score_spans(ex.sentence, cands))
        ranked = rank_by_uncertainty(cands, u)
        out.append(StratumDraw(ranked[stratum_slice(len(ranked), k, stratum)], False))
    return out


# ---------------------------------------------------------------------------
# span F1


@dataclass(frozen=True)
class F1Report:
    precision: float
    recall: float
    f1: float
    true_positives: int
    predicted: int
    gold: int

    def to_dict(self) -> dict:
        return asdict(self)


def span_f1(predicted: Sequence[Iterable[EntitySpan]], gold: Sequence[Iterable[EntitySpan]]) -> F1Report:
    """Exact-match (start, end, label) precision, recall and F1, micro-averaged."""
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted vs {len(gold)} gold sentences")
    tp = n_pred = n_gold = 0
    for p, g in zip(predicted, gold):
        p, g = set(p), set(g)
        tp += len(p & g)
        n_pred += len(p)
        n_gold += len(g)
    if n_pred == 0 and n_gold == 0:
        return F1Report(0.0, 0.0, 1.0, 0, 0, 0)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if tp else 0.0
    return F1Report(precision, recall, f1, tp, n_pred, n_gold)
