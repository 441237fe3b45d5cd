"""Negative candidates and the uniform / uncertainty-weighted negative samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .corpus import EntitySpan, Sentence, Span, enumerate_spans
from .span_model import LabelDistribution, SpanScorer

MODES = ("uniform", "weighted_fixed", "weighted_adaptive")


@dataclass(frozen=True)
class SamplerConfig:
    lam: float = 0.35
    mu: float = 8.0
    total_epochs: int = 16
    mode: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        if self.mu < 1.0:
            raise ValueError("mu must be >= 1")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


def build_candidates(sentence: Sentence, visible: Iterable[EntitySpan]) -> list[Span]:
    """Every span of the sentence except those of the visible entities, in lattice order."""
    taken = {ent.span for ent in visible}
    return [s for s in enumerate_spans(sentence.n) if s not in taken]


def sample_count(n: int, lam: float, n_candidates: int | None = None) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    k = math.ceil(lam * n)
    return k if n_candidates is None else min(k, n_candidates)


def sample_uniform(candidates: Sequence[Span], k: int, rng: np.random.Generator) -> list[Span]:
    """``k`` distinct candidates; every ``k``-subset is equally likely."""
    if k > len(candidates):
        raise ValueError(f"cannot draw {k} from {len(candidates)} candidates")
    if k <= 0:
        return []
    idx = rng.choice(len(candidates), size=k, replace=False)
    return [candidates[i] for i in idx]


# ---------------------------------------------------------------------------
# weights


def _probs(z) -> np.ndarray:
    return z.probs if isinstance(z, LabelDistribution) else np.asarray(z, dtype=float)


def compute_v(z) -> np.ndarray | float:
    """P(O) minus the largest entity-label probability; ``"O"`` is column 0.

    Accepts one distribution or a matrix of row distributions.
    """
    p = _probs(z)
    v = p[..., 0] - p[..., 1:].max(axis=-1)
    return float(v) if v.ndim == 0 else v


def compute_u(z) -> np.ndarray | float:
    """Entropy in nats, with 0 log 0 taken as 0."""
    p = _probs(z)
    safe = np.where(p > 0, p, 1.0)
    u = -(p * np.log(safe)).sum(axis=-1)
    u = np.maximum(u, 0.0)
    return float(u) if u.ndim == 0 else u


def temperature(total_epochs: int, epoch: int) -> float:
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    return math.sqrt(total_epochs - epoch)


@dataclass(frozen=True)
class SamplingWeights:
    v: np.ndarray
    u: np.ndarray
    r: np.ndarray
    e: np.ndarray
    temperature: float


def weights_from_probs(probs: np.ndarray, mu: float, temp: float,
                       spans: Sequence[Span] | None = None) -> SamplingWeights:
    """Sampling weights from a matrix of candidate label distributions."""
    if temp < 1.0:
        raise ValueError("temperature must be >= 1")
    if mu < 1.0:
        raise ValueError("mu must be >= 1")
    if len(probs) == 0:
        raise ValueError("empty candidate set")
    v = compute_v(probs)
    u = compute_u(probs)
    r = u * np.power(1.0 + v, mu)
    bad = np.nonzero(~np.isfinite(r))[0]
    if len(bad):
        where = spans[bad[0]] if spans is not None else int(bad[0])
        raise ValueError(f"non-finite weight for candidate {where}")
    logits = r / temp
    logits -= logits.max()
    e = np.exp(logits)
    e /= e.sum()
    return SamplingWeights(v=v, u=u, r=r, e=e, temperature=float(temp))


def compute_weights(candidates: Sequence[Span], oracle: SpanScorer, sentence: Sentence,
                    mu: float, temp: float) -> SamplingWeights:
    probs = oracle.score_spans(sentence, candidates)
    return weights_from_probs(probs, mu, temp, candidates)


class WeightedDraw(NamedTuple):
    spans: list[Span]
    filled_uniformly: int  # draws taken uniformly from zero-weight candidates


def sample_weighted(candidates: Sequence[Span], e: np.ndarray | SamplingWeights, k: int,
                    rng: np.random.Generator) -> WeightedDraw:
    """``k`` distinct candidates drawn one at a time, renormalizing ``e`` after each draw.

    When fewer than ``k`` candidates have positive weight, the rest are
    drawn uniformly from the zero-weight ones and counted in ``filled_uniformly``.
    """
    w = np.array(e.e if isinstance(e, SamplingWeights) else e, dtype=float)
    if len(w) != len(candidates):
        raise ValueError("one weight per candidate expected")
    if k > len(candidates):
        raise ValueError(f"cannot draw {k} from {len(candidates)} candidates")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if k <= 0:
        return WeightedDraw([], 0)
    if k == len(candidates):
        return WeightedDraw(list(candidates), 0)

    chosen: list[int] = []
    n_pos = int(np.count_nonzero(w))
    for _ in range(min(k, n_pos)):
        cdf = np.cumsum(w)
        i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        i = min(i, len(w) - 1)
        while w[i] == 0:  # guards the float edge at the top of the cdf
            i -= 1
        chosen.append(i)
        w[i] = 0.0
    filled = k - len(chosen)
    if filled:
        rest = np.setdiff1d(np.arange(len(candidates)), chosen)
        chosen.extend(int(i) for i in rng.choice(rest, size=filled, replace=False))
    return WeightedDraw([candidates[i] for i in chosen], filled)
