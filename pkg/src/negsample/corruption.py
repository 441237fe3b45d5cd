"""Synthetic unlabeled-entity data: random entity masking and held-out splits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import AnnotatedSentence
from .rng import stream


@dataclass(frozen=True)
class CorruptionConfig:
    mask_prob: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must lie in [0, 1]")


def mask_entities(dataset: Sequence[AnnotatedSentence], config: CorruptionConfig) -> list[AnnotatedSentence]:
    """Move each visible entity to the hidden set with probability ``mask_prob``.

    Every sentence draws from its own stream keyed on its index, so the
    outcome for sentence ``i`` does not depend on the sentences after it.
    """
    out = []
    for idx, ex in enumerate(dataset):
        if ex.hidden:
            raise ValueError(f"sentence {idx} already has hidden entities")
        ents = sorted(ex.visible)
        draws = stream(config.seed, "mask", idx).random(len(ents))
        hidden = frozenset(e for e, u in zip(ents, draws) if u < config.mask_prob)
        out.append(AnnotatedSentence(ex.sentence, ex.visible - hidden, hidden))
    return out


def split_half(dataset: Sequence[AnnotatedSentence], seed: int) -> tuple[list, list]:
    """Random permutation split; the first half gets the extra item when the size is odd."""
    if len(dataset) < 2:
        raise ValueError("need at least 2 sentences to split")
    order = stream(seed, "split").permutation(len(dataset))
    cut = (len(dataset) + 1) // 2
    return [dataset[i] for i in order[:cut]], [dataset[i] for i in order[cut:]]
