"""Planted toy NER corpus for desk-scale experiments.

Five entity types built from small, disjoint type-specific vocabularies.
Each type has one fixed shape of one to three tokens, so the partial spans
of an entity are always true negatives. Sentences are 8-30 tokens long and
never hold more than sqrt(n) entities.
"""

from __future__ import annotations

import math

from .corpus import AnnotatedSentence, EntitySpan, Sentence
from .rng import stream

FIRST = ["John", "Maria", "Ahmed", "Yuki", "Pavel", "Grace", "Omar", "Lena", "Hassan", "Victor",
         "Elena", "Tariq", "Sofia", "Kenji", "Chloe", "Diego"]
LAST = ["Smith", "Garcia", "Khan", "Tanaka", "Novak", "Hughes", "Rossi", "Ferreira", "Lindqvist",
        "Okafor", "Mendes", "Walsh", "Sato", "Brandt"]
PLACE = ["Paris", "Lagos", "Jordan", "Osaka", "Lima", "Oslo", "Quebec", "Dakar", "Perth", "Hanoi",
         "Kazan", "Cusco", "Tromso", "Bergen", "Nairobi", "Tbilisi"]
ORG_NAME = ["Apex", "Nordic", "Helix", "Orion", "Vertex", "Meridian"]
ORG_NAME2 = ["Atlas", "Sterling", "Keystone", "Quantum", "Pioneer", "Crescent"]
ORG_SUFFIX = ["Corp", "Inc", "Group", "Bank", "Labs"]
PRODUCT = ["Zephyr", "Falcon", "Nimbus", "Quasar", "Pulse", "Vortex", "Echo", "Titan"]
MODEL = ["X1", "300", "Pro", "Max", "7", "Mini", "2000"]
EVENT_NAME = ["Spring", "Harvest", "Winter", "Lantern", "Ocean", "Monsoon", "Solstice", "Jazz"]
EVENT_KIND = ["Festival", "Games", "Cup", "Expo", "Forum"]

TRIGGERS = {
    "PER": ["mr", "ms", "minister", "coach", "dr", "told"],
    "LOC": ["in", "near", "from", "visited", "toward"],
    "ORG": ["at", "joined", "shares", "acquired", "sued"],
    "PROD": ["bought", "new", "launched", "using", "the"],
    "EVT": ["attended", "during", "won", "hosted", "before"],
}
FILLER = ["the", "a", "said", "on", "with", "and", "was", "will", "after", "report", "says",
          "of", "to", "it", "has", "more", "than", "last", "week", "year", "for", "by", "its",
          "plans", "about", "while", "officials", "expected", "two", "local", "team", "market",
          "deal", "sources", "early", "late", "talks", "big", "result", "meeting", "in", "at"]
OPENERS = ["The", "On", "Yesterday", "Officials", "Sources", "After", "In", "Analysts"]

LABELS = ("PER", "LOC", "ORG", "PROD", "EVT")


def _entity(label: str, rng) -> list[str]:
    # one fixed shape per type: no entity is ever a sub-span of another entity
    pick = lambda seq: seq[int(rng.integers(len(seq)))]  # noqa: E731
    if label == "PER":
        return [pick(FIRST), pick(LAST)]
    if label == "LOC":
        return [pick(PLACE)]
    if label == "ORG":
        return [pick(ORG_NAME), pick(ORG_NAME2), pick(ORG_SUFFIX)]
    if label == "PROD":
        return [pick(PRODUCT), pick(MODEL)]
    return [pick(EVENT_NAME), pick(EVENT_KIND)]


def planted_sentence(rng, min_len: int = 8, max_len: int = 30, trigger_prob: float = 0.6) -> AnnotatedSentence:
    n = int(rng.integers(min_len, max_len + 1))
    n_ents = int(rng.integers(1, math.isqrt(n) + 1))
    labels = [LABELS[int(rng.integers(len(LABELS)))] for _ in range(n_ents)]
    ents = [_entity(lab, rng) for lab in labels]
    n_fill = n - sum(len(e) for e in ents)
    while n_fill < n_ents:  # keep at least one filler between entities
        ents.pop()
        labels.pop()
        n_ents -= 1
        n_fill = n - sum(len(e) for e in ents)
    fillers = [FILLER[int(i)] for i in rng.integers(len(FILLER), size=n_fill)]
    gaps = sorted(int(g) for g in rng.choice(n_fill + 1, size=n_ents, replace=False))
    # the filler just before an entity may be replaced by a type trigger
    for g, lab in zip(gaps, labels):
        if g > 0 and rng.random() < trigger_prob:
            trig = TRIGGERS[lab]
            fillers[g - 1] = trig[int(rng.integers(len(trig)))]

    tokens: list[str] = []
    spans = []
    prev = 0
    for g, lab, ent in zip(gaps, labels, ents):
        tokens.extend(fillers[prev:g])
        spans.append(EntitySpan(len(tokens), len(tokens) + len(ent) - 1, lab))
        tokens.extend(ent)
        prev = g
    tokens.extend(fillers[prev:])
    if tokens[0].islower() and (not spans or spans[0].start != 0):
        tokens[0] = OPENERS[int(rng.integers(len(OPENERS)))]
    return AnnotatedSentence(Sentence(tuple(tokens)), frozenset(spans))


def planted_corpus(n_sentences: int, seed: int, **kwargs) -> list[AnnotatedSentence]:
    """Fully annotated planted sentences; sentence ``i`` depends only on ``(seed, i)``."""
    return [planted_sentence(stream(seed, "planted", i), **kwargs) for i in range(n_sentences)]
