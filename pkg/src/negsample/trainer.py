"""Epoch loop for span NER with negative sampling, plus the comparison harnesses."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .analysis import F1Report, span_f1, uncertainty_strata, STRATA
from .corpus import OUTSIDE, AnnotatedSentence, LabelSet, Span, enumerate_spans, span_index
from .corruption import split_half
from .rng import stream
from .sampler import (MODES, SamplerConfig, build_candidates, sample_count, sample_uniform,
                      sample_weighted, temperature, weights_from_probs)
from .span_model import DEFAULT_HASH_DIMS, HashedLinearScorer, SpanScorer, predict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "uniform"
    lam: float = 0.35
    mu: float = 8.0
    epochs: int = 16
    batch_size: int = 16
    learning_rate: float = 0.05
    l2: float = 1e-5
    hash_dims: int = DEFAULT_HASH_DIMS
    eval_each_epoch: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.sampler  # validates lam, mu, mode

    @property
    def sampler(self) -> SamplerConfig:
        return SamplerConfig(lam=self.lam, mu=self.mu, total_epochs=self.epochs,
                             mode=self.mode, seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    loss: float  # summed cross-entropy per training sentence
    dev_precision: float | None
    dev_recall: float | None
    dev_f1: float | None
    gamma_micro: float | None  # None when hidden entities are unknown
    gamma_macro: float | None
    temperature: float | None  # None in uniform mode
    filled_uniformly: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class TraceRow(NamedTuple):
    epoch: int
    sentence: int
    start: int
    end: int
    e: float | None  # None for externally fixed negatives


def format_trace(rows: Sequence[TraceRow]) -> str:
    """Tab-separated ``epoch sentence start end e`` lines with a header."""
    lines = ["epoch\tsentence\tstart\tend\te"]
    lines += [f"{r.epoch}\t{r.sentence}\t{r.start}\t{r.end}\t{'' if r.e is None else repr(r.e)}"
              for r in rows]
    return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    scorer: HashedLinearScorer
    reports: list[EpochReport] = field(default_factory=list)


def evaluate(scorer: SpanScorer, dataset: Sequence[AnnotatedSentence]) -> F1Report:
    """Span F1 of the scorer's predictions against visible plus hidden entities."""
    preds = [predict(scorer, ex.sentence) for ex in dataset]
    return span_f1(preds, [ex.gold for ex in dataset])


def _draw_negatives(scorer_probs, ex: AnnotatedSentence, cfg: TrainConfig, temp: float | None,
                    rng: np.random.Generator) -> tuple[list[Span], list[float], int]:
    """Negatives for one sentence, the sampling probability ``e`` of each, and the fill count."""
    cands = build_candidates(ex.sentence, ex.visible)
    k = sample_count(ex.n, cfg.lam, len(cands))
    if k == 0:
        return [], [], 0
    if scorer_probs is None:
        return sample_uniform(cands, k, rng), [1.0 / len(cands)] * k, 0
    idx = [span_index(s, e, ex.n) for s, e in cands]
    weights = weights_from_probs(scorer_probs(ex)[idx], cfg.mu, temp, cands)
    draw = sample_weighted(cands, weights, k, rng)
    pos = {s: j for j, s in enumerate(cands)}
    return draw.spans, [float(weights.e[pos[s]]) for s in draw.spans], draw.filled_uniformly


def train(dataset: Sequence[AnnotatedSentence], dev: Sequence[AnnotatedSentence] | None,
          config: TrainConfig, oracle: SpanScorer | None = None,
          labels: LabelSet | None = None,
          fixed_negatives: Sequence[Sequence[Span]] | None = None,
          scorer: HashedLinearScorer | None = None,
          trace: list[TraceRow] | None = None) -> TrainResult:
    """Train a span scorer with negatives redrawn every epoch.

    ``weighted_adaptive`` scores candidates with the model as it stands at
    the start of each epoch; ``weighted_fixed`` uses ``oracle`` throughout.
    ``fixed_negatives`` bypasses sampling and reuses the given per-sentence
    negatives every epoch. Pass a list as ``trace`` to collect one
    ``TraceRow`` per sampled negative.
    """
    if not dataset:
        raise ValueError("empty training set")
    if config.mode == "weighted_fixed" and oracle is None and fixed_negatives is None:
        raise ValueError("weighted_fixed mode needs an oracle scorer")
    if fixed_negatives is not None and len(fixed_negatives) != len(dataset):
        raise ValueError("one negative set per training sentence expected")
    labels = labels or LabelSet.from_dataset([*dataset, *(dev or [])])
    if scorer is None:
        scorer = HashedLinearScorer(labels, config.hash_dims, config.learning_rate, config.l2)
    result = TrainResult(scorer)
    track_gamma = any(ex.hidden for ex in dataset)

    for epoch in range(config.epochs):
        temp = temperature(config.epochs, epoch)
        if fixed_negatives is not None or config.mode == "uniform":
            probs_of = None
        elif config.mode == "weighted_adaptive":
            snapshot = HashedLinearScorer(labels, scorer.hash_dims)
            snapshot.weights = scorer.weights.copy()
            snapshot._cache = scorer._cache
            probs_of = lambda ex, s=snapshot: s.score_lattice(ex.sentence)  # noqa: E731
        else:
            probs_of = lambda ex: oracle.score_spans(ex.sentence, _lattice(ex))  # noqa: E731

        instances = []
        hits = drawn = filled = 0
        macro = []
        for i, ex in enumerate(dataset):
            if fixed_negatives is not None:
                negs, evals, n_fill = list(fixed_negatives[i]), [None] * len(fixed_negatives[i]), 0
            else:
                rng = stream(config.seed, "negatives", epoch, i)
                negs, evals, n_fill = _draw_negatives(probs_of, ex, config, temp, rng)
            if trace is not None:
                trace.extend(TraceRow(epoch, i, s, e, v) for (s, e), v in zip(negs, evals))
            filled += n_fill
            if track_gamma and negs:
                hidden = {ent.span for ent in ex.hidden}
                h = sum(s in hidden for s in negs)
                hits += h
                drawn += len(negs)
                macro.append(h / len(negs))
            labeled = [(ent.span, ent.label) for ent in sorted(ex.visible)]
            labeled += [(s, OUTSIDE) for s in negs]
            instances.append((ex.sentence, labeled))

        order = stream(config.seed, "shuffle", epoch).permutation(len(instances))
        total = 0.0
        for b in range(0, len(order), config.batch_size):
            batch = [instances[j] for j in order[b:b + config.batch_size]]
            feats, targets = scorer.encode(batch)
            if len(targets):
                total += scorer.step(feats, targets)

        f1 = evaluate(scorer, dev) if (dev and config.eval_each_epoch) else None
        report = EpochReport(
            epoch=epoch,
            loss=total / len(instances),
            dev_precision=f1.precision if f1 else None,
            dev_recall=f1.recall if f1 else None,
            dev_f1=f1.f1 if f1 else None,
            gamma_micro=(hits / drawn if drawn else 0.0) if track_gamma else None,
            gamma_macro=(float(np.mean(macro)) if macro else 0.0) if track_gamma else None,
            temperature=None if (config.mode == "uniform" and fixed_negatives is None) else temp,
            filled_uniformly=filled,
        )
        log.info("epoch %d loss %.4f f1 %s gamma %s", epoch, report.loss, report.dev_f1,
                 report.gamma_micro)
        result.reports.append(report)
    return result


def _lattice(ex: AnnotatedSentence) -> list[Span]:
    return enumerate_spans(ex.n)


# ---------------------------------------------------------------------------
# experiment harnesses


def epochs_to_threshold(f1_curve: Sequence[float], fraction: float = 0.95) -> int:
    """First epoch whose F1 reaches ``fraction`` of the final epoch's F1."""
    target = fraction * f1_curve[-1]
    for epoch, f1 in enumerate(f1_curve):
        if f1 >= target:
            return epoch
    return len(f1_curve) - 1


def _mean_gamma(reports: Sequence[EpochReport], last: int | None = None) -> float | None:
    vals = [r.gamma_micro for r in reports if r.gamma_micro is not None]
    if last is not None:
        vals = vals[-last:]
    return float(np.mean(vals)) if vals else None


def compare_samplers(dataset: Sequence[AnnotatedSentence], dev: Sequence[AnnotatedSentence],
                     base_config: TrainConfig,
                     modes: Sequence[str] = ("uniform", "weighted_adaptive")) -> dict:
    """Train once per mode with shared seeds and summarize the F1 and missampling trends."""
    labels = LabelSet.from_dataset([*dataset, *dev])
    out: dict = {"config": base_config.to_dict(), "modes": {}}
    for mode in modes:
        if mode not in MODES or mode == "weighted_fixed":
            raise ValueError(f"cannot compare mode {mode!r}")
        cfg = replace(base_config, mode=mode, eval_each_epoch=True)
        res = train(dataset, dev, cfg, labels=labels)
        curve = [r.dev_f1 for r in res.reports]
        out["modes"][mode] = {
            "f1_curve": curve,
            "final_f1": curve[-1],
            "epochs_to_threshold": epochs_to_threshold(curve),
            "mean_gamma": _mean_gamma(res.reports),
            "mean_gamma_last5": _mean_gamma(res.reports, last=5),
            "epochs": [r.to_dict() for r in res.reports],
        }
    return out


def strata_experiment(dataset: Sequence[AnnotatedSentence], dev: Sequence[AnnotatedSentence],
                      config: TrainConfig, strata: Sequence[str] = STRATA) -> dict[str, float]:
    """Dev F1 of models trained on top/middle/bottom-uncertainty negatives.

    An oracle is trained with uniform sampling on one random half of the
    data; each stratum model trains on the other half with negatives fixed
    from the oracle's uncertainty ranking and hidden entities excluded.
    """
    labels = LabelSet.from_dataset([*dataset, *dev])
    held_out, rest = split_half(list(dataset), config.seed)
    oracle = train(held_out, None, replace(config, mode="uniform", eval_each_epoch=False),
                   labels=labels).scorer
    scores = {}
    for stratum in strata:
        negs = [d.spans for d in uncertainty_strata(rest, oracle, config.lam, stratum)]
        res = train(rest, None, replace(config, eval_each_epoch=False), labels=labels,
                    fixed_negatives=negs)
        scores[stratum] = evaluate(res.scorer, dev).f1
    return scores
