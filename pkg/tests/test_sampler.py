import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from negsample.corpus import EntitySpan, LabelSet, Sentence
from negsample.sampler import (SamplerConfig, SamplingWeights, build_candidates, compute_u,
                               compute_v, compute_weights, sample_count, sample_uniform,
                               sample_weighted, temperature, weights_from_probs)
from negsample.span_model import LabelDistribution

PER = LabelSet(["PER"])


def _sent(n):
    return Sentence(tuple(f"w{i}" for i in range(n)))


def _z(o, per):
    return LabelDistribution.from_mapping({"O": o, "PER": per})


class TestCandidates:
    def test_full_lattice(self):
        assert len(build_candidates(_sent(3), set())) == 6

    def test_visible_removed(self):
        cands = build_candidates(_sent(3), {EntitySpan(0, 1, "PER")})
        assert len(cands) == 5 and (0, 1) not in cands

    def test_everything_annotated(self):
        assert build_candidates(_sent(1), {EntitySpan(0, 0, "PER")}) == []

    def test_size_formula(self):
        visible = {EntitySpan(0, 0, "A"), EntitySpan(2, 4, "B"), EntitySpan(6, 6, "C")}
        assert len(build_candidates(_sent(9), visible)) == 45 - 3


class TestSampleCount:
    def test_examples(self):
        assert sample_count(10, 0.35) == 4
        assert sample_count(3, 0.35) == 2
        assert sample_count(10, 0.35, n_candidates=1) == 1

    def test_rejects_empty_sentence(self):
        with pytest.raises(ValueError):
            sample_count(0, 0.35)


class TestUniform:
    def test_exhaustive(self):
        cands = [(0, 0), (0, 1), (1, 1)]
        assert sorted(sample_uniform(cands, 3, np.random.default_rng(0))) == cands

    def test_zero(self):
        assert sample_uniform([(0, 0)], 0, np.random.default_rng(0)) == []

    def test_too_many(self):
        with pytest.raises(ValueError):
            sample_uniform([(0, 0)], 2, np.random.default_rng(0))

    def test_pair_frequencies(self):
        cands = build_candidates(_sent(3), set())
        rng = np.random.default_rng(123)
        trials = 150_000
        counts = Counter(frozenset(sample_uniform(cands, 2, rng)) for _ in range(trials))
        assert len(counts) == 15
        for c in counts.values():
            assert abs(c / trials - 1 / 15) <= 0.005

    def test_deterministic(self):
        cands = build_candidates(_sent(6), set())
        a = sample_uniform(cands, 4, np.random.default_rng(9))
        assert a == sample_uniform(cands, 4, np.random.default_rng(9))


class TestVU:
    @pytest.mark.parametrize("o,per,v", [(1.0, 0.0, 1.0), (0.0, 1.0, -1.0), (0.5, 0.5, 0.0)])
    def test_v(self, o, per, v):
        assert compute_v(_z(o, per)) == v

    def test_v_ignores_outside_in_max(self):
        z = LabelDistribution.from_mapping({"O": 0.7, "PER": 0.2, "LOC": 0.1})
        assert compute_v(z) == pytest.approx(0.5)

    def test_u(self):
        assert compute_u(_z(1.0, 0.0)) == 0.0
        assert compute_u(np.full(5, 0.2)) == pytest.approx(math.log(5))
        assert compute_u(_z(0.5, 0.5)) == pytest.approx(math.log(2))
        assert math.log(5) == pytest.approx(1.6094, abs=1e-4)

    def test_vectorized(self):
        p = np.array([[1.0, 0.0], [0.5, 0.5]])
        np.testing.assert_allclose(compute_v(p), [1.0, 0.0])
        np.testing.assert_allclose(compute_u(p), [0.0, math.log(2)])


class TestTemperature:
    def test_examples(self):
        assert temperature(16, 0) == 4.0
        assert temperature(16, 15) == 1.0
        assert temperature(2, 1) == 1.0

    def test_decreasing(self):
        ts = [temperature(16, c) for c in range(16)]
        assert all(a > b for a, b in zip(ts, ts[1:]))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            temperature(16, 16)
        with pytest.raises(ValueError):
            temperature(16, -1)


class _Uniform:
    labels = PER

    def score_spans(self, sentence, spans):
        return np.full((len(spans), 2), 0.5)


class TestWeights:
    def test_uniform_oracle_uniform_e(self):
        cands = build_candidates(_sent(5), set())
        w = compute_weights(cands, _Uniform(), _sent(5), 8.0, 4.0)
        assert np.all(w.e == w.e[0])
        assert w.e.sum() == pytest.approx(1.0)

    def test_two_candidates(self):
        probs = np.array([[0.5, 0.5], [1.0, 0.0]])
        for mu in (1.0, 8.0, 20.0):
            w = weights_from_probs(probs, mu, 1.0)
            assert w.r[0] == pytest.approx(math.log(2)) and w.r[1] == 0.0
            np.testing.assert_allclose(w.e, [2 / 3, 1 / 3])

    def test_high_temperature(self):
        rng = np.random.default_rng(0)
        probs = rng.dirichlet(np.ones(4), size=30)
        w = weights_from_probs(probs, 8.0, 1e6)
        assert np.max(np.abs(w.e - 1 / 30)) < 1e-5

    def test_all_zero_r_exactly_uniform(self):
        probs = np.tile([1.0, 0.0, 0.0], (7, 1))
        w = weights_from_probs(probs, 8.0, 1.0)
        assert np.all(w.r == 0) and np.all(w.e == 1 / 7)

    def test_nonfinite_rejected_with_span(self):
        probs = np.array([[0.5, 0.5], [np.nan, 0.5]])
        with pytest.raises(ValueError, match=r"\(0, 1\)"):
            weights_from_probs(probs, 8.0, 1.0, spans=[(0, 0), (0, 1)])

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            weights_from_probs(np.array([[1.0, 0.0]]), 8.0, 0.5)
        with pytest.raises(ValueError):
            weights_from_probs(np.array([[1.0, 0.0]]), 0.5, 1.0)


@st.composite
def distributions(draw):
    n_labels = draw(st.integers(2, 6))
    n_cands = draw(st.integers(1, 40))
    seed = draw(st.integers(0, 2**32 - 1))
    alpha = draw(st.floats(0.05, 5.0))
    return np.random.default_rng(seed).dirichlet(np.full(n_labels, alpha), size=n_cands)


@given(distributions(), st.floats(1.0, 20.0), st.floats(1.0, 100.0))
@settings(max_examples=300, deadline=None)
def test_weight_invariants(probs, mu, temp):
    w = weights_from_probs(probs, mu, temp)
    assert abs(w.e.sum() - 1) < 1e-6 and np.all(w.e >= 0)
    assert np.all(w.u >= 0) and np.all(w.u <= math.log(probs.shape[1]) + 1e-12)
    assert np.all(w.v >= -1 - 1e-12) and np.all(w.v <= 1 + 1e-12)
    assert np.all(w.r >= 0)


@given(distributions(), st.floats(1.0, 10.0), st.floats(0.1, 10.0))
@settings(max_examples=200, deadline=None)
def test_softmax_homogeneity(probs, temp, scale):
    base = weights_from_probs(probs, 8.0, temp)
    r = base.r * scale
    logits = r / (temp * scale)
    e = np.exp(logits - logits.max())
    np.testing.assert_allclose(e / e.sum(), base.e, rtol=1e-9, atol=1e-12)


class TestWeighted:
    def test_one_hot(self):
        draw = sample_weighted([(0, 0), (0, 1), (1, 1)], np.array([0.0, 1.0, 0.0]), 1,
                               np.random.default_rng(0))
        assert draw.spans == [(0, 1)] and draw.filled_uniformly == 0

    def test_exhaustive(self):
        cands = [(0, 0), (0, 1), (1, 1)]
        draw = sample_weighted(cands, np.array([1.0, 0.0, 0.0]), 3, np.random.default_rng(0))
        assert sorted(draw.spans) == cands

    def test_accepts_weights_object(self):
        w = weights_from_probs(np.array([[0.5, 0.5], [1.0, 0.0]]), 8.0, 1.0)
        assert len(sample_weighted([(0, 0), (1, 1)], w, 1, np.random.default_rng(0)).spans) == 1

    def test_two_thirds(self):
        rng = np.random.default_rng(5)
        e = np.array([2 / 3, 1 / 3])
        hits = sum(sample_weighted(["A", "B"], e, 1, rng).spans[0] == "A" for _ in range(90_000))
        assert abs(hits / 90_000 - 2 / 3) <= 0.01

    def test_zero_weight_fill(self):
        cands = [(0, 0), (0, 1), (1, 1), (1, 2)]
        draw = sample_weighted(cands, np.array([1.0, 0.0, 0.0, 0.0]), 3, np.random.default_rng(0))
        assert draw.spans[0] == (0, 0) and draw.filled_uniformly == 2
        assert len(set(draw.spans)) == 3

    def test_rejects(self):
        with pytest.raises(ValueError):
            sample_weighted([(0, 0)], np.array([1.0]), 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            sample_weighted([(0, 0), (1, 1)], np.array([1.0, -0.1]), 1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            sample_weighted([(0, 0), (1, 1)], np.array([1.0]), 1, np.random.default_rng(0))

    def test_chi_square_single_draws(self):
        rng = np.random.default_rng(77)
        for _ in range(5):
            e = rng.dirichlet(np.ones(10))
            draws = 100_000
            idx = [sample_weighted(list(range(10)), e, 1, rng).spans[0] for _ in range(draws)]
            observed = np.bincount(idx, minlength=10)
            assert stats.chisquare(observed, e * draws).pvalue > 0.001

    def test_matches_brute_force_subset_probabilities(self):
        e = np.array([0.5, 0.25, 0.15, 0.1])
        k = 2
        expected = Counter()
        for order in itertools.permutations(range(4), k):
            p, left = 1.0, 1.0
            for i in order:
                p *= e[i] / left
                left -= e[i]
            expected[frozenset(order)] += p
        rng = np.random.default_rng(8)
        trials = 60_000
        counts = Counter(frozenset(sample_weighted(list(range(4)), e, k, rng).spans) for _ in range(trials))
        for subset, prob in expected.items():
            sigma = math.sqrt(prob * (1 - prob) / trials)
            assert abs(counts[subset] / trials - prob) <= 5 * sigma

    def test_uniform_weights_match_uniform_sampler(self):
        cands = list(range(5))
        trials = 30_000
        rng_u, rng_w = np.random.default_rng(1), np.random.default_rng(2)
        a = Counter(frozenset(sample_uniform(cands, 2, rng_u)) for _ in range(trials))
        b = Counter(frozenset(sample_weighted(cands, np.full(5, 0.2), 2, rng_w).spans)
                    for _ in range(trials))
        keys = sorted(set(a) | set(b), key=sorted)
        table = np.array([[a[s] for s in keys], [b[s] for s in keys]])
        assert stats.chi2_contingency(table).pvalue > 0.001

    def test_deterministic(self):
        e = np.random.default_rng(0).dirichlet(np.ones(12))
        a = sample_weighted(list(range(12)), e, 5, np.random.default_rng(3))
        assert a == sample_weighted(list(range(12)), e, 5, np.random.default_rng(3))


class TestConfig:
    @pytest.mark.parametrize("kwargs", [dict(lam=0.0), dict(lam=1.0), dict(mu=0.5),
                                        dict(total_epochs=0), dict(mode="greedy")])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SamplerConfig(**kwargs)

    def test_defaults(self):
        cfg = SamplerConfig()
        assert (cfg.lam, cfg.mu, cfg.mode) == (0.35, 8.0, "uniform")


def test_sampling_weights_record():
    w = weights_from_probs(np.array([[0.5, 0.5]]), 8.0, 2.0)
    assert isinstance(w, SamplingWeights) and w.temperature == 2.0 and w.e[0] == 1.0
