"""Relevance scorers: cosine mapping, keyword overlap, and the external seam."""

import numpy as np
import pytest

from coforget.core import MemoryRecord
from coforget.relevance import (
    ContextProfile,
    CosineContextScorer,
    DimensionMismatch,
    ExternalScorer,
    KeywordOverlapScorer,
    ScorerKind,
    relevance,
)


def record(embedding, memory_id: str = "m1") -> MemoryRecord:
    return MemoryRecord(
        id=memory_id, embedding=np.asarray(embedding, dtype=float), agent_id="a1", t_last=0.0, salience=0.5
    )


CONTEXT = ContextProfile(embedding=np.array([1.0, 0.0, 0.0]), label="unit x axis")


def test_identical_direction_scores_one():
    assert relevance(record([2.0, 0.0, 0.0]), CONTEXT) == pytest.approx(1.0)


def test_orthogonal_scores_half():
    assert relevance(record([0.0, 3.0, 0.0]), CONTEXT) == pytest.approx(0.5)


def test_opposite_direction_scores_zero():
    assert relevance(record([-1.0, 0.0, 0.0]), CONTEXT) == pytest.approx(0.0)


def test_zero_memory_embedding_is_uninformative():
    assert relevance(record([0.0, 0.0, 0.0]), CONTEXT) == 0.5


def test_zero_context_embedding_rejected_at_construction():
    with pytest.raises(ValueError):
        ContextProfile(embedding=np.zeros(3))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        relevance(record([1.0, 0.0]), CONTEXT)


def test_scale_invariance():
    rng = np.random.default_rng(5)
    for _ in range(100):
        v = rng.standard_normal(6)
        ctx = ContextProfile(embedding=rng.standard_normal(6))
        base = relevance(record(v), ctx)
        for scale in (0.001, 0.5, 7.0, 1e6):
            assert relevance(record(v * scale), ctx) == pytest.approx(base, abs=1e-12)


def test_range_and_determinism():
    rng = np.random.default_rng(9)
    for _ in range(200):
        v = rng.standard_normal(4)
        ctx = ContextProfile(embedding=rng.standard_normal(4))
        r1 = relevance(record(v), ctx)
        r2 = relevance(record(v), ctx)
        assert 0.0 <= r1 <= 1.0
        assert r1 == r2  # bit-identical


def test_near_parallel_is_clamped_into_unit_interval():
    v = np.array([1.0, 1e-17, 0.0])
    assert 0.0 <= relevance(record(v), CONTEXT) <= 1.0


class TestKeywordOverlap:
    def test_jaccard_overlap(self):
        scorer = KeywordOverlapScorer(labels={"m1": "alpha beta gamma"})
        ctx = ContextProfile(embedding=np.ones(3), label="beta gamma delta")
        # intersection {beta, gamma} = 2, union {alpha..delta} = 4
        assert scorer.score(record([1.0, 0, 0]), ctx) == pytest.approx(0.5)

    def test_unknown_memory_has_empty_tokens(self):
        scorer = KeywordOverlapScorer(labels={})
        ctx = ContextProfile(embedding=np.ones(3), label="beta")
        assert scorer.score(record([1.0, 0, 0]), ctx) == 0.0

    def test_both_empty_is_uninformative(self):
        scorer = KeywordOverlapScorer(labels={})
        ctx = ContextProfile(embedding=np.ones(3), label="")
        assert scorer.score(record([1.0, 0, 0]), ctx) == 0.5

    def test_kind(self):
        assert KeywordOverlapScorer(labels={}).kind is ScorerKind.KEYWORD_OVERLAP


class TestExternalScorer:
    def test_wraps_and_clamps(self):
        scorer = ExternalScorer(lambda memory, context: 1.7)
        assert scorer.score(record([1.0, 0, 0]), CONTEXT) == 1.0
        scorer = ExternalScorer(lambda memory, context: -3.0)
        assert scorer.score(record([1.0, 0, 0]), CONTEXT) == 0.0

    def test_kind(self):
        assert ExternalScorer(lambda m, c: 0.5).kind is ScorerKind.EXTERNAL


def test_explicit_cosine_scorer_matches_default():
    scorer = CosineContextScorer()
    v = record([0.3, -0.2, 0.9])
    assert scorer.score(v, CONTEXT) == relevance(v, CONTEXT)
    assert scorer.kind is ScorerKind.COSINE_CONTEXT
