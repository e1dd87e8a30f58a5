"""Uncertainty measures and batch selection."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from labelforge import classifier as clf
from labelforge.active_learning import (
    Batch,
    BatchStatus,
    rank_candidates,
    score_entropy,
    score_least_confident,
    score_margin,
    select_batch,
)
from labelforge.domain import ALMethod, Record, RecordStatus
from labelforge.errors import CorpusExhausted, LabelForgeError
from labelforge.vectorizer import fit_vocabulary, transform


def random_simplex(rng, k):
    cuts = sorted(rng.random() for _ in range(k - 1))
    parts = []
    prev = 0.0
    for c in cuts + [1.0]:
        parts.append(c - prev)
        prev = c
    return parts


class TestMeasures:
    def test_worked_example(self):
        p = (0.5, 0.3, 0.2)
        assert score_least_confident(p) == pytest.approx(0.5, abs=1e-12)
        assert score_margin(p) == pytest.approx(0.8, abs=1e-12)
        assert score_entropy(p) == pytest.approx(1.02965, abs=1e-4)

    def test_one_hot_minimizes_all(self):
        p = (1.0, 0.0, 0.0)
        assert score_least_confident(p) == 0.0
        assert score_margin(p) == 0.0
        assert score_entropy(p) == 0.0

    def test_uniform_maximizes_all(self):
        for k in (2, 3, 6):
            p = [1.0 / k] * k
            assert score_least_confident(p) == pytest.approx(1 - 1 / k, abs=1e-12)
            assert score_margin(p) == pytest.approx(1.0, abs=1e-12)
            assert score_entropy(p) == pytest.approx(math.log(k), abs=1e-12)

    def test_margin_requires_two_classes(self):
        with pytest.raises(LabelForgeError):
            score_margin((1.0,))

    @given(st.integers(2, 6), st.integers(0, 10_000))
    def test_ranges(self, k, seed):
        rng = random.Random(seed)
        p = random_simplex(rng, k)
        assert 0.0 <= score_least_confident(p) <= 1 - 1 / k + 1e-12
        assert 0.0 <= score_margin(p) <= 1.0 + 1e-12
        assert 0.0 <= score_entropy(p) <= math.log(k) + 1e-12

    def test_two_class_rankings_agree(self):
        """For k=2 all three measures are monotone in |p1 - 0.5| so they
        induce identical orderings."""
        rng = random.Random(42)
        points = [random_simplex(rng, 2) for _ in range(1000)]
        by_lc = sorted(range(1000), key=lambda i: score_least_confident(points[i]))
        by_margin = sorted(range(1000), key=lambda i: score_margin(points[i]))
        by_entropy = sorted(range(1000), key=lambda i: score_entropy(points[i]))
        key = lambda i: abs(points[i][0] - 0.5)
        expected = sorted(range(1000), key=lambda i: -key(i))
        for order in (by_lc, by_margin, by_entropy):
            assert [key(i) for i in order] == pytest.approx([key(i) for i in expected], abs=1e-12)


class TestRanking:
    def test_top_by_score(self):
        scored = [("r1", 0, 0.9), ("r2", 1, 0.1), ("r3", 2, 0.5)]
        assert set(rank_candidates(scored, 2)) == {"r1", "r3"}

    def test_ties_broken_by_upload_order(self):
        scored = [("r3", 3, 0.5), ("r1", 1, 0.5), ("r2", 2, 0.5)]
        assert rank_candidates(scored, 2) == ["r1", "r2"]

    def test_monotone_transform_leaves_selection_unchanged(self):
        rng = random.Random(0)
        scored = [(f"r{i}", i, rng.random()) for i in range(50)]
        base = set(rank_candidates(scored, 10))
        transformed = [(rid, order, math.exp(3 * s) + 1) for rid, order, s in scored]
        assert set(rank_candidates(transformed, 10)) == base


def make_records(texts):
    return [
        Record(id=f"r{i}", project_id="p", text=t, upload_order=i)
        for i, t in enumerate(texts)
    ]


class TestSelectBatch:
    def test_random_without_model_is_seeded(self):
        records = make_records([f"doc {i}" for i in range(20)])
        b1 = select_batch(records, None, None, ALMethod.ENTROPY, 5, "proj", 0)
        b2 = select_batch(records, None, None, ALMethod.ENTROPY, 5, "proj", 0)
        assert b1.record_ids == b2.record_ids
        assert b1.selection_method is ALMethod.RANDOM
        b3 = select_batch(records, None, None, ALMethod.ENTROPY, 5, "proj", 1)
        assert b3.record_ids != b1.record_ids  # overwhelmingly likely

    def test_uncertainty_selection_top_scores(self):
        vocab = fit_vocabulary(["alpha beta", "gamma delta", "alpha gamma"])
        X = [transform(t, vocab) for t in ("alpha beta", "gamma delta")]
        model = clf.train(X, ["a", "b"])
        records = make_records(["alpha beta", "gamma delta", "alpha gamma", "beta delta"])
        batch = select_batch(records, model, vocab, ALMethod.ENTROPY, 2, "proj", 1)
        assert batch.selection_method is ALMethod.ENTROPY
        # the mixed-vocabulary docs are the uncertain ones
        texts = {r.id: r.text for r in records}
        for rid in batch.record_ids:
            assert texts[rid] in ("alpha gamma", "beta delta")

    def test_batch_size_capped_by_pool(self):
        records = make_records(["a b", "c d"])
        batch = select_batch(records, None, None, ALMethod.RANDOM, 10, "proj", 0)
        assert len(batch.record_ids) == 2

    def test_empty_pool_errors(self):
        with pytest.raises(CorpusExhausted):
            select_batch([], None, None, ALMethod.RANDOM, 5, "proj", 0)

    def test_irr_prefix_frozen_on_batch(self):
        records = make_records([f"w{i} x{i}" for i in range(10)])
        batch = select_batch(
            records, None, None, ALMethod.RANDOM, 10, "proj", 0,
            irr_enabled=True, irr_overlap_percent=10,
        )
        assert len(batch.irr_record_ids) == 1
        assert batch.irr_record_ids[0] == batch.record_ids[0]

    def test_irr_disabled_no_overlap(self):
        records = make_records([f"w{i} x{i}" for i in range(10)])
        batch = select_batch(records, None, None, ALMethod.RANDOM, 10, "proj", 0)
        assert batch.irr_record_ids == ()

    def test_batch_complete_flag(self):
        batch = Batch(id="b", project_id="p", index=0, record_ids=("r1",), selection_method=ALMethod.RANDOM)
        assert batch.status is BatchStatus.OPEN
        assert batch.completed().status is BatchStatus.COMPLETE
