"""Uncertainty measures and batch selection.

All three measures are oriented so that higher means more uncertain, which
lets batch selection take an argtop regardless of method.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .classifier import LinearModel, predict_proba_matrix
from .domain import ALMethod, Record, new_id
from .errors import CorpusExhausted, LabelForgeError
from .vectorizer import Vocabulary, stack, transform


class BatchStatus(str, Enum):
    OPEN = "open"
    COMPLETE = "complete"


@dataclass(frozen=True)
class Batch:
    id: str
    project_id: str
    index: int
    record_ids: tuple[str, ...]
    selection_method: ALMethod
    status: BatchStatus = BatchStatus.OPEN
    # Records double-coded for IRR, frozen at selection time so later
    # settings changes cannot reshape an open batch.
    irr_record_ids: tuple[str, ...] = ()

    def completed(self) -> "Batch":
        return replace(self, status=BatchStatus.COMPLETE)


def score_least_confident(p: Sequence[float]) -> float:
    return 1.0 - max(p)


def score_margin(p: Sequence[float]) -> float:
    if len(p) < 2:
        raise LabelForgeError("margin requires at least 2 classes")
    top_two = sorted(p, reverse=True)[:2]
    return 1.0 - (top_two[0] - top_two[1])


def score_entropy(p: Sequence[float]) -> float:
    return -sum(v * math.log(v) for v in p if v > 0.0)


_SCORERS = {
    ALMethod.LEAST_CONFIDENT: score_least_confident,
    ALMethod.MARGIN: score_margin,
    ALMethod.ENTROPY: score_entropy,
}


def score_uncertainty(p: Sequence[float], method: ALMethod) -> float:
    return _SCORERS[method](p)


def _uncertainty_batch(probs: np.ndarray, method: ALMethod) -> np.ndarray:
    if method is ALMethod.LEAST_CONFIDENT:
        return 1.0 - probs.max(axis=1)
    if method is ALMethod.MARGIN:
        part = np.sort(probs, axis=1)
        return 1.0 - (part[:, -1] - part[:, -2])
    if method is ALMethod.ENTROPY:
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(probs > 0, probs * np.log(probs), 0.0)
        return -terms.sum(axis=1)
    raise LabelForgeError(f"{method.value} is not an uncertainty measure")


def rank_candidates(scored: Sequence[tuple[str, int, float]], batch_size: int) -> list[str]:
    """Top-scoring record ids; ties broken by ascending upload order."""
    ordered = sorted(scored, key=lambda t: (-t[2], t[1]))
    return [rid for rid, _, _ in ordered[:batch_size]]


def select_batch(
    unlabeled: Sequence[Record],
    model: Optional[LinearModel],
    vocabulary: Optional[Vocabulary],
    method: ALMethod,
    batch_size: int,
    project_id: str,
    batch_index: int,
    irr_enabled: bool = False,
    irr_overlap_percent: int = 0,
) -> Batch:
    """Pick the next batch from the unlabeled pool.

    Without a model (or with method=random) the pool is sampled uniformly,
    seeded by project id + batch index for reproducibility. Otherwise every
    unlabeled record is scored with the chosen measure and the top
    ``batch_size`` are taken.
    """
    pool = sorted(unlabeled, key=lambda r: r.upload_order)
    if not pool:
        raise CorpusExhausted("no unlabeled records remain")
    size = min(batch_size, len(pool))
    if model is None or method is ALMethod.RANDOM:
        rng = random.Random(f"{project_id}:{batch_index}")
        chosen = rng.sample(pool, size)
        chosen_ids = [r.id for r in chosen]
        method_used = ALMethod.RANDOM
    else:
        if vocabulary is None:
            raise LabelForgeError("uncertainty selection requires a fitted vocabulary")
        X = stack([transform(r.text, vocabulary) for r in pool], len(vocabulary))
        scores = _uncertainty_batch(predict_proba_matrix(model, X), method)
        chosen_ids = rank_candidates(
            [(r.id, r.upload_order, float(s)) for r, s in zip(pool, scores)], size
        )
        method_used = method
    irr_count = 0
    if irr_enabled and irr_overlap_percent > 0:
        irr_count = min(math.ceil(irr_overlap_percent / 100 * batch_size), len(chosen_ids))
    return Batch(
        id=new_id(),
        project_id=project_id,
        index=batch_index,
        record_ids=tuple(chosen_ids),
        selection_method=method_used,
        irr_record_ids=tuple(chosen_ids[:irr_count]),
    )
