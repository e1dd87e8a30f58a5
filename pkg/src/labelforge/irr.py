"""Inter-rater reliability statistics over double-coded records.

Inputs are extracted from non-superseded coder annotations only; admin
adjudications and pre-labeled seeds are excluded because they would inflate
the measured agreement between coders.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Optional, Sequence

import numpy as np

from .domain import Annotation, AnnotationSource
from .errors import LabelForgeError

# A coder's vote on one record: (coder_id, label_id, created_at).
Vote = tuple[str, str, float]


def cohens_kappa(table: Sequence[Sequence[int]]) -> float:
    """Chance-corrected agreement for two raters from a k x k count matrix
    (rows = first rater's label, columns = second rater's). Returns 1.0 when
    expected agreement is 1, which only happens alongside perfect observed
    agreement."""
    counts = np.asarray(table, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise LabelForgeError("agreement table must be square")
    n = counts.sum()
    if n <= 0:
        raise LabelForgeError("no double-coded items")
    p_observed = counts.trace() / n
    p_expected = float(np.dot(counts.sum(axis=1), counts.sum(axis=0))) / (n * n)
    if p_expected == 1.0:
        return 1.0
    return float((p_observed - p_expected) / (1.0 - p_expected))


def _check_ratings(ratings: Sequence[Sequence[int]]) -> np.ndarray:
    counts = np.asarray(ratings, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] < 1:
        raise LabelForgeError("ratings matrix must be N x k with N >= 1")
    row_sums = counts.sum(axis=1)
    n = row_sums[0]
    if n < 2 or not np.all(row_sums == n):
        raise LabelForgeError("ragged ratings: every item needs the same rater count (>= 2)")
    return counts


def _mean_pairwise_agreement(counts: np.ndarray) -> float:
    n = counts.sum(axis=1)[0]
    per_item = ((counts * counts).sum(axis=1) - n) / (n * (n - 1))
    return float(per_item.mean())


def fleiss_kappa(ratings: Sequence[Sequence[int]]) -> float:
    """Chance-corrected agreement for a fixed number n >= 2 of raters per
    item, from an N x k matrix of per-item category counts."""
    counts = _check_ratings(ratings)
    p_observed = _mean_pairwise_agreement(counts)
    proportions = counts.sum(axis=0) / counts.sum()
    p_expected = float(np.dot(proportions, proportions))
    if p_expected == 1.0:
        return 1.0
    return float((p_observed - p_expected) / (1.0 - p_expected))


def percent_agreement_overall(ratings: Sequence[Sequence[int]]) -> float:
    """Mean over items of agreeing rater pairs / total pairs (the unchanced
    observed-agreement term of Fleiss' kappa)."""
    return _mean_pairwise_agreement(_check_ratings(ratings))


def coder_votes(
    annotations: Sequence[Annotation],
) -> dict[str, list[Vote]]:
    """Group non-superseded coder-source annotations by record."""
    votes: dict[str, list[Vote]] = {}
    for ann in annotations:
        if ann.superseded or ann.source is not AnnotationSource.CODER:
            continue
        votes.setdefault(ann.record_id, []).append((ann.coder_id, ann.label_id, ann.created_at))
    return votes


def double_coded_votes(
    annotations: Sequence[Annotation], max_raters: Optional[int] = None
) -> dict[str, list[Vote]]:
    """Records with at least two coder votes. When ``max_raters`` is given,
    items with more votes are trimmed to the earliest ones so every item has
    an equal rater count."""
    result: dict[str, list[Vote]] = {}
    for record_id, votes in coder_votes(annotations).items():
        if len(votes) < 2:
            continue
        ordered = sorted(votes, key=lambda v: (v[2], v[0]))
        if max_raters is not None:
            if len(ordered) < max_raters:
                continue
            ordered = ordered[:max_raters]
        result[record_id] = ordered
    return result


def ratings_matrix(
    votes_by_record: Mapping[str, Sequence[Vote]], categories: Sequence[str]
) -> list[list[int]]:
    """N x k per-item category counts, rows in sorted record-id order."""
    col = {c: j for j, c in enumerate(categories)}
    rows = []
    for record_id in sorted(votes_by_record):
        row = [0] * len(categories)
        for _, label_id, _ in votes_by_record[record_id]:
            row[col[label_id]] += 1
        rows.append(row)
    return rows


def pairwise_percent_agreement(
    votes_by_record: Mapping[str, Sequence[Vote]],
) -> dict[tuple[str, str], tuple[float, int]]:
    """For each unordered coder pair with >= 1 co-labeled record: (fraction of
    those records where their labels match, co-labeled record count). Pairs
    with no overlap are omitted."""
    matches: dict[tuple[str, str], int] = {}
    totals: dict[tuple[str, str], int] = {}
    for votes in votes_by_record.values():
        by_coder = {coder: label for coder, label, _ in votes}
        for a, b in combinations(sorted(by_coder), 2):
            pair = (a, b)
            totals[pair] = totals.get(pair, 0) + 1
            if by_coder[a] == by_coder[b]:
                matches[pair] = matches.get(pair, 0) + 1
    return {pair: (matches.get(pair, 0) / total, total) for pair, total in totals.items()}


def agreement_matrix(
    votes_by_record: Mapping[str, Sequence[Vote]],
    categories: Sequence[str],
    username_of: Mapping[str, str],
    coder_pair: Optional[tuple[str, str]] = None,
) -> np.ndarray:
    """k x k label-agreement counts. For a specific pair, the coder with the
    lexicographically smaller username indexes the rows. Without a pair, each
    record contributes once per unordered coder pair, rows again held by the
    lower-username coder."""
    col = {c: j for j, c in enumerate(categories)}
    table = np.zeros((len(categories), len(categories)), dtype=np.int64)
    for votes in votes_by_record.values():
        by_coder = {coder: label for coder, label, _ in votes}
        for a, b in combinations(sorted(by_coder, key=lambda c: (username_of.get(c, c), c)), 2):
            if coder_pair is not None and {a, b} != set(coder_pair):
                continue
            table[col[by_coder[a]], col[by_coder[b]]] += 1
    return table


@dataclass(frozen=True)
class IrrSummary:
    statistic: Optional[str]  # "cohens_kappa" | "fleiss_kappa" | None
    kappa: Optional[float]
    percent_overall: Optional[float]
    pairwise: dict[tuple[str, str], tuple[float, int]]
    matrix: np.ndarray
    categories: tuple[str, ...]
    double_coded_items: int


def irr_summary(
    annotations: Sequence[Annotation],
    categories: Sequence[str],
    username_of: Mapping[str, str],
    irr_coder_count: int = 2,
) -> IrrSummary:
    """Dashboard-level rollup: Cohen's kappa when exactly two coders appear in
    the double-coded data, Fleiss' kappa otherwise."""
    double = double_coded_votes(annotations)
    pairwise = pairwise_percent_agreement(double)
    matrix = agreement_matrix(double, categories, username_of)
    if not double:
        return IrrSummary(None, None, None, pairwise, matrix, tuple(categories), 0)
    coders = sorted({coder for votes in double.values() for coder, _, _ in votes})
    equal = double_coded_votes(annotations, max_raters=irr_coder_count)
    if len(coders) == 2:
        statistic = "cohens_kappa"
        pair_table = agreement_matrix(double, categories, username_of, coder_pair=(coders[0], coders[1]))
        kappa = cohens_kappa(pair_table)
        percent = percent_agreement_overall(ratings_matrix(equal, categories)) if equal else None
    elif equal:
        statistic = "fleiss_kappa"
        rm = ratings_matrix(equal, categories)
        kappa = fleiss_kappa(rm)
        percent = percent_agreement_overall(rm)
    else:
        return IrrSummary(None, None, None, pairwise, matrix, tuple(categories), len(double))
    return IrrSummary(
        statistic=statistic,
        kappa=kappa,
        percent_overall=percent,
        pairwise=pairwise,
        matrix=matrix,
        categories=tuple(categories),
        double_coded_items=len(double),
    )
