"""Per-document difficulty scores and difficulty bucketing.

All four scorers return a non-negative value where higher means harder.  The
scorers are pure functions of the document (plus a frozen transition matrix or
canonical order), so documents can be scored in any order or concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Document
from .discourse import CanonicalOrder, TransitionMatrix
from .errors import DataError, InfiniteDifficultyError

METRIC_SHIFTS = "shifts"
METRIC_EXPERT_INVERSIONS = "expert_inversions"
METRIC_DATA_INVERSIONS = "data_inversions"
METRIC_NEG_LOGLIK = "neg_loglik"
METRICS = (
    METRIC_SHIFTS,
    METRIC_EXPERT_INVERSIONS,
    METRIC_DATA_INVERSIONS,
    METRIC_NEG_LOGLIK,
)


@dataclass(frozen=True)
class DifficultyScore:
    doc_id: str
    metric: str
    value: float

    def __post_init__(self):
        if self.metric not in METRICS:
            raise DataError(f"unknown difficulty metric {self.metric!r}")
        if not math.isfinite(self.value) or self.value < 0:
            raise DataError(
                f"difficulty for {self.doc_id!r} must be finite and >= 0, got {self.value!r}"
            )


@dataclass(frozen=True)
class BucketAssignment:
    """Disjoint doc-id buckets ordered easiest to hardest."""

    num_buckets: int
    buckets: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if self.num_buckets != len(self.buckets):
            raise DataError("bucket count does not match the bucket list")
        flat = [d for b in self.buckets for d in b]
        if len(flat) != len(set(flat)):
            raise DataError("buckets must be disjoint")

    def all_doc_ids(self) -> tuple[str, ...]:
        return tuple(d for b in self.buckets for d in b)

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.buckets)


def score_rhetorical_shifts(doc: Document) -> DifficultyScore:
    """Count of adjacent label changes, normalized by sentence count."""
    shifts = sum(1 for a, b in zip(doc.labels, doc.labels[1:]) if a != b)
    return DifficultyScore(doc.id, METRIC_SHIFTS, shifts / len(doc))


def count_inversions(values: Sequence[int]) -> int:
    """Number of (i, j) pairs with i < j and values[i] > values[j].

    Merge-sort based, O(m log m).  Equal values are not inversions.
    """
    values = list(values)

    def _sort(seq: list[int]) -> tuple[list[int], int]:
        if len(seq) <= 1:
            return seq, 0
        mid = len(seq) // 2
        left, inv_l = _sort(seq[:mid])
        right, inv_r = _sort(seq[mid:])
        merged = []
        inv = inv_l + inv_r
        i = j = 0
        while i < len(left) and j < len(right):
            if right[j] < left[i]:
                merged.append(right[j])
                j += 1
                inv += len(left) - i
            else:
                merged.append(left[i])
                i += 1
        merged.extend(left[i:])
        merged.extend(right[j:])
        return merged, inv

    return _sort(values)[1]


def score_inversions(doc: Document, order: CanonicalOrder) -> DifficultyScore:
    """Pairwise rank inversions against a canonical order, normalized by C(m, 2).

    Repeated roles (equal ranks) do not count as inversions; single-sentence
    documents score 0.  The raw count is recoverable via count_inversions.
    """
    metric = METRIC_EXPERT_INVERSIONS if order.source == "expert" else METRIC_DATA_INVERSIONS
    m = len(doc)
    if m < 2:
        return DifficultyScore(doc.id, metric, 0.0)
    ranks = [order.rank_of(l) for l in doc.labels]
    pairs = m * (m - 1) // 2
    return DifficultyScore(doc.id, metric, count_inversions(ranks) / pairs)


def score_neg_loglik(doc: Document, tm: TransitionMatrix) -> DifficultyScore:
    """Negative mean log-probability of the label sequence under ``tm``.

    Includes the START term for the initial label.  A zero-probability
    transition (possible only with alpha = 0) raises InfiniteDifficultyError.
    """
    total = 0.0
    p = tm.start_prob(doc.labels[0])
    if p <= 0.0:
        raise InfiniteDifficultyError(
            doc.id, f"initial role {tm.roles[doc.labels[0]]!r} has probability 0"
        )
    total += math.log(p)
    for cur, nxt in zip(doc.labels, doc.labels[1:]):
        p = tm.transition_prob(cur, nxt)
        if p <= 0.0:
            raise InfiniteDifficultyError(
                doc.id,
                f"transition {tm.roles[cur]!r} -> {tm.roles[nxt]!r} has probability 0",
            )
        total += math.log(p)
    value = -total / len(doc)
    # guard against -0.0 from a certain event so scores stay comparable
    return DifficultyScore(doc.id, METRIC_NEG_LOGLIK, value + 0.0 if value != 0 else 0.0)


def score_documents(
    docs: Sequence[Document],
    metric: str,
    order: CanonicalOrder | None = None,
    tm: TransitionMatrix | None = None,
) -> list[DifficultyScore]:
    """Score every document with one metric; resolves the needed resource."""
    if metric == METRIC_SHIFTS:
        return [score_rhetorical_shifts(d) for d in docs]
    if metric in (METRIC_EXPERT_INVERSIONS, METRIC_DATA_INVERSIONS):
        if order is None:
            raise DataError(f"metric {metric!r} requires a canonical order")
        expected = "expert" if metric == METRIC_EXPERT_INVERSIONS else "data"
        if order.source != expected:
            raise DataError(f"metric {metric!r} requires a {expected}-sourced order")
        return [score_inversions(d, order) for d in docs]
    if metric == METRIC_NEG_LOGLIK:
        if tm is None:
            raise DataError("metric 'neg_loglik' requires a transition matrix")
        # an unsmoothed matrix is allowed; an unseen transition then raises
        # InfiniteDifficultyError instead of producing a non-finite score
        return [score_neg_loglik(d, tm) for d in docs]
    raise DataError(f"unknown difficulty metric {metric!r}")


def rank_and_bucket(scores: Sequence[DifficultyScore], num_buckets: int) -> BucketAssignment:
    """Sort ascending by (value, doc_id) and split into equal-frequency buckets.

    Remainder documents go one each to the earliest buckets, so bucket sizes
    differ by at most one.
    """
    if num_buckets < 1:
        raise DataError(f"need at least one bucket, got {num_buckets}")
    if num_buckets > len(scores):
        raise DataError(
            f"cannot make {num_buckets} buckets from {len(scores)} documents"
        )
    ids = [s.doc_id for s in scores]
    if len(ids) != len(set(ids)):
        raise DataError("duplicate doc ids in difficulty scores")
    ordered = sorted(scores, key=lambda s: (s.value, s.doc_id))

    n = len(ordered)
    base, rem = divmod(n, num_buckets)
    buckets = []
    pos = 0
    for k in range(num_buckets):
        size = base + (1 if k < rem else 0)
        buckets.append(tuple(s.doc_id for s in ordered[pos : pos + size]))
        pos += size
    return BucketAssignment(num_buckets, tuple(buckets))


def scores_to_csv(scores: Sequence[DifficultyScore]) -> str:
    lines = ["doc_id,metric,value"]
    for s in scores:
        lines.append(f"{s.doc_id},{s.metric},{s.value!r}")
    return "\n".join(lines) + "\n"


def scores_from_csv(text: str) -> list[DifficultyScore]:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0].strip() != "doc_id,metric,value":
        raise DataError("difficulty CSV must start with header 'doc_id,metric,value'")
    scores = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3:
            raise DataError(f"difficulty CSV line {lineno}: expected 3 fields")
        try:
            value = float(parts[2])
        except ValueError:
            raise DataError(f"difficulty CSV line {lineno}: bad value {parts[2]!r}") from None
        scores.append(DifficultyScore(parts[0], parts[1], value))
    return scores
