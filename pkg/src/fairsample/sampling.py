"""Top-heavy annotation sampling with inclusion-probability bookkeeping.

The sampling prior assigns rank r in a length-R ranking the weight

    W(r) = (1/2R) * (1 + 1/r + 1/(r+1) + ... + 1/R)

computed with exact harmonic partial sums (the weights of one ranking sum
to exactly 1). Per-document weights are averaged across all rankings and
normalized into a distribution over the pool of retrieved documents.

Samples are drawn with the Stevens stratified scheme: sort the pool by
descending probability, cut it into buckets of size m (the annotation
budget), give each bucket the summed probability b of its members, draw
buckets with replacement m times, then draw items uniformly without
replacement inside each bucket. Every sampled item records theta = b of
its bucket, which is its inclusion probability under this scheme.

A bucket drawn more often than it has items spills the excess draws into
the next unexhausted bucket in descending-probability order, so a budget
m <= |pool| always yields exactly m annotations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import AnnotationSet, DocId, Ranking, RunSet
from .errors import ContractError, DataError
from .rng import SeedLike, generator

logger = logging.getLogger(__name__)

_SUM_TOLERANCE = 1e-9

# RankWeights: float vector of length R, index r-1 holding W(r).
RankWeights = np.ndarray


def rank_weights(num_ranked: int) -> RankWeights:
    """Sampling weight per rank for a ranking of length `num_ranked`."""
    if num_ranked < 1:
        raise ContractError("ranking length must be positive")
    inv = 1.0 / np.arange(1, num_ranked + 1)
    # tail[r-1] = sum_{j=r..R} 1/j, exact partial sums (no log approximation)
    tail = np.cumsum(inv[::-1])[::-1]
    return (1.0 + tail) / (2.0 * num_ranked)


@dataclass(frozen=True)
class SamplingDesign:
    """A pooled sampling distribution, optionally partitioned into buckets.

    The pool is sorted by descending probability (ties by ascending doc_id).
    Buckets are contiguous [start, end) index ranges over that order, each
    carrying the summed probability of its members; `budget` records the m
    used to stratify.
    """

    pool: tuple[DocId, ...]
    probability: Mapping[DocId, float]
    buckets: tuple[tuple[int, int], ...] | None = None
    bucket_prob: tuple[float, ...] | None = None
    budget: int | None = None

    def __post_init__(self):
        if not self.pool:
            raise ContractError("sampling design needs a non-empty pool")
        if set(self.pool) != set(self.probability):
            raise DataError("pool and probability mapping disagree")
        probs = [self.probability[d] for d in self.pool]
        if abs(sum(probs) - 1.0) > _SUM_TOLERANCE:
            raise DataError("pool probabilities do not sum to 1")
        keys = [(-p, d) for p, d in zip(probs, self.pool)]
        if any(keys[i] > keys[i + 1] for i in range(len(keys) - 1)):
            raise DataError("pool is not sorted by descending probability")
        if (self.buckets is None) != (self.bucket_prob is None):
            raise DataError("buckets and bucket_prob must be set together")
        if self.bucket_prob is not None:
            if abs(sum(self.bucket_prob) - 1.0) > _SUM_TOLERANCE:
                raise DataError("bucket probabilities do not sum to 1")

    @property
    def has_buckets(self) -> bool:
        return self.buckets is not None


@dataclass(frozen=True)
class BudgetSpec:
    """Annotation budget, either an absolute count or a rate of the pool."""

    count: int | None = None
    rate: float | None = None

    def __post_init__(self):
        if (self.count is None) == (self.rate is None):
            raise ContractError("specify exactly one of count and rate")
        if self.count is not None and self.count < 1:
            raise ContractError("budget count must be positive")
        if self.rate is not None and not (0.0 < self.rate <= 1.0):
            raise ContractError("budget rate must lie in (0, 1]")

    def resolve(self, pool_size: int) -> int:
        """The number of annotations to draw from a pool of `pool_size`."""
        if pool_size < 1:
            raise ContractError("pool is empty")
        if self.count is not None:
            return min(self.count, pool_size)
        m = math.floor(self.rate * pool_size + 0.5)
        return max(1, min(m, pool_size))


def design_from_weights(
    weight_sum: dict[DocId, float], ranking_count: dict[DocId, int]
) -> SamplingDesign:
    """Average accumulated weights, normalize, and sort into a design."""
    averaged = {d: weight_sum[d] / ranking_count[d] for d in weight_sum}
    total = sum(averaged[d] for d in sorted(averaged))
    probability = {d: w / total for d, w in averaged.items()}
    pool = tuple(sorted(probability, key=lambda d: (-probability[d], d)))
    return SamplingDesign(pool=pool, probability=probability)


def pooled_distribution(runset: RunSet | Iterable[Ranking]) -> SamplingDesign:
    """Average per-rank weights across all rankings into one distribution.

    A document's average divides by the total number of rankings over the
    queries in which it was retrieved at least once; rankings that do not
    retrieve it contribute weight 0. The averaged weights are normalized
    over the pool of all retrieved documents.
    """
    weight_cache: dict[int, RankWeights] = {}
    weight_sum: dict[DocId, float] = {}
    doc_queries: dict[DocId, set[str]] = {}
    rankings_per_query: dict[str, int] = {}

    n_rankings = 0
    for ranking in runset:
        n_rankings += 1
        length = len(ranking)
        weights = weight_cache.get(length)
        if weights is None:
            weights = weight_cache.setdefault(length, rank_weights(length))
        rankings_per_query[ranking.query_id] = (
            rankings_per_query.get(ranking.query_id, 0) + 1
        )
        for entry in ranking.entries:
            weight_sum[entry.doc_id] = (
                weight_sum.get(entry.doc_id, 0.0) + weights[entry.rank - 1]
            )
            doc_queries.setdefault(entry.doc_id, set()).add(ranking.query_id)
    if n_rankings == 0:
        raise ContractError("runset is empty")

    ranking_count = {
        d: sum(rankings_per_query[q] for q in qs) for d, qs in doc_queries.items()
    }
    return design_from_weights(weight_sum, ranking_count)


def restrict_pool(design: SamplingDesign, docs: Iterable[DocId]) -> SamplingDesign:
    """Drop pool documents outside `docs` and renormalize (buckets reset)."""
    keep = set(docs)
    probability = {d: p for d, p in design.probability.items() if d in keep}
    if not probability:
        raise ContractError("restriction leaves an empty pool")
    if len(probability) == len(design.pool):
        return replace(design, buckets=None, bucket_prob=None, budget=None)
    total = sum(probability[d] for d in sorted(probability))
    probability = {d: p / total for d, p in probability.items()}
    pool = tuple(d for d in design.pool if d in keep)
    return SamplingDesign(pool=pool, probability=probability)


def stratify(design: SamplingDesign, m: int) -> SamplingDesign:
    """Partition the probability-sorted pool into buckets of size m.

    The final bucket may be smaller. Bucket probabilities are the sums of
    their members' probabilities, renormalized to 1.
    """
    if m < 1:
        raise ContractError("budget m must be positive")
    size = len(design.pool)
    if m > size:
        logger.warning("budget m=%d exceeds pool size %d; clamping", m, size)
        m = size
    probs = np.array([design.probability[d] for d in design.pool])
    buckets = tuple(
        (start, min(start + m, size)) for start in range(0, size, m)
    )
    sums = np.array([probs[start:end].sum() for start, end in buckets])
    sums /= sums.sum()
    return replace(
        design, buckets=buckets, bucket_prob=tuple(float(b) for b in sums), budget=m
    )


def _check_pool_labeled(pool: Sequence[DocId], ground_truth: AnnotationSet) -> None:
    missing = [d for d in pool if d not in ground_truth]
    if missing:
        raise DataError(
            f"{len(missing)} pool documents lack ground-truth labels "
            f"(first: {missing[0]!r})"
        )


def undersized_bucket_theta(m: int, bucket_prob: float, size: int) -> float:
    """Inclusion probability of an item in a bucket smaller than the budget.

    For a full bucket (size == m) the inclusion probability is exactly the
    bucket probability b: the bucket is drawn T ~ Binomial(m, b) times and
    an item is included with probability T/m... = E[T]/m = b. A final
    bucket of size s < m truncates at s, so the inclusion probability is
    E[min(T, s)]/s, evaluated here exactly from the binomial pmf.
    """
    if size >= m:
        return bucket_prob
    # E[min(T, s)] = sum_{k<s} k pmf(k) + s P(T >= s), pmf built iteratively
    pmf = (1.0 - bucket_prob) ** m
    cdf_below = 0.0
    expectation = 0.0
    for k in range(size):
        expectation += k * pmf
        cdf_below += pmf
        pmf *= (m - k) / (k + 1) * bucket_prob / (1.0 - bucket_prob)
    expectation += size * max(0.0, 1.0 - cdf_below)
    return min(1.0, expectation / size)


def stratified_sample(
    design: SamplingDesign,
    m: int,
    ground_truth: AnnotationSet,
    seed: SeedLike,
) -> AnnotationSet:
    """Draw m annotations with the Stevens bucket scheme.

    Buckets are drawn with replacement m times; each bucket drawn n times
    yields min(n, bucket size) uniform without-replacement items, and the
    overflow spills to the next unexhausted bucket by descending bucket
    probability. Every sampled item records theta equal to the probability
    of the bucket it occupies; the undersized final bucket records its
    exact truncated-binomial inclusion probability instead (see
    `undersized_bucket_theta`).
    """
    if not design.has_buckets:
        raise ContractError("design has no buckets; call stratify() first")
    if design.budget is not None and m != design.budget:
        raise ContractError(
            f"sample budget m={m} differs from stratify budget {design.budget}"
        )
    _check_pool_labeled(design.pool, ground_truth)
    assert design.buckets is not None and design.bucket_prob is not None
    rng = generator(seed)

    counts = rng.multinomial(m, np.asarray(design.bucket_prob))
    sizes = [end - start for start, end in design.buckets]

    # First pass in index order: up to bucket-size items per bucket.
    remaining: list[list[int]] = [
        list(range(start, end)) for start, end in design.buckets
    ]
    chosen: list[list[int]] = []
    overflow = 0
    for b, want in enumerate(counts):
        take = min(int(want), sizes[b])
        overflow += int(want) - take
        picked = _draw_without_replacement(rng, remaining[b], take)
        chosen.append(picked)

    # Spill pass: unexhausted buckets in descending-probability order.
    if overflow:
        spill_order = sorted(
            range(len(sizes)), key=lambda b: (-design.bucket_prob[b], b)
        )
        for b in spill_order:
            if not overflow:
                break
            capacity = len(remaining[b])
            if capacity == 0:
                continue
            take = min(capacity, overflow)
            overflow -= take
            chosen[b].extend(_draw_without_replacement(rng, remaining[b], take))
    if overflow:
        raise ContractError("budget exceeds pool size")

    labels: dict[DocId, str] = {}
    inclusion: dict[DocId, float] = {}
    for b, picked in enumerate(chosen):
        theta = undersized_bucket_theta(m, design.bucket_prob[b], sizes[b])
        for pool_index in picked:
            doc = design.pool[pool_index]
            labels[doc] = ground_truth.label(doc)
            inclusion[doc] = theta
    return AnnotationSet(labels=labels, inclusion=inclusion)


def _draw_without_replacement(
    rng: np.random.Generator, remaining: list[int], take: int
) -> list[int]:
    """Remove and return `take` uniform picks from `remaining`."""
    if take == 0:
        return []
    picked_positions = rng.choice(len(remaining), size=take, replace=False)
    picked = [remaining[i] for i in picked_positions]
    for i in sorted(picked_positions, reverse=True):
        remaining.pop(i)
    return picked


def uniform_sample(
    pool: Sequence[DocId],
    m: int,
    ground_truth: AnnotationSet,
    seed: SeedLike,
) -> AnnotationSet:
    """Simple random sample of m pool documents, theta = m/|pool| each."""
    if m < 1:
        raise ContractError("budget m must be positive")
    if m > len(pool):
        logger.warning("budget m=%d exceeds pool size %d; clamping", m, len(pool))
        m = len(pool)
    _check_pool_labeled(pool, ground_truth)
    rng = generator(seed)
    theta = m / len(pool)
    picked = rng.choice(len(pool), size=m, replace=False)
    labels = {pool[i]: ground_truth.label(pool[i]) for i in picked}
    inclusion = {pool[i]: theta for i in picked}
    return AnnotationSet(labels=labels, inclusion=inclusion)
