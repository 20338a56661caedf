"""Metric estimation from incomplete group annotations.

Three families are implemented:

* Horvitz-Thompson estimators for samples carrying inclusion
  probabilities: each sampled top-k item contributes its indicator value
  weighted by 1/theta. Unbiased for any sampling design whose thetas are
  recorded correctly, which is what makes the top-heavy stratified design
  usable at all.
* Sample-mean estimators for uniform samples. The `verbatim` form divides
  the sampled indicator sum by k and therefore deflates whenever parts of
  the top k are unsampled; the `normalized` form rescales by the observed
  sampling fraction inside the top k and collapses to the exact metric at
  full information. Both are exposed; experiments default to normalized.
* The induced baseline: drop unlabeled items, compact ranks, and evaluate
  the exact metric on what remains.

Every estimator returns 0.0 when no sampled item falls inside the top k;
at low sampling rates that is a routine outcome, not an error. Group
proportions are estimated independently per group from one sample, so the
two estimates need not sum to 1.
"""

from __future__ import annotations

from enum import Enum
from typing import Collection

from .corpus import AnnotationSet, DocId, GroupLabel, Ranking
from .errors import ContractError
from .metrics import (
    DIVERGENCE_KINDS,
    GroupProportions,
    MetricKind,
    MetricSpec,
    divergence,
    group_exposure,
    group_proportion,
)


class EstimatorKind(str, Enum):
    HORVITZ_THOMPSON = "horvitz_thompson"
    UNIFORM_MEAN = "uniform_mean"
    UNIFORM_MEAN_NORMALIZED = "uniform_mean_normalized"
    INDUCED = "induced"


def _require_inclusion(sample: AnnotationSet) -> None:
    if sample.inclusion is None:
        raise ContractError(
            "Horvitz-Thompson estimation needs inclusion probabilities; "
            "this annotation set has none"
        )


def ht_proportion_estimate(
    ranking: Ranking, sample: AnnotationSet, group: GroupLabel, k: int
) -> float:
    """Unbiased estimate of the top-k proportion of `group`.

    (1/k) * sum over sampled items at rank <= k of [label = group]/theta.
    Unsampled positions contribute nothing; the estimate may exceed 1.
    """
    _require_inclusion(sample)
    if k < 1:
        raise ContractError("k must be a positive integer")
    total = 0.0
    for entry in ranking.top(k):
        if entry.doc_id in sample and sample.labels[entry.doc_id] == group:
            total += 1.0 / sample.theta(entry.doc_id)
    return total / k


def ht_exposure_estimate(
    ranking: Ranking, sample: AnnotationSet, group: GroupLabel,
    k: int, patience: float,
) -> float:
    """Unbiased estimate of the discounted top-k exposure of `group`."""
    _require_inclusion(sample)
    if k < 1:
        raise ContractError("k must be a positive integer")
    total = 0.0
    for i, entry in enumerate(ranking.top(k)):
        if entry.doc_id in sample and sample.labels[entry.doc_id] == group:
            total += patience ** i / sample.theta(entry.doc_id)
    return (1.0 - patience) * total


def estimated_divergence(
    kind: MetricKind, targets: GroupProportions, estimated: GroupProportions
) -> float:
    """Plug estimated proportions into the exact divergence (KL clamp applies)."""
    return divergence(kind, targets, estimated)


def _top_k_pool_count(
    ranking: Ranking, k: int, pool: Collection[DocId] | None
) -> int:
    if pool is None:
        return min(k, len(ranking))
    return sum(1 for e in ranking.top(k) if e.doc_id in pool)


def uniform_proportion_estimate(
    ranking: Ranking, sample: AnnotationSet, group: GroupLabel, k: int,
    *, normalized: bool = False, pool: Collection[DocId] | None = None,
) -> float:
    """Sample-mean estimate of the top-k proportion under uniform sampling.

    Verbatim form: (1/k) * sum of sampled indicators. Normalized form
    rescales by (pool items in top k)/(sampled items in top k) and returns
    0 when nothing in the top k was sampled. `pool` defaults to all ranked
    documents.
    """
    if k < 1:
        raise ContractError("k must be a positive integer")
    sampled = 0
    members = 0
    for entry in ranking.top(k):
        if entry.doc_id in sample:
            sampled += 1
            if sample.labels[entry.doc_id] == group:
                members += 1
    if not normalized:
        return members / k
    if sampled == 0:
        return 0.0
    return members * _top_k_pool_count(ranking, k, pool) / (k * sampled)


def uniform_exposure_estimate(
    ranking: Ranking, sample: AnnotationSet, group: GroupLabel,
    k: int, patience: float,
    *, normalized: bool = False, pool: Collection[DocId] | None = None,
) -> float:
    """Sample-mean estimate of the discounted exposure under uniform sampling.

    Verbatim form: (1-g)/k * sum of sampled discounted indicators, which
    understates exposure by roughly the unsampled fraction of the top k
    (and by 1/k even at full information). Normalized form scales the raw
    discounted sum by (pool items in top k)/(sampled items in top k), so
    it reproduces the exact exposure when everything is sampled.
    """
    if k < 1:
        raise ContractError("k must be a positive integer")
    if not (0.0 < patience < 1.0):
        raise ContractError("patience must lie strictly inside (0, 1)")
    total = 0.0
    sampled = 0
    for i, entry in enumerate(ranking.top(k)):
        if entry.doc_id in sample:
            sampled += 1
            if sample.labels[entry.doc_id] == group:
                total += patience ** i
    if not normalized:
        return (1.0 - patience) * total / k
    if sampled == 0:
        return 0.0
    scale = _top_k_pool_count(ranking, k, pool) / sampled
    return (1.0 - patience) * scale * total


def induced_ranking(ranking: Ranking, sample: AnnotationSet) -> Ranking:
    """Filter a ranking to labeled documents and compact ranks to 1..R'."""
    entries = [e for e in ranking.entries if e.doc_id in sample]
    return Ranking(
        query_id=ranking.query_id,
        system_id=ranking.system_id,
        entries=tuple(
            e._replace(rank=new_rank) for new_rank, e in enumerate(entries, start=1)
        ),
    )


def induced_metric(
    ranking: Ranking,
    sample: AnnotationSet,
    spec: MetricSpec,
    group: GroupLabel,
    targets: GroupProportions | None = None,
) -> float:
    """Exact metric evaluated on the induced (labeled-only) ranking.

    Inclusion probabilities, if present, are ignored. Divergence kinds
    need the `targets` mapping; exposure reports the group's exposure on
    the induced ranking. An empty induced ranking yields 0.
    """
    induced = induced_ranking(ranking, sample)
    if spec.kind is MetricKind.EXPOSURE:
        return group_exposure(induced, sample, group, spec.cutoff_k, spec.patience)
    if spec.kind in DIVERGENCE_KINDS:
        if targets is None:
            raise ContractError("divergence kinds need a targets mapping")
        observed = {
            g: group_proportion(induced, sample, g, spec.cutoff_k) for g in targets
        }
        return divergence(spec.kind, targets, observed)
    raise ContractError(f"unknown metric kind: {spec.kind}")
