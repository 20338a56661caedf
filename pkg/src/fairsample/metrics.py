"""Exact (full-information) group fairness metrics for rankings.

Two representation measures are supported over the top k positions of a
ranking: the plain group proportion and a patience-discounted exposure
(1-g) * sum_i g^(i-1) * [position i belongs to the group]. Proportions are
compared against a representation target through one of four divergence
measures; exposure is reported directly for the protected group.

Conventions for rankings shorter than the cutoff: the proportion keeps k
as its denominator (missing positions count as non-members) while the
exposure sum simply truncates, so values stay comparable across systems
that retrieve different amounts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .corpus import AnnotationSet, GroupLabel, Qrels, Ranking
from .errors import ContractError, UndefinedTargetError

# Floor applied to an observed proportion before it enters the KL ratio;
# estimated proportions are frequently exactly 0 at low sampling rates.
KL_EPSILON = 1e-6


class MetricKind(str, Enum):
    DIFFERENCE = "difference"
    ABSOLUTE_DIFFERENCE = "absolute_difference"
    SQUARED_DIFFERENCE = "squared_difference"
    KL_DIVERGENCE = "kl_divergence"
    EXPOSURE = "exposure"


DIVERGENCE_KINDS = (
    MetricKind.DIFFERENCE,
    MetricKind.ABSOLUTE_DIFFERENCE,
    MetricKind.SQUARED_DIFFERENCE,
    MetricKind.KL_DIVERGENCE,
)


class TargetKind(str, Enum):
    PARITY = "parity"
    CORPUS_PROPORTION = "corpus_proportion"
    RELEVANCE_PROPORTION = "relevance_proportion"
    FIXED_VALUE = "fixed_value"


# GroupProportions: per-group mapping of observed or target proportions.
# Exact values lie in [0, 1]; estimates may exceed 1.
GroupProportions = Mapping[GroupLabel, float]


@dataclass(frozen=True)
class MetricSpec:
    """Which metric to compute, its cutoff, patience, and target."""

    kind: MetricKind
    cutoff_k: int = 30
    patience: float = 0.5
    target_kind: TargetKind = TargetKind.PARITY
    target_value: float | None = None

    def __post_init__(self):
        if self.cutoff_k < 1:
            raise ContractError("cutoff_k must be a positive integer")
        if not (0.0 < self.patience < 1.0):
            raise ContractError("patience must lie strictly inside (0, 1)")
        if self.target_kind is TargetKind.FIXED_VALUE:
            if self.target_value is None or not (0.0 <= self.target_value <= 1.0):
                raise ContractError("fixed-value target requires a value in [0, 1]")
        elif self.target_value is not None:
            raise ContractError("target_value is only valid with a fixed-value target")

    @property
    def name(self) -> str:
        return f"{self.kind.value}@{self.cutoff_k}"

    @property
    def is_exposure(self) -> bool:
        return self.kind is MetricKind.EXPOSURE


def group_proportion(
    ranking: Ranking, labels: AnnotationSet, group: GroupLabel, k: int
) -> float:
    """Fraction of the top-k positions occupied by `group`.

    Requires labels for all of the top min(k, R) documents; raises
    MissingLabelError naming the first unlabeled one otherwise.
    """
    if k < 1:
        raise ContractError("k must be a positive integer")
    count = sum(1 for e in ranking.top(k) if labels.label(e.doc_id) == group)
    return count / k


def group_exposure(
    ranking: Ranking, labels: AnnotationSet, group: GroupLabel,
    k: int, patience: float,
) -> float:
    """Discounted exposure of `group` over the top-k positions."""
    if k < 1:
        raise ContractError("k must be a positive integer")
    if not (0.0 < patience < 1.0):
        raise ContractError("patience must lie strictly inside (0, 1)")
    total = 0.0
    for i, entry in enumerate(ranking.top(k)):
        if labels.label(entry.doc_id) == group:
            total += patience ** i
    return (1.0 - patience) * total


def representation_target(
    spec: MetricSpec,
    labels: AnnotationSet,
    qrels: Qrels | None,
    query_id: str,
    group: GroupLabel,
) -> float:
    """Resolve the ideal proportion of `group` under the spec's target kind.

    Corpus proportion treats `labels` as the fully labeled reference set;
    relevance proportion additionally needs qrels for the query and is
    undefined when the query has no relevant documents.
    """
    if spec.target_kind is TargetKind.PARITY:
        return 0.5
    if spec.target_kind is TargetKind.FIXED_VALUE:
        assert spec.target_value is not None
        return spec.target_value
    if spec.target_kind is TargetKind.CORPUS_PROPORTION:
        if not labels.labels:
            raise ContractError("corpus-proportion target needs a labeled corpus")
        count = sum(1 for g in labels.labels.values() if g == group)
        return count / len(labels.labels)
    if spec.target_kind is TargetKind.RELEVANCE_PROPORTION:
        if qrels is None:
            raise ContractError("relevance-proportion target needs qrels")
        relevant = qrels.relevant_docs(query_id)
        if not relevant:
            raise UndefinedTargetError(
                f"query {query_id!r} has no relevant documents"
            )
        count = sum(1 for doc in relevant if labels.label(doc) == group)
        return count / len(relevant)
    raise ContractError(f"unknown target kind: {spec.target_kind}")


def kl_term(target: float, observed: float) -> float:
    """One group's contribution to the KL divergence, with the 0-clamp."""
    if target == 0.0:
        return 0.0
    return target * math.log(target / max(observed, KL_EPSILON))


def divergence(
    kind: MetricKind, targets: GroupProportions, observed: GroupProportions
) -> float:
    """Compare observed group proportions against their targets."""
    if set(targets) != set(observed):
        raise ContractError(
            f"target groups {sorted(targets)} != observed groups {sorted(observed)}"
        )
    if kind is MetricKind.DIFFERENCE:
        return sum(targets[g] - observed[g] for g in targets)
    if kind is MetricKind.ABSOLUTE_DIFFERENCE:
        return sum(abs(targets[g] - observed[g]) for g in targets)
    if kind is MetricKind.SQUARED_DIFFERENCE:
        return sum((targets[g] - observed[g]) ** 2 for g in targets)
    if kind is MetricKind.KL_DIVERGENCE:
        return sum(kl_term(targets[g], observed[g]) for g in targets)
    raise ContractError(f"{kind} is not a divergence kind")
