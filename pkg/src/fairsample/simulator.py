"""Synthetic test-collection and ranking-system generator.

The generative model:

* Each query q draws an easiness h_q from a Beta prior; binary relevance
  r_dq is Bernoulli(h_q) per document, so queries vary widely in how many
  relevant documents they have.
* Group membership is a global document property, independent of query
  and relevance: a rate beta is drawn once per collection from a Beta
  prior and each document is protected with probability beta.
* Each system m draws a goodness alpha_m uniformly from a range, then
  scores every (document, query) pair as Normal(mu, sigma) with

      mu = 0                               non-relevant, unprotected
      mu = alpha_m + h_q                   relevant,     unprotected
      mu = bias                            non-relevant, protected
      mu = alpha_m + h_q + bias            relevant,     protected

  and ranks the top N by descending score (ties by ascending doc id).

Noise is generated as mu + sigma * Z with Z drawn independently of the
parameters, so configurations sharing a seed share their noise (common
random numbers): raising the group bias can only move protected documents
up. Every randomized task derives its own stream from the master seed, so
outputs do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np

from .corpus import AnnotationSet, Qrels, RankedDoc, Ranking, RunSet
from .errors import ContractError
from .metrics import MetricSpec
from .rng import derive, generator

PROTECTED_LABEL = "A"
UNPROTECTED_LABEL = "B"

_COLLECTION_STREAM = 0
_SYSTEM_STREAM = 1


@dataclass(frozen=True)
class SimConfig:
    """Knobs of the generative model; see the module docstring."""

    num_queries: int
    corpus_size: int
    num_systems: int
    retrieved_per_query: int
    easiness_prior: tuple[float, float] = (2.0, 6.0)
    goodness_range: tuple[float, float] = (0.5, 2.5)
    group_bias: float = 0.0
    group_bias_range: tuple[float, float] | None = None
    beta_prior: tuple[float, float] = (1.0, 1.0)
    score_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_queries", "corpus_size", "num_systems",
                     "retrieved_per_query"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be a positive integer")
        if self.retrieved_per_query > self.corpus_size:
            raise ContractError("retrieved_per_query cannot exceed corpus_size")
        for name in ("easiness_prior", "beta_prior"):
            a, b = getattr(self, name)
            if a <= 0 or b <= 0:
                raise ContractError(f"{name} parameters must be positive")
        lo, hi = self.goodness_range
        if hi < lo:
            raise ContractError("goodness_range is reversed")
        if self.group_bias_range is not None:
            lo, hi = self.group_bias_range
            if hi < lo:
                raise ContractError("group_bias_range is reversed")
        if self.score_noise <= 0:
            raise ContractError("score_noise must be positive")


def paper_scale_config(*, group_bias: float = 0.5, seed: int = 1729) -> SimConfig:
    """The 800-system / 50-query / 1000-document benchmark configuration."""
    return SimConfig(
        num_queries=50,
        corpus_size=1000,
        num_systems=800,
        retrieved_per_query=100,
        group_bias=group_bias,
        seed=seed,
    )


def _token(prefix: str, index: int, width: int) -> str:
    return f"{prefix}{index + 1:0{width}d}"


def _width(count: int) -> int:
    return max(3, len(str(count)))


def doc_tokens(config: SimConfig) -> list[str]:
    w = _width(config.corpus_size)
    return [_token("d", i, w) for i in range(config.corpus_size)]


def query_tokens(config: SimConfig) -> list[str]:
    w = _width(config.num_queries)
    return [_token("q", i, w) for i in range(config.num_queries)]


def system_tokens(config: SimConfig) -> list[str]:
    w = _width(config.num_systems)
    return [_token("s", i, w) for i in range(config.num_systems)]


def _collection_arrays(
    config: SimConfig,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Draw (beta, protected (D,), easiness (Q,), relevance (Q, D)).

    The membership rate is drawn first so that it depends only on the seed
    and the beta prior, not on the other priors.
    """
    rng = generator(derive(config.seed, _COLLECTION_STREAM))
    membership_rate = float(rng.beta(*config.beta_prior))
    is_protected = rng.random(config.corpus_size) < membership_rate
    easiness = rng.beta(*config.easiness_prior, size=config.num_queries)
    relevance = (
        rng.random((config.num_queries, config.corpus_size)) < easiness[:, None]
    )
    return membership_rate, is_protected, easiness, relevance


def _system_arrays(
    config: SimConfig,
    system_index: int,
    easiness: np.ndarray,
    relevance: np.ndarray,
    is_protected: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Rank one system: (doc_index (Q, N), scores (Q, N)) in rank order."""
    rng = generator(derive(config.seed, _SYSTEM_STREAM, system_index))
    lo, hi = config.goodness_range
    goodness = rng.uniform(lo, hi)
    if config.group_bias_range is not None:
        b_lo, b_hi = config.group_bias_range
        bias = rng.uniform(b_lo, b_hi)
    else:
        bias = config.group_bias
    noise = rng.standard_normal((config.num_queries, config.corpus_size))
    mu = relevance * (goodness + easiness[:, None]) + is_protected[None, :] * bias
    scores = mu + config.score_noise * noise
    # stable sort on negated scores: ties fall back to ascending doc index,
    # which equals ascending doc token order
    order = np.argsort(-scores, axis=1, kind="stable")
    top = order[:, : config.retrieved_per_query]
    return top, np.take_along_axis(scores, top, axis=1)


@dataclass
class SyntheticCollection:
    """A generated collection plus the rankings of all simulated systems.

    Rankings are held as index arrays; `runset` materializes corpus
    objects on first access and `iter_rankings` streams them without
    keeping everything in memory.
    """

    config: SimConfig
    doc_ids: list[str]
    query_ids: list[str]
    system_ids: list[str]
    qrels: Qrels
    group_labels: AnnotationSet
    membership_rate: float
    easiness: np.ndarray = field(repr=False)
    relevance: np.ndarray = field(repr=False)
    is_protected: np.ndarray = field(repr=False)
    doc_index: np.ndarray = field(repr=False)  # (M, Q, N) into doc_ids
    scores: np.ndarray = field(repr=False)  # (M, Q, N), rank order

    def iter_rankings(self) -> Iterator[Ranking]:
        for m, system_id in enumerate(self.system_ids):
            for q, query_id in enumerate(self.query_ids):
                entries = tuple(
                    RankedDoc(self.doc_ids[d], rank + 1, float(s))
                    for rank, (d, s) in enumerate(
                        zip(self.doc_index[m, q], self.scores[m, q])
                    )
                )
                yield Ranking(query_id=query_id, system_id=system_id,
                              entries=entries)

    @cached_property
    def runset(self) -> RunSet:
        return RunSet(rankings={
            (r.system_id, r.query_id): r for r in self.iter_rankings()
        })

    def ground_truth_metrics(
        self, specs: Sequence[MetricSpec], protected: str = PROTECTED_LABEL
    ) -> Mapping[tuple[str, str, MetricSpec], float]:
        """Exact per-(system, query) value of each metric spec."""
        from .evaluation import RankingPanel

        panel = RankingPanel.from_simulation(self)
        out: dict[tuple[str, str, MetricSpec], float] = {}
        for spec in specs:
            values = panel.exact_values(spec, self.group_labels, self.qrels,
                                        protected)
            for m, system_id in enumerate(self.system_ids):
                for q, query_id in enumerate(self.query_ids):
                    out[(system_id, query_id, spec)] = float(values[m, q])
        return out


def simulate(config: SimConfig) -> SyntheticCollection:
    """Generate a full collection and all system rankings for a config."""
    membership_rate, is_protected, easiness, relevance = _collection_arrays(config)

    docs = doc_tokens(config)
    queries = query_tokens(config)
    systems = system_tokens(config)

    judgments = {
        (queries[q], docs[d]): int(relevance[q, d])
        for q in range(config.num_queries)
        for d in range(config.corpus_size)
    }
    labels = {
        docs[d]: PROTECTED_LABEL if is_protected[d] else UNPROTECTED_LABEL
        for d in range(config.corpus_size)
    }

    doc_index = np.empty(
        (config.num_systems, config.num_queries, config.retrieved_per_query),
        dtype=np.int32,
    )
    scores = np.empty(doc_index.shape)
    for m in range(config.num_systems):
        doc_index[m], scores[m] = _system_arrays(
            config, m, easiness, relevance, is_protected
        )

    return SyntheticCollection(
        config=config,
        doc_ids=docs,
        query_ids=queries,
        system_ids=systems,
        qrels=Qrels(judgments=judgments),
        group_labels=AnnotationSet(labels=labels),
        membership_rate=membership_rate,
        easiness=easiness,
        relevance=relevance,
        is_protected=is_protected,
        doc_index=doc_index,
        scores=scores,
    )


def generate_collection(config: SimConfig) -> tuple[Qrels, AnnotationSet]:
    """Draw relevance judgments and complete group labels for a config."""
    _, is_protected, _, relevance = _collection_arrays(config)
    docs = doc_tokens(config)
    queries = query_tokens(config)
    judgments = {
        (queries[q], docs[d]): int(relevance[q, d])
        for q in range(config.num_queries)
        for d in range(config.corpus_size)
    }
    labels = {
        docs[d]: PROTECTED_LABEL if is_protected[d] else UNPROTECTED_LABEL
        for d in range(config.corpus_size)
    }
    return Qrels(judgments=judgments), AnnotationSet(labels=labels)


def generate_systems(
    config: SimConfig, qrels: Qrels, labels: AnnotationSet
) -> RunSet:
    """Simulate all systems against a collection from `generate_collection`.

    The query easiness values are not recoverable from the realized
    judgments, so they are re-derived from the config seed; the qrels and
    labels must therefore come from `generate_collection` with this same
    config.
    """
    docs = doc_tokens(config)
    queries = query_tokens(config)
    if set(labels.labels) != set(docs):
        raise ContractError("labels do not match the documents of this config")
    _, _, easiness, _ = _collection_arrays(config)
    relevance = np.array(
        [[qrels.grade(qid, doc) > 0 for doc in docs] for qid in queries]
    )
    is_protected = np.array(
        [labels.labels[doc] == PROTECTED_LABEL for doc in docs]
    )

    rankings = {}
    for m, system_id in enumerate(system_tokens(config)):
        top, scores = _system_arrays(config, m, easiness, relevance, is_protected)
        for q, query_id in enumerate(queries):
            entries = tuple(
                RankedDoc(docs[d], rank + 1, float(s))
                for rank, (d, s) in enumerate(zip(top[q], scores[q]))
            )
            rankings[(system_id, query_id)] = Ranking(
                query_id=query_id, system_id=system_id, entries=entries
            )
    return RunSet(rankings=rankings)
