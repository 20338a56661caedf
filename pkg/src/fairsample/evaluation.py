"""Experiment harness: sampling-rate sweeps scored by Kendall's tau and RMSE.

`run_experiment` computes, per system, the exact value of each metric
(mean over queries), then repeatedly samples annotations at each rate and
re-estimates the metrics with every requested estimator. Each
(metric, estimator, rate, repetition) cell is scored against the exact
values with tie-corrected Kendall's tau and RMSE; means over repetitions
summarize a rate.

Per repetition one stratified sample is shared by the Horvitz-Thompson
and induced estimators (the induced baseline ignores the thetas) and one
uniform sample feeds the uniform-mean estimators, so estimator
differences are not confounded with sample-set differences.

Ground truth is computed once; cells with undefined tau (zero variance in
either vector) are recorded as missing and excluded from means. All
randomness is derived from the config seed, so a config reproduces its
report exactly.

The heavy lifting runs on `RankingPanel`, an array-backed view of the
rankings; its results agree with the per-ranking reference functions in
`metrics` and `estimators` (the test suite checks this equivalence).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .corpus import (
    AnnotationSet,
    DocId,
    Qrels,
    Ranking,
    parse_annotations,
    parse_qrels,
    parse_run_file,
)
from .errors import (
    ContractError,
    DataError,
    FairsampleError,
    MissingLabelError,
    UndefinedCorrelationError,
)
from .estimators import EstimatorKind
from .metrics import (
    DIVERGENCE_KINDS,
    KL_EPSILON,
    MetricKind,
    MetricSpec,
    TargetKind,
    representation_target,
)
from .rng import derive
from .sampling import (
    BudgetSpec,
    SamplingDesign,
    design_from_weights,
    rank_weights,
    restrict_pool,
    stratify,
    stratified_sample,
    uniform_sample,
)
from .simulator import SimConfig, SyntheticCollection, simulate

_WEIGHTED_STREAM = 2
_UNIFORM_STREAM = 3

DEFAULT_RATES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

DEFAULT_METRICS = (
    MetricSpec(MetricKind.ABSOLUTE_DIFFERENCE),
    MetricSpec(MetricKind.SQUARED_DIFFERENCE),
    MetricSpec(MetricKind.KL_DIVERGENCE),
    MetricSpec(MetricKind.EXPOSURE),
)

DEFAULT_ESTIMATORS = (
    EstimatorKind.HORVITZ_THOMPSON,
    EstimatorKind.INDUCED,
    EstimatorKind.UNIFORM_MEAN_NORMALIZED,
)


def _count_inversions(seq: list[float]) -> int:
    """Pairs (i < j) with seq[i] > seq[j], by merge sort."""
    n = len(seq)
    if n < 2:
        return 0
    mid = n // 2
    left, right = seq[:mid], seq[mid:]
    inversions = _count_inversions(left) + _count_inversions(right)
    merged = []
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            inversions += len(left) - i
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    seq[:] = merged
    return inversions


def _tie_pairs(values: Iterable[float]) -> int:
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return sum(t * (t - 1) // 2 for t in counts.values())


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Tie-corrected (tau-b) Kendall rank correlation.

    Concordant/discordant pairs are counted exactly (merge-sort, integer
    arithmetic); the result matches a brute-force pair count bit for bit.
    Raises UndefinedCorrelationError for fewer than two points or zero
    variance in either vector.
    """
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    if len(xs) != len(ys):
        raise ContractError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise UndefinedCorrelationError("need at least two points")
    if any(math.isnan(v) for v in xs) or any(math.isnan(v) for v in ys):
        raise ContractError("inputs contain NaN")

    order = sorted(range(n), key=lambda i: (xs[i], ys[i]))
    x_sorted = [xs[i] for i in order]
    y_in_x_order = [ys[i] for i in order]

    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(x_sorted)
    n2 = _tie_pairs(ys)
    joint = _tie_pairs(zip(x_sorted, y_in_x_order))  # type: ignore[arg-type]
    if n0 == n1 or n0 == n2:
        raise UndefinedCorrelationError("zero variance in one of the vectors")

    discordant = _count_inversions(y_in_x_order)
    concordant = n0 - n1 - n2 + joint - discordant
    return (concordant - discordant) / math.sqrt((n0 - n1) * (n0 - n2))


def rmse(actual: Sequence[float], estimated: Sequence[float]) -> float:
    """Root mean squared error between two equal-length vectors."""
    a = np.asarray(actual, dtype=float)
    e = np.asarray(estimated, dtype=float)
    if a.shape != e.shape or a.ndim != 1:
        raise ContractError(f"shape mismatch: {a.shape} vs {e.shape}")
    if a.size == 0:
        raise ContractError("need at least one point")
    return float(np.sqrt(np.mean((a - e) ** 2)))


@dataclass(frozen=True)
class DataPaths:
    """File-based experiment source (run file, annotations, optional qrels)."""

    runs: str | Path
    annotations: str | Path
    qrels: str | Path | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    source: SimConfig | DataPaths
    metrics: tuple[MetricSpec, ...] = DEFAULT_METRICS
    estimators: tuple[EstimatorKind, ...] = DEFAULT_ESTIMATORS
    rates: tuple[float, ...] = DEFAULT_RATES
    repetitions: int = 10
    seed: int = 0
    protected_group: str | None = None

    def __post_init__(self):
        if not self.metrics:
            raise ContractError("need at least one metric spec")
        if not self.estimators:
            raise ContractError("need at least one estimator kind")
        if not self.rates:
            raise ContractError("need at least one sampling rate")
        for rate in self.rates:
            if not (0.0 < rate <= 1.0):
                raise ContractError(f"sampling rate {rate} outside (0, 1]")
        if self.repetitions < 1:
            raise ContractError("repetitions must be positive")
        if len({spec.name for spec in self.metrics}) != len(self.metrics):
            raise ContractError("metric specs must have distinct names")


@dataclass(frozen=True)
class CellResult:
    """Scores of one estimator on one metric for one sampled repetition."""

    metric: str
    estimator: str
    rate: float
    repetition: int
    tau: float | None
    rmse: float | None
    n_systems: int
    error: str | None = None


@dataclass(frozen=True)
class SummaryRow:
    metric: str
    estimator: str
    rate: float
    mean_tau: float | None
    mean_rmse: float | None
    repetitions: int
    excluded_tau_cells: int


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


@dataclass
class ExperimentReport:
    """Actual vs estimated per-system values plus per-cell tau/RMSE."""

    system_ids: list[str]
    metric_names: list[str]
    estimator_names: list[str]
    rates: list[float]
    repetitions: int
    actual: dict[str, np.ndarray]
    estimated: dict[tuple[str, str, float, int], np.ndarray]
    cells: list[CellResult] = field(default_factory=list)

    def cell(self, metric: str, estimator: str, rate: float,
             repetition: int) -> CellResult:
        for c in self.cells:
            if (c.metric, c.estimator, c.rate, c.repetition) == (
                    metric, estimator, rate, repetition):
                return c
        raise KeyError((metric, estimator, rate, repetition))

    def summary(self) -> list[SummaryRow]:
        rows = []
        for metric in self.metric_names:
            for estimator in self.estimator_names:
                for rate in self.rates:
                    taus = []
                    rmses = []
                    excluded = 0
                    for c in self.cells:
                        if (c.metric, c.estimator, c.rate) != (
                                metric, estimator, rate):
                            continue
                        if c.tau is None:
                            excluded += 1
                        else:
                            taus.append(c.tau)
                        if c.rmse is not None:
                            rmses.append(c.rmse)
                    rows.append(SummaryRow(
                        metric=metric,
                        estimator=estimator,
                        rate=rate,
                        mean_tau=sum(taus) / len(taus) if taus else None,
                        mean_rmse=sum(rmses) / len(rmses) if rmses else None,
                        repetitions=self.repetitions,
                        excluded_tau_cells=excluded,
                    ))
        return rows

    def mean_tau(self, metric: str, estimator: str, rate: float) -> float | None:
        for row in self.summary():
            if (row.metric, row.estimator, row.rate) == (metric, estimator, rate):
                return row.mean_tau
        raise KeyError((metric, estimator, rate))

    def mean_rmse(self, metric: str, estimator: str, rate: float) -> float | None:
        for row in self.summary():
            if (row.metric, row.estimator, row.rate) == (metric, estimator, rate):
                return row.mean_rmse
        raise KeyError((metric, estimator, rate))

    def write_report_csv(self, stream: IO[str]) -> None:
        stream.write("metric,estimator,rate,repetition,tau,rmse,n_systems\n")
        for c in self.cells:
            stream.write(
                f"{c.metric},{c.estimator},{_fmt(c.rate)},{c.repetition},"
                f"{_fmt(c.tau)},{_fmt(c.rmse)},{c.n_systems}\n"
            )

    def write_detail_csv(self, stream: IO[str]) -> None:
        stream.write("metric,estimator,rate,repetition,system_id,actual,estimated\n")
        for (metric, estimator, rate, rep), est in self.estimated.items():
            actual = self.actual[metric]
            for i, system_id in enumerate(self.system_ids):
                stream.write(
                    f"{metric},{estimator},{_fmt(rate)},{rep},{system_id},"
                    f"{_fmt(actual[i])},{_fmt(est[i])}\n"
                )

    def write_summary_csv(self, stream: IO[str]) -> None:
        stream.write(
            "metric,estimator,rate,mean_tau,mean_rmse,repetitions,"
            "excluded_tau_cells\n"
        )
        for row in self.summary():
            stream.write(
                f"{row.metric},{row.estimator},{_fmt(row.rate)},"
                f"{_fmt(row.mean_tau)},{_fmt(row.mean_rmse)},"
                f"{row.repetitions},{row.excluded_tau_cells}\n"
            )


class RankingPanel:
    """Array-backed view of a set of rankings for vectorized evaluation.

    doc_index has shape (systems, queries, max length) and holds positions
    into `doc_ids`; rows shorter than the maximum are padded with a
    sentinel index one past the last document, whose slot is False/zero in
    every lookup vector.
    """

    def __init__(
        self,
        system_ids: list[str],
        query_ids: list[str],
        doc_ids: list[str],
        doc_index: np.ndarray,
        lengths: np.ndarray,
    ):
        self.system_ids = system_ids
        self.query_ids = query_ids
        self.doc_ids = doc_ids
        self.doc_pos = {d: i for i, d in enumerate(doc_ids)}
        self.doc_index = doc_index
        self.lengths = lengths
        self.sentinel = len(doc_ids)
        present = np.zeros(self.sentinel + 1, dtype=bool)
        present[self.doc_index.ravel()] = True
        present[self.sentinel] = False
        self.present = present
        if (lengths == 0).all(axis=1).any():
            raise DataError("a system has no rankings")
        if (lengths == 0).all(axis=0).any():
            raise DataError("a query has no rankings")

    @classmethod
    def from_rankings(cls, rankings: Iterable[Ranking]) -> "RankingPanel":
        by_key: dict[tuple[str, str], Ranking] = {}
        for ranking in rankings:
            key = (ranking.system_id, ranking.query_id)
            if key in by_key:
                raise DataError(f"duplicate ranking for {key}")
            by_key[key] = ranking
        if not by_key:
            raise ContractError("no rankings given")
        system_ids = sorted({s for s, _ in by_key})
        query_ids = sorted({q for _, q in by_key})
        doc_ids = sorted({
            e.doc_id for ranking in by_key.values() for e in ranking.entries
        })
        doc_pos = {d: i for i, d in enumerate(doc_ids)}
        n_max = max(len(r) for r in by_key.values())
        doc_index = np.full(
            (len(system_ids), len(query_ids), n_max), len(doc_ids), dtype=np.int64
        )
        lengths = np.zeros((len(system_ids), len(query_ids)), dtype=np.int64)
        q_pos = {q: i for i, q in enumerate(query_ids)}
        s_pos = {s: i for i, s in enumerate(system_ids)}
        for (system_id, query_id), ranking in by_key.items():
            m, q = s_pos[system_id], q_pos[query_id]
            lengths[m, q] = len(ranking)
            for i, entry in enumerate(ranking.entries):
                doc_index[m, q, i] = doc_pos[entry.doc_id]
        return cls(system_ids, query_ids, doc_ids, doc_index, lengths)

    @classmethod
    def from_simulation(cls, collection: SyntheticCollection) -> "RankingPanel":
        config = collection.config
        lengths = np.full(
            (config.num_systems, config.num_queries),
            config.retrieved_per_query,
            dtype=np.int64,
        )
        return cls(
            list(collection.system_ids),
            list(collection.query_ids),
            list(collection.doc_ids),
            collection.doc_index.astype(np.int64),
            lengths,
        )

    # -- lookup vectors ---------------------------------------------------

    def _flag_vector(self, docs: Iterable[DocId]) -> np.ndarray:
        vec = np.zeros(self.sentinel + 1, dtype=bool)
        for doc in docs:
            pos = self.doc_pos.get(doc)
            if pos is not None:
                vec[pos] = True
        return vec

    def member_vector(self, labels: AnnotationSet, group: str) -> np.ndarray:
        return self._flag_vector(
            d for d, g in labels.labels.items() if g == group
        )

    def ranked_docs(self) -> list[DocId]:
        return [self.doc_ids[i] for i in np.nonzero(self.present[:-1])[0]]

    def check_labeled(self, labels: AnnotationSet) -> None:
        labeled = self._flag_vector(labels.labels)
        missing = self.present[:-1] & ~labeled[:-1]
        if missing.any():
            raise MissingLabelError(self.doc_ids[int(np.argmax(missing))])

    # -- building blocks ---------------------------------------------------

    def _top_counts(self, vector: np.ndarray, k: int) -> np.ndarray:
        """Sum `vector` over the top-k positions of every ranking: (M, Q)."""
        idx = self.doc_index[:, :, :k]
        return vector[idx].sum(axis=2)

    def _discounted_sum(self, vector: np.ndarray, k: int,
                        patience: float) -> np.ndarray:
        idx = self.doc_index[:, :, :k]
        discount = patience ** np.arange(idx.shape[2])
        return (vector[idx] * discount).sum(axis=2)

    def pooled_design(self) -> SamplingDesign:
        """Vectorized equivalent of `sampling.pooled_distribution`."""
        n_systems, n_queries, n_max = self.doc_index.shape
        weights = np.zeros(self.doc_index.shape)
        cache: dict[int, np.ndarray] = {}
        for m in range(n_systems):
            for q in range(n_queries):
                length = int(self.lengths[m, q])
                if length == 0:
                    continue
                w = cache.get(length)
                if w is None:
                    w = cache.setdefault(length, rank_weights(length))
                weights[m, q, :length] = w

        numerator = np.zeros(self.sentinel + 1)
        np.add.at(numerator, self.doc_index.ravel(), weights.ravel())

        q_idx = np.broadcast_to(
            np.arange(n_queries)[None, :, None], self.doc_index.shape
        )
        appears = np.zeros((n_queries, self.sentinel + 1), dtype=bool)
        appears[q_idx.ravel(), self.doc_index.ravel()] = True
        appears[:, self.sentinel] = False
        rankings_per_query = (self.lengths > 0).sum(axis=0)
        denominator = (appears * rankings_per_query[:, None]).sum(axis=0)

        docs = np.nonzero(self.present[:-1])[0]
        weight_sum = {self.doc_ids[i]: float(numerator[i]) for i in docs}
        ranking_count = {self.doc_ids[i]: int(denominator[i]) for i in docs}
        return design_from_weights(weight_sum, ranking_count)

    # -- per-query metric values -------------------------------------------

    def target_arrays(
        self,
        spec: MetricSpec,
        labels: AnnotationSet,
        qrels: Qrels | None,
        protected: str,
        groups: Sequence[str],
    ) -> dict[str, np.ndarray]:
        """Per-query target proportion of each group, shape (Q,).

        A fixed-value target applies to the protected group; the other
        group gets the complement.
        """
        n_queries = len(self.query_ids)
        out: dict[str, np.ndarray] = {}
        if spec.target_kind is TargetKind.FIXED_VALUE:
            assert spec.target_value is not None
            for g in groups:
                value = (
                    spec.target_value if g == protected else 1.0 - spec.target_value
                )
                out[g] = np.full(n_queries, value)
            return out
        for g in groups:
            if spec.target_kind is TargetKind.RELEVANCE_PROPORTION:
                out[g] = np.array([
                    representation_target(spec, labels, qrels, qid, g)
                    for qid in self.query_ids
                ])
            else:
                value = representation_target(spec, labels, None, "", g)
                out[g] = np.full(n_queries, value)
        return out

    @staticmethod
    def _combine_divergence(
        kind: MetricKind,
        targets: dict[str, np.ndarray],
        observed: dict[str, np.ndarray],
        groups: Sequence[str],
    ) -> np.ndarray:
        """Divergence of observed vs target arrays (broadcast together)."""
        total = np.zeros(np.broadcast(
            observed[groups[0]], targets[groups[0]]
        ).shape)
        for g in groups:
            t = targets[g]
            o = observed[g]
            if kind is MetricKind.DIFFERENCE:
                total = total + (t - o)
            elif kind is MetricKind.ABSOLUTE_DIFFERENCE:
                total = total + np.abs(t - o)
            elif kind is MetricKind.SQUARED_DIFFERENCE:
                total = total + (t - o) ** 2
            elif kind is MetricKind.KL_DIVERGENCE:
                safe_t = np.where(t > 0.0, t, 1.0)
                term = t * np.log(safe_t / np.maximum(o, KL_EPSILON))
                total = total + np.where(t > 0.0, term, 0.0)
            else:
                raise ContractError(f"{kind} is not a divergence kind")
        return total

    def exact_proportions(
        self, labels: AnnotationSet, group: str, k: int
    ) -> np.ndarray:
        """Exact per-(system, query) top-k proportion of `group`."""
        return self._top_counts(
            self.member_vector(labels, group).astype(float), k
        ) / k

    def exact_values(
        self,
        spec: MetricSpec,
        labels: AnnotationSet,
        qrels: Qrels | None,
        protected: str,
    ) -> np.ndarray:
        """Exact per-(system, query) metric values, shape (M, Q)."""
        self.check_labeled(labels)
        k = spec.cutoff_k
        if spec.kind is MetricKind.EXPOSURE:
            member = self.member_vector(labels, protected)
            return (1.0 - spec.patience) * self._discounted_sum(
                member.astype(float), k, spec.patience
            )
        groups = list(labels.groups())
        targets = self.target_arrays(spec, labels, qrels, protected, groups)
        observed = {g: self.exact_proportions(labels, g, k) for g in groups}
        return self._combine_divergence(
            spec.kind, {g: targets[g][None, :] for g in groups},
            observed, groups,
        )

    def _divergence_of_means(
        self,
        kind: MetricKind,
        targets: dict[str, np.ndarray],
        observed: dict[str, np.ndarray],
        groups: Sequence[str],
    ) -> np.ndarray:
        """Per-system divergence of query-averaged group representations.

        Group proportions are noisy per query when few of the top-k items
        are annotated; averaging them over a system's queries before the
        divergence keeps the comparison meaningful at low sampling rates,
        where averaging per-query divergences would mostly measure the
        estimators' dispersion.
        """
        mean_obs = {g: self.per_system(observed[g]) for g in groups}
        mean_targets = {
            g: self.per_system(np.broadcast_to(
                targets[g][None, :], observed[g].shape
            )) for g in groups
        }
        return self._combine_divergence(kind, mean_targets, mean_obs, groups)

    def exact_per_system(
        self,
        spec: MetricSpec,
        labels: AnnotationSet,
        qrels: Qrels | None,
        protected: str,
    ) -> np.ndarray:
        """Per-system exact metric: query-mean exposure, or divergence of
        query-mean proportions, shape (M,)."""
        self.check_labeled(labels)
        if spec.kind is MetricKind.EXPOSURE:
            return self.per_system(self.exact_values(spec, labels, qrels,
                                                     protected))
        groups = list(labels.groups())
        targets = self.target_arrays(spec, labels, qrels, protected, groups)
        observed = {
            g: self.exact_proportions(labels, g, spec.cutoff_k) for g in groups
        }
        return self._divergence_of_means(spec.kind, targets, observed, groups)

    def _induced_index(self, in_sample: np.ndarray) -> np.ndarray:
        """Doc indices re-ordered so sampled docs come first in rank order."""
        unlabeled = ~in_sample[self.doc_index]
        order = np.argsort(unlabeled, axis=2, kind="stable")
        return np.take_along_axis(self.doc_index, order, axis=2)

    def _inv_theta_vector(self, sample: AnnotationSet) -> np.ndarray:
        if sample.inclusion is None:
            raise ContractError(
                "Horvitz-Thompson estimation needs inclusion probabilities"
            )
        inv_theta = np.zeros(self.sentinel + 1)
        for doc, theta in sample.inclusion.items():
            pos = self.doc_pos.get(doc)
            if pos is not None:
                inv_theta[pos] = 1.0 / theta
        return inv_theta

    def estimated_proportions(
        self, kind: EstimatorKind, sample: AnnotationSet, group: str, k: int
    ) -> np.ndarray:
        """Estimated per-(system, query) top-k proportion, shape (M, Q)."""
        member = self.member_vector(sample, group).astype(float)
        if kind is EstimatorKind.HORVITZ_THOMPSON:
            return self._top_counts(member * self._inv_theta_vector(sample), k) / k
        if kind is EstimatorKind.INDUCED:
            induced = self._induced_index(self._flag_vector(sample.labels))
            return member[induced[:, :, :k]].sum(axis=2) / k
        if kind is EstimatorKind.UNIFORM_MEAN:
            return self._top_counts(member, k) / k
        if kind is EstimatorKind.UNIFORM_MEAN_NORMALIZED:
            raw = self._top_counts(member, k)
            sampled = self._top_counts(self._flag_vector(sample.labels), k)
            pool_count = self._top_counts(self.present, k)
            return np.divide(
                raw * pool_count, k * sampled,
                out=np.zeros(raw.shape), where=sampled > 0,
            )
        raise ContractError(f"unknown estimator kind: {kind}")

    def estimated_exposure(
        self, kind: EstimatorKind, sample: AnnotationSet, group: str,
        k: int, patience: float,
    ) -> np.ndarray:
        """Estimated per-(system, query) exposure, shape (M, Q)."""
        member = self.member_vector(sample, group).astype(float)
        if kind is EstimatorKind.HORVITZ_THOMPSON:
            weighted = member * self._inv_theta_vector(sample)
            return (1.0 - patience) * self._discounted_sum(weighted, k, patience)
        if kind is EstimatorKind.INDUCED:
            induced = self._induced_index(self._flag_vector(sample.labels))
            discount = patience ** np.arange(min(k, induced.shape[2]))
            picked = member[induced[:, :, :k]]
            return (1.0 - patience) * (picked * discount).sum(axis=2)
        raw = self._discounted_sum(member, k, patience)
        if kind is EstimatorKind.UNIFORM_MEAN:
            return (1.0 - patience) * raw / k
        if kind is EstimatorKind.UNIFORM_MEAN_NORMALIZED:
            sampled = self._top_counts(self._flag_vector(sample.labels), k)
            pool_count = self._top_counts(self.present, k)
            scale = np.divide(
                pool_count, sampled,
                out=np.zeros(sampled.shape, dtype=float), where=sampled > 0,
            )
            return (1.0 - patience) * scale * raw
        raise ContractError(f"unknown estimator kind: {kind}")

    def estimate_values(
        self,
        spec: MetricSpec,
        kind: EstimatorKind,
        sample: AnnotationSet,
        targets: dict[str, np.ndarray],
        protected: str,
        groups: Sequence[str],
    ) -> np.ndarray:
        """Estimated per-(system, query) metric values, shape (M, Q)."""
        if spec.kind is MetricKind.EXPOSURE:
            return self.estimated_exposure(
                kind, sample, protected, spec.cutoff_k, spec.patience
            )
        observed = {
            g: self.estimated_proportions(kind, sample, g, spec.cutoff_k)
            for g in groups
        }
        return self._combine_divergence(
            spec.kind, {g: targets[g][None, :] for g in groups},
            observed, groups,
        )

    def estimate_per_system(
        self,
        spec: MetricSpec,
        kind: EstimatorKind,
        sample: AnnotationSet,
        targets: dict[str, np.ndarray],
        protected: str,
        groups: Sequence[str],
    ) -> np.ndarray:
        """Per-system estimate: query-mean exposure, or divergence of
        query-mean estimated proportions, shape (M,)."""
        if spec.kind is MetricKind.EXPOSURE:
            return self.per_system(self.estimated_exposure(
                kind, sample, protected, spec.cutoff_k, spec.patience
            ))
        observed = {
            g: self.estimated_proportions(kind, sample, g, spec.cutoff_k)
            for g in groups
        }
        return self._divergence_of_means(spec.kind, targets, observed, groups)

    def per_system(self, values: np.ndarray) -> np.ndarray:
        """Mean over each system's available queries, shape (M,)."""
        valid = self.lengths > 0
        return (values * valid).sum(axis=1) / valid.sum(axis=1)


def _load_source(
    config: ExperimentConfig,
) -> tuple[RankingPanel, AnnotationSet, Qrels | None]:
    if isinstance(config.source, SimConfig):
        collection = simulate(config.source)
        panel = RankingPanel.from_simulation(collection)
        return panel, collection.group_labels, collection.qrels
    paths = config.source
    with open(paths.runs, encoding="utf-8") as f:
        runset = parse_run_file(f)
    with open(paths.annotations, encoding="utf-8") as f:
        labels = parse_annotations(f)
    qrels = None
    if paths.qrels is not None:
        with open(paths.qrels, encoding="utf-8") as f:
            qrels = parse_qrels(f)
    return RankingPanel.from_rankings(iter(runset)), labels, qrels


def build_design(panel: RankingPanel, labels: AnnotationSet) -> SamplingDesign:
    """Pooled top-heavy design restricted to annotatable documents."""
    design = panel.pooled_design()
    labeled = [d for d in design.pool if d in labels]
    if not labeled:
        raise DataError("no ranked document carries a ground-truth label")
    return restrict_pool(design, labeled)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Sweep sampling rates and score every estimator against ground truth."""
    panel, labels, qrels = _load_source(config)
    panel.check_labeled(labels)
    groups = list(labels.groups())
    protected = config.protected_group or groups[0]
    if protected not in groups:
        raise ContractError(f"protected group {protected!r} not among {groups}")
    divergence_requested = any(
        spec.kind in DIVERGENCE_KINDS for spec in config.metrics
    )
    if divergence_requested and len(groups) != 2:
        raise ContractError("divergence metrics need a two-group partition")

    actual: dict[str, np.ndarray] = {}
    targets: dict[str, dict[str, np.ndarray]] = {}
    for spec in config.metrics:
        actual[spec.name] = panel.exact_per_system(spec, labels, qrels, protected)
        targets[spec.name] = panel.target_arrays(
            spec, labels, qrels, protected, groups
        )

    design = build_design(panel, labels)
    uniform_pool = sorted(design.pool)
    needs_weighted = any(
        kind in (EstimatorKind.HORVITZ_THOMPSON, EstimatorKind.INDUCED)
        for kind in config.estimators
    )
    needs_uniform = any(
        kind in (EstimatorKind.UNIFORM_MEAN, EstimatorKind.UNIFORM_MEAN_NORMALIZED)
        for kind in config.estimators
    )

    report = ExperimentReport(
        system_ids=list(panel.system_ids),
        metric_names=[spec.name for spec in config.metrics],
        estimator_names=[kind.value for kind in config.estimators],
        rates=list(config.rates),
        repetitions=config.repetitions,
        actual=actual,
        estimated={},
    )

    for rate_index, rate in enumerate(config.rates):
        m = BudgetSpec(rate=rate).resolve(len(design.pool))
        design_m = stratify(design, m)
        for rep in range(config.repetitions):
            samples: dict[EstimatorKind, AnnotationSet] = {}
            if needs_weighted:
                weighted = stratified_sample(
                    design_m, m, labels,
                    derive(config.seed, _WEIGHTED_STREAM, rate_index, rep),
                )
                samples[EstimatorKind.HORVITZ_THOMPSON] = weighted
                samples[EstimatorKind.INDUCED] = weighted
            if needs_uniform:
                uniform = uniform_sample(
                    uniform_pool, m, labels,
                    derive(config.seed, _UNIFORM_STREAM, rate_index, rep),
                )
                samples[EstimatorKind.UNIFORM_MEAN] = uniform
                samples[EstimatorKind.UNIFORM_MEAN_NORMALIZED] = uniform

            for spec in config.metrics:
                for kind in config.estimators:
                    try:
                        estimated = panel.estimate_per_system(
                            spec, kind, samples[kind],
                            targets[spec.name], protected, groups,
                        )
                    except FairsampleError as exc:
                        report.cells.append(CellResult(
                            metric=spec.name, estimator=kind.value,
                            rate=rate, repetition=rep,
                            tau=None, rmse=None,
                            n_systems=len(panel.system_ids), error=str(exc),
                        ))
                        continue
                    report.estimated[
                        (spec.name, kind.value, rate, rep)
                    ] = estimated
                    try:
                        tau = kendall_tau(actual[spec.name], estimated)
                    except UndefinedCorrelationError:
                        tau = None
                    report.cells.append(CellResult(
                        metric=spec.name, estimator=kind.value,
                        rate=rate, repetition=rep,
                        tau=tau,
                        rmse=rmse(actual[spec.name], estimated),
                        n_systems=len(panel.system_ids),
                    ))
    return report
