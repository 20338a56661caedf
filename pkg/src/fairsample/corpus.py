"""Test-collection data model and line-oriented file formats.

Three whitespace-delimited UTF-8 text formats are supported, all with
``#`` comment lines and blank lines ignored:

* run files:        ``query_id iteration doc_id rank score system_id``
* qrels:            ``query_id iteration doc_id grade``
* annotations:      ``doc_id group_label [inclusion_prob]``

Run files are normalized on ingestion: entries are re-sorted by descending
score (ties by ascending doc_id) and ranks are rewritten 1..R, so the rank
column of the input is advisory only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, NamedTuple

from .errors import DataError, MissingLabelError, ParseError

logger = logging.getLogger(__name__)

DocId = str
GroupLabel = str


class RankedDoc(NamedTuple):
    doc_id: DocId
    rank: int
    score: float


@dataclass(frozen=True)
class Ranking:
    """One system's ordered result list for one query.

    Invariants: ranks are exactly 1..R, scores are non-increasing with rank,
    and no document appears twice.
    """

    query_id: str
    system_id: str
    entries: tuple[RankedDoc, ...]

    def __post_init__(self):
        seen = set()
        prev_score = math.inf
        for i, entry in enumerate(self.entries):
            if entry.rank != i + 1:
                raise DataError(
                    f"ranking ({self.system_id}, {self.query_id}): rank at "
                    f"position {i + 1} is {entry.rank}, expected {i + 1}"
                )
            if entry.score > prev_score:
                raise DataError(
                    f"ranking ({self.system_id}, {self.query_id}): score "
                    f"increases at rank {entry.rank}"
                )
            if entry.doc_id in seen:
                raise DataError(
                    f"ranking ({self.system_id}, {self.query_id}): duplicate "
                    f"document {entry.doc_id!r}"
                )
            seen.add(entry.doc_id)
            prev_score = entry.score

    @classmethod
    def from_scored_docs(
        cls, query_id: str, system_id: str, scored: Iterable[tuple[DocId, float]]
    ) -> "Ranking":
        """Build a ranking from (doc_id, score) pairs.

        Sorts by descending score with ties broken by ascending doc_id and
        assigns ranks 1..R. This is the canonical constructor used by both
        the parser and the simulator.
        """
        ordered = sorted(scored, key=lambda pair: (-pair[1], pair[0]))
        entries = tuple(
            RankedDoc(doc, rank, score)
            for rank, (doc, score) in enumerate(ordered, start=1)
        )
        return cls(query_id=query_id, system_id=system_id, entries=entries)

    def __len__(self) -> int:
        return len(self.entries)

    def top(self, k: int) -> tuple[RankedDoc, ...]:
        return self.entries[:k]

    def doc_ids(self) -> tuple[DocId, ...]:
        return tuple(e.doc_id for e in self.entries)


@dataclass(frozen=True)
class Qrels:
    """Relevance judgments keyed by (query_id, doc_id)."""

    judgments: Mapping[tuple[str, DocId], int]

    def grade(self, query_id: str, doc_id: DocId, default: int = 0) -> int:
        return self.judgments.get((query_id, doc_id), default)

    def relevant_docs(self, query_id: str) -> set[DocId]:
        return {
            doc for (qid, doc), grade in self.judgments.items()
            if qid == query_id and grade > 0
        }

    def query_ids(self) -> list[str]:
        return sorted({qid for qid, _ in self.judgments})


@dataclass(frozen=True)
class AnnotationSet:
    """Group labels for documents, optionally with inclusion probabilities.

    Ground-truth sets have ``inclusion=None`` (every theta is implicitly 1).
    Sets produced by a sampler carry a theta in (0, 1] for every labeled
    document.
    """

    labels: Mapping[DocId, GroupLabel]
    inclusion: Mapping[DocId, float] | None = None

    def __post_init__(self):
        if len(set(self.labels.values())) > 2:
            raise DataError(
                f"more than two distinct group labels: "
                f"{sorted(set(self.labels.values()))}"
            )
        if self.inclusion is not None:
            if set(self.inclusion) != set(self.labels):
                raise DataError(
                    "inclusion probabilities must cover exactly the labeled documents"
                )
            for doc, theta in self.inclusion.items():
                if not (0.0 < theta <= 1.0):
                    raise DataError(
                        f"inclusion probability for {doc!r} is {theta}, "
                        f"must be in (0, 1]"
                    )

    @property
    def is_sampled(self) -> bool:
        return self.inclusion is not None

    def groups(self) -> tuple[GroupLabel, ...]:
        """The distinct labels present, in ascending order."""
        return tuple(sorted(set(self.labels.values())))

    def label(self, doc_id: DocId) -> GroupLabel:
        try:
            return self.labels[doc_id]
        except KeyError:
            raise MissingLabelError(doc_id) from None

    def theta(self, doc_id: DocId) -> float:
        """Inclusion probability of a labeled document (1.0 for ground truth)."""
        if self.inclusion is None:
            if doc_id not in self.labels:
                raise MissingLabelError(doc_id)
            return 1.0
        try:
            return self.inclusion[doc_id]
        except KeyError:
            raise MissingLabelError(doc_id) from None

    def __contains__(self, doc_id: DocId) -> bool:
        return doc_id in self.labels

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class RunSet:
    """Rankings from many systems over many queries, one per (system, query)."""

    rankings: Mapping[tuple[str, str], Ranking] = field(default_factory=dict)

    def __post_init__(self):
        for (system_id, query_id), ranking in self.rankings.items():
            if (ranking.system_id, ranking.query_id) != (system_id, query_id):
                raise DataError(
                    f"runset key ({system_id}, {query_id}) does not match "
                    f"ranking ({ranking.system_id}, {ranking.query_id})"
                )

    def system_ids(self) -> list[str]:
        return sorted({s for s, _ in self.rankings})

    def query_ids(self) -> list[str]:
        return sorted({q for _, q in self.rankings})

    def get(self, system_id: str, query_id: str) -> Ranking:
        return self.rankings[(system_id, query_id)]

    def __iter__(self) -> Iterator[Ranking]:
        return iter(self.rankings.values())

    def __len__(self) -> int:
        return len(self.rankings)


def _content_lines(stream: Iterable[str]) -> Iterator[tuple[int, list[str]]]:
    """Yield (line_no, fields) for every non-blank, non-comment line."""
    for line_no, raw in enumerate(stream, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield line_no, stripped.split()


def _parse_float(token: str, what: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric {what}: {token!r}", line_no) from None
    if math.isnan(value) or math.isinf(value):
        raise ParseError(f"{what} is not finite: {token!r}", line_no)
    return value


def parse_run_file(stream: Iterable[str] | IO[str]) -> RunSet:
    """Parse a 6-column run file into a RunSet.

    Entries of each (system, query) pair are re-sorted by descending score
    and ranks are rewritten 1..R; the input rank column is only validated
    for being numeric.
    """
    scored: dict[tuple[str, str], list[tuple[DocId, float]]] = {}
    seen_docs: dict[tuple[str, str], set[DocId]] = {}
    for line_no, fields in _content_lines(stream):
        if len(fields) != 6:
            raise ParseError(
                f"expected 6 fields `query iter doc rank score system`, "
                f"got {len(fields)}", line_no,
            )
        query_id, _iteration, doc_id, rank, score, system_id = fields
        try:
            int(rank)
        except ValueError:
            raise ParseError(f"non-numeric rank: {rank!r}", line_no) from None
        score_value = _parse_float(score, "score", line_no)
        key = (system_id, query_id)
        docs = seen_docs.setdefault(key, set())
        if doc_id in docs:
            raise DataError(
                f"line {line_no}: duplicate document {doc_id!r} for "
                f"system {system_id!r}, query {query_id!r}"
            )
        docs.add(doc_id)
        scored.setdefault(key, []).append((doc_id, score_value))

    rankings = {
        (system_id, query_id): Ranking.from_scored_docs(query_id, system_id, pairs)
        for (system_id, query_id), pairs in scored.items()
    }
    return RunSet(rankings=rankings)


def parse_qrels(stream: Iterable[str] | IO[str]) -> Qrels:
    """Parse 4-column qrels. Later duplicates overwrite earlier ones."""
    judgments: dict[tuple[str, DocId], int] = {}
    duplicates = 0
    for line_no, fields in _content_lines(stream):
        if len(fields) != 4:
            raise ParseError(
                f"expected 4 fields `query iter doc grade`, got {len(fields)}",
                line_no,
            )
        query_id, _iteration, doc_id, grade = fields
        try:
            grade_value = int(grade)
        except ValueError:
            raise ParseError(f"non-integer grade: {grade!r}", line_no) from None
        if grade_value < 0:
            raise DataError(f"line {line_no}: negative grade {grade_value}")
        if (query_id, doc_id) in judgments:
            duplicates += 1
        judgments[(query_id, doc_id)] = grade_value
    if duplicates:
        logger.warning("%d duplicate qrels entr%s overwritten",
                       duplicates, "y" if duplicates == 1 else "ies")
    return Qrels(judgments=judgments)


def parse_annotations(stream: Iterable[str] | IO[str]) -> AnnotationSet:
    """Parse group annotations, with or without the inclusion column.

    The third column must be present on all lines or on none; a mix is a
    data error, as is any theta outside (0, 1] or a third distinct label.
    """
    labels: dict[DocId, GroupLabel] = {}
    inclusion: dict[DocId, float] = {}
    arity: int | None = None
    for line_no, fields in _content_lines(stream):
        if len(fields) not in (2, 3):
            raise ParseError(
                f"expected `doc label [theta]`, got {len(fields)} fields", line_no
            )
        if arity is None:
            arity = len(fields)
        elif len(fields) != arity:
            raise DataError(
                f"line {line_no}: mixed presence of the inclusion column"
            )
        doc_id, label = fields[0], fields[1]
        if doc_id in labels:
            raise DataError(f"line {line_no}: duplicate annotation for {doc_id!r}")
        labels[doc_id] = label
        if len(fields) == 3:
            theta = _parse_float(fields[2], "inclusion probability", line_no)
            if not (0.0 < theta <= 1.0):
                raise DataError(
                    f"line {line_no}: inclusion probability {theta} outside (0, 1]"
                )
            inclusion[doc_id] = theta
    return AnnotationSet(labels=labels, inclusion=inclusion if arity == 3 else None)


def write_run_file(runset: RunSet, stream: IO[str]) -> None:
    """Write a RunSet in the 6-column format, sorted for reproducibility.

    Scores use ``repr`` so that re-parsing restores them exactly; parsing
    the output therefore yields a field-for-field identical RunSet.
    """
    for system_id, query_id in sorted(runset.rankings):
        for entry in runset.rankings[(system_id, query_id)].entries:
            stream.write(
                f"{query_id} Q0 {entry.doc_id} {entry.rank} "
                f"{entry.score!r} {system_id}\n"
            )


def write_qrels(qrels: Qrels, stream: IO[str]) -> None:
    for (query_id, doc_id), grade in sorted(qrels.judgments.items()):
        stream.write(f"{query_id} 0 {doc_id} {grade}\n")


def write_annotations(annotations: AnnotationSet, stream: IO[str]) -> None:
    """Write annotations; sampled sets get the 3-column form with theta."""
    for doc_id in sorted(annotations.labels):
        label = annotations.labels[doc_id]
        if annotations.inclusion is None:
            stream.write(f"{doc_id} {label}\n")
        else:
            stream.write(f"{doc_id} {label} {annotations.inclusion[doc_id]!r}\n")
