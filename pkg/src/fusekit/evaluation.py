"""MAP and bpref, computed the way trec_eval computes them.

Judgments >= 1 are relevant, 0 is judged nonrelevant and anything missing
from the qrels is unjudged. Average precision treats unjudged documents as
nonrelevant; bpref ignores them. Topics without a single relevant document
are skipped, as trec_eval does.
"""

from __future__ import annotations

import csv
import statistics
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import IO, TextIO

import numpy as np

from .errors import ConfigError, EmptyEvaluationError
from .trec_io import Qrels, topic_sort_key

__all__ = [
    "TopicEval",
    "EvalSummary",
    "average_precision",
    "bpref",
    "evaluate",
    "write_eval_csv",
    "DEFAULT_DEPTH",
]

DEFAULT_DEPTH = 1000

REL = 1
NONREL = 0
UNJUDGED = -1


@dataclass(frozen=True)
class TopicEval:
    topic_id: str
    average_precision: float
    bpref: float
    num_rel: int
    num_judged_nonrel: int
    num_rel_retrieved: int


@dataclass(frozen=True)
class EvalSummary:
    per_topic: tuple[TopicEval, ...]
    map_score: float
    bpref_score: float

    @classmethod
    def from_topics(cls, per_topic: Iterable[TopicEval]) -> EvalSummary:
        per_topic = tuple(per_topic)
        if not per_topic:
            raise EmptyEvaluationError("no evaluable topics: none has a relevant document in the qrels")
        return cls(
            per_topic,
            statistics.fmean(t.average_precision for t in per_topic),
            statistics.fmean(t.bpref for t in per_topic),
        )


def _check_depth(depth: int) -> None:
    if depth < 1:
        raise ConfigError(f"evaluation depth must be >= 1, got {depth}", "depth")


def judgement_codes(ranked: Iterable[str], judged: Mapping[str, int], depth: int) -> np.ndarray:
    """Relevance codes (1 / 0 / -1) for the first *depth* distinct documents."""
    seen: set[str] = set()
    codes: list[int] = []
    for doc in ranked:
        if doc in seen:
            continue
        seen.add(doc)
        value = judged.get(doc)
        codes.append(UNJUDGED if value is None else (REL if value >= 1 else NONREL))
        if len(codes) == depth:
            break
    return np.asarray(codes, dtype=np.int8)


def ap_from_codes(codes: np.ndarray, num_rel: int) -> float:
    rel = codes == REL
    if num_rel <= 0 or not rel.any():
        return 0.0
    hits = np.cumsum(rel)
    positions = np.flatnonzero(rel) + 1
    return float(np.sum(hits[rel] / positions) / num_rel)


def bpref_from_codes(codes: np.ndarray, num_rel: int, num_nonrel: int) -> float:
    rel = codes == REL
    if num_rel <= 0 or not rel.any():
        return 0.0
    if num_nonrel == 0:
        return float(np.count_nonzero(rel) / num_rel)
    cap = min(num_rel, num_nonrel)
    nonrel_above = np.cumsum(codes == NONREL)[rel]
    penalties = np.minimum(nonrel_above, cap) / cap
    return float(np.sum(1.0 - penalties) / num_rel)


def topic_eval_from_codes(topic_id: str, codes: np.ndarray, num_rel: int, num_nonrel: int) -> TopicEval:
    return TopicEval(
        topic_id=topic_id,
        average_precision=ap_from_codes(codes, num_rel),
        bpref=bpref_from_codes(codes, num_rel, num_nonrel),
        num_rel=num_rel,
        num_judged_nonrel=num_nonrel,
        num_rel_retrieved=int(np.count_nonzero(codes == REL)),
    )


def average_precision(
    ranked: Sequence[str], qrels: Qrels, topic: str, depth: int = DEFAULT_DEPTH
) -> float | None:
    """Average precision of *ranked* over its first *depth* documents.

    Returns ``None`` when the topic has no relevant document (the topic is
    skipped rather than scored).
    """
    _check_depth(depth)
    num_rel = qrels.num_relevant(topic)
    if num_rel == 0:
        return None
    return ap_from_codes(judgement_codes(ranked, qrels.for_topic(topic), depth), num_rel)


def bpref(ranked: Sequence[str], qrels: Qrels, topic: str, depth: int = DEFAULT_DEPTH) -> float | None:
    """bpref with trec_eval's ``min(R, N)`` denominator; ``None`` if R is 0."""
    _check_depth(depth)
    num_rel = qrels.num_relevant(topic)
    if num_rel == 0:
        return None
    codes = judgement_codes(ranked, qrels.for_topic(topic), depth)
    return bpref_from_codes(codes, num_rel, qrels.num_nonrelevant(topic))


def _doc_ids(value: object) -> list[str]:
    if hasattr(value, "doc_ids"):
        return list(value.doc_ids)  # type: ignore[attr-defined]
    return [d if isinstance(d, str) else d[0] for d in value]  # type: ignore[union-attr]


def evaluate(fused: Mapping[str, object], qrels: Qrels, depth: int = DEFAULT_DEPTH) -> EvalSummary:
    """Score every topic of *fused* and average over the evaluable ones.

    *fused* maps topic ids to a FusedList, a RankedList, or a plain sequence
    of doc ids (or (doc_id, score) pairs) in rank order.

    Raises:
        EmptyEvaluationError: no topic has a relevant document.
    """
    _check_depth(depth)
    per_topic = []
    for topic in sorted(fused, key=topic_sort_key):
        num_rel = qrels.num_relevant(topic)
        if num_rel == 0:
            continue
        codes = judgement_codes(_doc_ids(fused[topic]), qrels.for_topic(topic), depth)
        per_topic.append(topic_eval_from_codes(topic, codes, num_rel, qrels.num_nonrelevant(topic)))
    return EvalSummary.from_topics(per_topic)


def write_eval_csv(summary: EvalSummary, sink: TextIO | IO[str]) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["topic", "ap", "bpref", "num_rel", "num_rel_ret"])
    for t in summary.per_topic:
        writer.writerow([t.topic_id, f"{t.average_precision:.6f}", f"{t.bpref:.6f}", t.num_rel, t.num_rel_retrieved])
    writer.writerow(["all", f"{summary.map_score:.6f}", f"{summary.bpref_score:.6f}", "", ""])
