"""Reading and writing TREC run files ("topfiles") and qrels.

Run lines look like ``<topic> Q0 <docid> <rank> <score> <tag>`` and qrels
lines like ``<topic> <iteration> <docid> <judgment>``; any run of spaces or
tabs separates columns.
"""

from __future__ import annotations

import gzip
import math
import sys
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, TextIO

from .errors import DataError, DuplicateDocumentError, InconsistentTagError, ParseError

__all__ = [
    "RunEntry",
    "RankedList",
    "RunSet",
    "Qrels",
    "parse_run",
    "parse_qrels",
    "write_run",
    "write_qrels",
    "load_run",
    "load_qrels",
    "read_lines",
    "topic_sort_key",
    "run_topics",
    "format_score",
]


@dataclass(frozen=True)
class RunEntry:
    topic_id: str
    doc_id: str
    rank: int
    score: float
    run_tag: str


@dataclass(frozen=True)
class RankedList:
    """One system's result list for one topic, best document first."""

    topic_id: str
    doc_ids: tuple[str, ...]
    scores: tuple[float, ...]
    ranks: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.doc_ids) != len(self.scores):
            raise ValueError("doc_ids and scores differ in length")
        if not self.ranks:
            object.__setattr__(self, "ranks", tuple(range(1, len(self.doc_ids) + 1)))
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError(f"duplicate doc_id in ranked list for topic {self.topic_id}")

    @classmethod
    def from_pairs(cls, topic_id: str, pairs: Iterable[tuple[str, float]]) -> RankedList:
        """Build a list from (doc_id, score) pairs already in rank order."""
        pairs = list(pairs)
        return cls(topic_id, tuple(d for d, _ in pairs), tuple(float(s) for _, s in pairs))

    def __len__(self) -> int:
        return len(self.doc_ids)

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return iter(zip(self.doc_ids, self.scores))

    def truncated(self, depth: int | None) -> RankedList:
        if depth is None or depth >= len(self):
            return self
        return RankedList(
            self.topic_id, self.doc_ids[:depth], self.scores[:depth], self.ranks[:depth]
        )


@dataclass(frozen=True)
class RunSet:
    """A parsed topfile: one system's ranked lists keyed by topic."""

    tag: str | None
    lists: Mapping[str, RankedList] = field(default_factory=dict)

    def topics(self) -> list[str]:
        return sorted(self.lists, key=topic_sort_key)

    def get(self, topic_id: str) -> RankedList:
        """The list for *topic_id*; an empty list when the run skipped the topic."""
        found = self.lists.get(topic_id)
        if found is None:
            return RankedList(topic_id, (), ())
        return found


class Qrels:
    """Relevance judgments keyed by (topic, doc).

    ``judgment`` returns ``None`` for unjudged pairs, which is distinct from a
    judged-nonrelevant ``0``. Any judgment >= 1 counts as relevant.
    """

    def __init__(self, judgments: Mapping[tuple[str, str], int] | None = None) -> None:
        self._by_topic: dict[str, dict[str, int]] = {}
        for (topic, doc), value in (judgments or {}).items():
            if value < 0:
                raise ValueError(f"negative judgment for ({topic}, {doc})")
            self._by_topic.setdefault(topic, {})[doc] = int(value)

    def judgment(self, topic_id: str, doc_id: str) -> int | None:
        return self._by_topic.get(topic_id, {}).get(doc_id)

    def is_relevant(self, topic_id: str, doc_id: str) -> bool:
        value = self.judgment(topic_id, doc_id)
        return value is not None and value >= 1

    def for_topic(self, topic_id: str) -> Mapping[str, int]:
        return self._by_topic.get(topic_id, {})

    def topics(self) -> list[str]:
        return sorted(self._by_topic, key=topic_sort_key)

    def num_relevant(self, topic_id: str) -> int:
        return sum(1 for v in self.for_topic(topic_id).values() if v >= 1)

    def num_nonrelevant(self, topic_id: str) -> int:
        return sum(1 for v in self.for_topic(topic_id).values() if v == 0)

    def items(self) -> Iterator[tuple[tuple[str, str], int]]:
        for topic in self.topics():
            for doc, value in self._by_topic[topic].items():
                yield (topic, doc), value

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_topic.values())

    def __contains__(self, key: tuple[str, str]) -> bool:
        return self.judgment(*key) is not None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Qrels):
            return NotImplemented
        return self._by_topic == other._by_topic

    def __repr__(self) -> str:
        return f"Qrels({len(self._by_topic)} topics, {len(self)} judgments)"


def topic_sort_key(topic_id: str) -> tuple[int, int, str]:
    """Numeric topics in numeric order, then everything else lexically."""
    if topic_id.isdigit():
        return (0, int(topic_id), topic_id)
    return (1, 0, topic_id)


def _records(source: Iterable[str]) -> Iterator[tuple[int, list[str]]]:
    for lineno, line in enumerate(source, start=1):
        cols = line.split()
        if cols:
            yield lineno, cols


def parse_run(source: Iterable[str], name: str | None = None) -> RunSet:
    """Parse a TREC run stream.

    The rank column is not trusted for ordering: each topic's list is
    re-sorted by score descending, then rank ascending, then doc_id.

    Raises:
        ParseError: wrong column count or non-numeric rank/score.
        DuplicateDocumentError: a (topic, docid) pair occurs twice.
        InconsistentTagError: records carry different run tags.
    """
    tag: str | None = None
    grouped: dict[str, list[tuple[float, int, str]]] = {}
    seen: set[tuple[str, str]] = set()
    for lineno, cols in _records(source):
        if len(cols) != 6:
            raise ParseError(f"expected 6 columns, got {len(cols)}", lineno, name)
        topic, _q0, doc, rank_s, score_s, run_tag = cols
        try:
            rank = int(rank_s)
        except ValueError:
            raise ParseError(f"non-integer rank {rank_s!r}", lineno, name) from None
        try:
            score = float(score_s)
        except ValueError:
            raise ParseError(f"non-numeric score {score_s!r}", lineno, name) from None
        if not math.isfinite(score):
            raise ParseError(f"non-finite score {score_s!r}", lineno, name)
        if tag is None:
            tag = run_tag
        elif run_tag != tag:
            raise InconsistentTagError(f"run tag {run_tag!r} differs from {tag!r}", lineno, name)
        if (topic, doc) in seen:
            raise DuplicateDocumentError(f"duplicate document {doc} for topic {topic}", lineno, name)
        seen.add((topic, doc))
        grouped.setdefault(topic, []).append((score, rank, doc))

    lists = {}
    for topic in sorted(grouped, key=topic_sort_key):
        rows = sorted(grouped[topic], key=lambda r: (-r[0], r[1], r[2]))
        lists[topic] = RankedList(
            topic,
            tuple(r[2] for r in rows),
            tuple(r[0] for r in rows),
            tuple(r[1] for r in rows),
        )
    return RunSet(tag, lists)


def parse_qrels(source: Iterable[str], name: str | None = None) -> Qrels:
    """Parse a TREC qrels stream (``topic iter docid judgment``)."""
    judgments: dict[tuple[str, str], int] = {}
    for lineno, cols in _records(source):
        if len(cols) != 4:
            raise ParseError(f"expected 4 columns, got {len(cols)}", lineno, name)
        topic, _iteration, doc, value_s = cols
        try:
            value = int(value_s)
        except ValueError:
            raise ParseError(f"non-integer judgment {value_s!r}", lineno, name) from None
        if value < 0:
            raise ParseError(f"negative judgment {value}", lineno, name)
        if (topic, doc) in judgments:
            raise ParseError(f"duplicate judgment for ({topic}, {doc})", lineno, name)
        judgments[(topic, doc)] = value
    return Qrels(judgments)


def format_score(score: float) -> str:
    return f"{score:.6f}"


def write_run(
    fused: Mapping[str, Iterable[tuple[str, float]]],
    tag: str,
    sink: TextIO | IO[str],
    depth: int | None = None,
) -> None:
    """Emit ``topic Q0 doc rank score tag`` lines.

    Topics come out in numeric-aware order; within a topic documents are
    ordered by score descending then doc_id ascending, ranks renumbered 1..N
    and scores printed with six decimals. *fused* values may be FusedList
    objects or plain (doc_id, score) sequences.
    """
    for topic in sorted(fused, key=topic_sort_key):
        entries = sorted(_pairs(fused[topic]), key=lambda e: (-e[1], e[0]))
        if depth is not None:
            entries = entries[:depth]
        for rank, (doc, score) in enumerate(entries, start=1):
            sink.write(f"{topic} Q0 {doc} {rank} {format_score(score)} {tag}\n")


def _pairs(value: object) -> list[tuple[str, float]]:
    entries = getattr(value, "entries", value)
    return [(str(d), float(s)) for d, s in entries]  # type: ignore[union-attr]


def write_qrels(qrels: Qrels, sink: TextIO | IO[str]) -> None:
    for (topic, doc), value in qrels.items():
        sink.write(f"{topic} 0 {doc} {value}\n")


def read_lines(path: str | Path) -> list[str]:
    """Whole file as lines; ``.gz`` files are decompressed on the fly."""
    try:
        if str(path).endswith(".gz"):
            with gzip.open(path, "rt", encoding="utf-8") as fh:
                return fh.readlines()
        with open(path, encoding="utf-8") as fh:
            return fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (EOFError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_run(path: str | Path) -> RunSet:
    """Parse a run file from disk; ``-`` reads standard input."""
    if str(path) == "-":
        return parse_run(sys.stdin, "<stdin>")
    return parse_run(read_lines(path), str(path))


def load_qrels(path: str | Path) -> Qrels:
    if str(path) == "-":
        return parse_qrels(sys.stdin, "<stdin>")
    return parse_qrels(read_lines(path), str(path))


def run_topics(runs: Sequence[RunSet]) -> list[str]:
    """Union of topics across runs, numeric-aware sorted."""
    topics: set[str] = set()
    for run in runs:
        topics.update(run.lists)
    return sorted(topics, key=topic_sort_key)
