"""probFuse training and scoring, plus the CombSum/CombMNZ baselines.

probFuse splits every input list into ``x`` segments and learns, per input
system, the probability that a document returned in segment ``k`` is
relevant. A fused document scores the sum over systems of that probability
divided by the segment number. The two training variants differ only in
how unjudged documents are handled: ``ALL`` counts them as nonrelevant,
``JUDGED`` leaves them out of the denominator.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import IO, TextIO

from .errors import ConfigError, ParseError, ProfileMismatchError
from .trec_io import Qrels, RankedList, RunSet

__all__ = [
    "Variant",
    "ProbabilityProfile",
    "FusedList",
    "segment_of",
    "segment_sizes",
    "train_profile",
    "score_probfuse",
    "normalize_scores",
    "combsum",
    "combmnz",
    "dump_profiles",
    "load_profiles",
]


class Variant(str, enum.Enum):
    ALL = "all"
    JUDGED = "judged"

    @classmethod
    def parse(cls, value: str | Variant) -> Variant:
        if isinstance(value, Variant):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown variant {value!r} (expected all or judged)", "variant") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ProbabilityProfile:
    """Trained segment probabilities for one input system.

    ``probs[k - 1]`` is the estimated probability that a document this system
    returns in segment ``k`` is relevant.
    """

    model_tag: str
    x: int
    probs: tuple[float, ...]
    variant: Variant = Variant.ALL
    trained_on: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.probs) != self.x:
            raise ValueError(f"profile {self.model_tag}: {len(self.probs)} probabilities for x={self.x}")
        if any(not 0.0 <= p <= 1.0 for p in self.probs):
            raise ValueError(f"profile {self.model_tag}: probabilities outside [0, 1]")


@dataclass(frozen=True)
class FusedList:
    """Fused ranking for one topic, best first, ties broken by doc_id."""

    topic_id: str
    entries: tuple[tuple[str, float], ...]

    @classmethod
    def from_scores(cls, topic_id: str, scores: Mapping[str, float]) -> FusedList:
        ordered = sorted(scores.items(), key=lambda e: (-e[1], e[0]))
        return cls(topic_id, tuple(ordered))

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return iter(self.entries)


def _check_x(x: int) -> None:
    if isinstance(x, bool) or not isinstance(x, int) or x < 1:
        raise ConfigError(f"number of segments must be an integer >= 1, got {x!r}", "x")


def segment_of(position: int, list_length: int, x: int) -> int:
    """1-based segment holding *position* in a list of *list_length* documents.

    When the list is at least ``x`` long, segment ``k`` ends at position
    ``ceil(k * L / x)``, so the leading segments take the remainder and sizes
    differ by at most one. Shorter lists spread their documents over the
    segments with ``k = ceil(p * x / L)``, which always puts the last document
    in segment ``x`` and leaves some segments empty.
    """
    _check_x(x)
    if not 1 <= position <= list_length:
        raise ValueError(f"position {position} outside 1..{list_length}")
    if list_length >= x:
        return (position - 1) * x // list_length + 1
    return -(-position * x // list_length)


def segment_sizes(list_length: int, x: int) -> list[int]:
    """Number of documents in each of the ``x`` segments."""
    sizes = [0] * x
    for pos in range(1, list_length + 1):
        sizes[segment_of(pos, list_length, x) - 1] += 1
    return sizes


def train_profile(
    run: RunSet,
    qrels: Qrels,
    topics: Sequence[str],
    x: int,
    variant: Variant | str = Variant.ALL,
) -> ProbabilityProfile:
    """Estimate per-segment relevance probabilities for one system.

    For every training topic the fraction of relevant documents in each
    segment is computed and the fractions are averaged over all training
    topics. With ``ALL`` the fraction's denominator is the number of
    documents in the segment (unjudged count as nonrelevant); with
    ``JUDGED`` it is the number of judged documents in the segment.

    A segment with an empty denominator for some topic adds nothing for that
    topic, but the topic still counts in the average. Topics the run never
    answered therefore pull every probability down.
    """
    _check_x(x)
    variant = Variant.parse(variant)
    topics = list(topics)
    if not topics:
        raise ConfigError("training topic list is empty", "topics")
    if len(set(topics)) != len(topics):
        raise ConfigError("training topic list contains duplicates", "topics")

    sums = [0.0] * x
    for topic in topics:
        ranked = run.get(topic)
        judged = qrels.for_topic(topic)
        size = [0] * x
        rel = [0] * x
        nonrel = [0] * x
        for pos, doc in enumerate(ranked.doc_ids, start=1):
            k = segment_of(pos, len(ranked), x) - 1
            size[k] += 1
            value = judged.get(doc)
            if value is None:
                continue
            if value >= 1:
                rel[k] += 1
            else:
                nonrel[k] += 1
        for k in range(x):
            denom = size[k] if variant is Variant.ALL else rel[k] + nonrel[k]
            if denom:
                sums[k] += rel[k] / denom

    n = len(topics)
    return ProbabilityProfile(
        model_tag=run.tag or "",
        x=x,
        probs=tuple(s / n for s in sums),
        variant=variant,
        trained_on=tuple(topics),
    )


def score_probfuse(
    results: Mapping[str, RankedList],
    profiles: Mapping[str, ProbabilityProfile],
    topic_id: str | None = None,
) -> FusedList:
    """Fuse one topic's result lists with trained profiles.

    Args:
        results: model tag -> that model's list for the topic.
        profiles: model tag -> trained profile; all used profiles must share x.
        topic_id: label for the output; taken from the lists when omitted.

    A document scores ``sum(P(k|m) / k)`` over the models that returned it,
    where ``k`` is its segment in model ``m``'s list.
    """
    topic_id = _topic_of(results, topic_id)
    if not results:
        return FusedList(topic_id, ())
    missing = [tag for tag in results if tag not in profiles]
    if missing:
        raise ProfileMismatchError(f"no profile for model(s): {', '.join(missing)}")
    xs = {profiles[tag].x for tag in results}
    if len(xs) != 1:
        raise ProfileMismatchError(f"profiles disagree on the number of segments: {sorted(xs)}")

    scores: dict[str, float] = {}
    for tag, ranked in results.items():
        profile = profiles[tag]
        length = len(ranked)
        for pos, doc in enumerate(ranked.doc_ids, start=1):
            k = segment_of(pos, length, profile.x)
            scores[doc] = scores.get(doc, 0.0) + profile.probs[k - 1] / k
    return FusedList.from_scores(topic_id, scores)


def normalize_scores(ranked: RankedList) -> dict[str, float]:
    """Min-max normalise a list's scores to [0, 1] using its own extremes.

    A list whose scores are all equal maps every document to 1.0, so that
    each returned document still counts as "returned" for CombMNZ.
    """
    if not len(ranked):
        raise ValueError("cannot normalise an empty list")
    lo = min(ranked.scores)
    hi = max(ranked.scores)
    if hi == lo:
        return {doc: 1.0 for doc in ranked.doc_ids}
    span = hi - lo
    return {doc: (s - lo) / span for doc, s in zip(ranked.doc_ids, ranked.scores)}


def _topic_of(results: Mapping[str, RankedList], topic_id: str | None) -> str:
    if topic_id is not None:
        return topic_id
    for ranked in results.values():
        return ranked.topic_id
    return ""


def _normalized_totals(results: Mapping[str, RankedList]) -> tuple[dict[str, float], dict[str, int]]:
    sums: dict[str, float] = {}
    positive: dict[str, int] = {}
    for ranked in results.values():
        if not len(ranked):
            continue
        for doc, value in normalize_scores(ranked).items():
            sums[doc] = sums.get(doc, 0.0) + value
            positive[doc] = positive.get(doc, 0) + (value > 0.0)
    return sums, positive


def combsum(results: Mapping[str, RankedList], topic_id: str | None = None) -> FusedList:
    """Sum of normalised scores; systems that missed a document add 0."""
    sums, _ = _normalized_totals(results)
    return FusedList.from_scores(_topic_of(results, topic_id), sums)


def combmnz(results: Mapping[str, RankedList], topic_id: str | None = None) -> FusedList:
    """CombSum multiplied by the number of systems giving a strictly positive
    normalised score (a list's bottom document normalises to 0 and does not
    count)."""
    sums, positive = _normalized_totals(results)
    fused = {doc: total * positive[doc] for doc, total in sums.items()}
    return FusedList.from_scores(_topic_of(results, topic_id), fused)


def dump_profiles(profiles: Iterable[ProbabilityProfile], sink: TextIO | IO[str]) -> None:
    """Write ``tag variant x p1 ... px`` lines, probabilities to 10 significant digits."""
    for profile in profiles:
        if not profile.model_tag or any(c.isspace() for c in profile.model_tag):
            raise ValueError(f"model tag {profile.model_tag!r} cannot be serialised")
        probs = " ".join(f"{p:.10g}" for p in profile.probs)
        sink.write(f"{profile.model_tag} {profile.variant.value} {profile.x} {probs}\n")


def load_profiles(source: Iterable[str], name: str | None = None) -> dict[str, ProbabilityProfile]:
    """Parse a profile file into a tag-keyed mapping (file order preserved)."""
    profiles: dict[str, ProbabilityProfile] = {}
    for lineno, line in enumerate(source, start=1):
        cols = line.split()
        if not cols:
            continue
        if len(cols) < 4:
            raise ParseError("profile line needs tag, variant, x and probabilities", lineno, name)
        tag, variant_s, x_s, *prob_s = cols
        try:
            variant = Variant(variant_s.lower())
            x = int(x_s)
            probs = tuple(float(p) for p in prob_s)
        except ValueError as exc:
            raise ParseError(str(exc), lineno, name) from None
        if x < 1 or len(probs) != x:
            raise ParseError(f"expected {x_s} probabilities, got {len(probs)}", lineno, name)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ParseError("probability outside [0, 1]", lineno, name)
        if tag in profiles:
            raise ParseError(f"duplicate profile for {tag}", lineno, name)
        profiles[tag] = ProbabilityProfile(tag, x, probs, variant)
    return profiles
