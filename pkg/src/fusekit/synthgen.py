"""Synthetic run sets and qrels for exercising the fusion pipeline.

Each topic gets a random set of relevant documents from a shared
collection. A system of quality ``q`` fills its list rank by rank: with
probability ``q`` the next document is an unused relevant one, otherwise an
unused nonrelevant one. Scores fall strictly with rank. Qrels judge every
relevant document plus the pooled (returned) documents, each pooled
judgment withheld independently with probability ``1 - judgment_coverage``.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from . import _kv
from ._files import atomic_output
from ._rng import PinnedRandom
from .errors import ConfigError
from .trec_io import Qrels, RankedList, RunSet, write_qrels, write_run

__all__ = ["SynthSpec", "generate", "load_spec", "spec_from_mapping", "write_collection"]

# scores are integers in these units, so six-decimal rendering is lossless
_SCORE_UNIT = 10_000
_MAX_GAP = 1_000


@dataclass(frozen=True)
class SynthSpec:
    num_topics: int = 50
    collection_size: int = 5000
    num_relevant_per_topic: int = 100
    num_systems: int = 6
    quality: tuple[float, ...] = (0.5,)
    list_depth: int = 1000
    judgment_coverage: float = 1.0
    rng_seed: int = 0
    system_prefix: str = "sys"

    def qualities(self) -> tuple[float, ...]:
        if len(self.quality) == 1:
            return self.quality * self.num_systems
        return self.quality

    def validate(self) -> None:
        checks = [
            (self.num_topics >= 1, "num_topics", "must be >= 1"),
            (self.num_systems >= 1, "num_systems", "must be >= 1"),
            (self.collection_size >= 1, "collection_size", "must be >= 1"),
            (
                0 <= self.num_relevant_per_topic <= self.collection_size,
                "num_relevant_per_topic",
                "must lie in 0..collection_size",
            ),
            (1 <= self.list_depth <= self.collection_size, "list_depth", "must lie in 1..collection_size"),
            (0.0 < self.judgment_coverage <= 1.0, "judgment_coverage", "must lie in (0, 1]"),
            (self.rng_seed >= 0, "rng_seed", "must be non-negative"),
            (len(self.quality) in (1, self.num_systems), "quality", "needs one value or one per system"),
            (all(0.0 <= q <= 1.0 for q in self.quality), "quality", "values must lie in [0, 1]"),
        ]
        for ok, key, message in checks:
            if not ok:
                raise ConfigError(f"infeasible synth spec: {key} {message}", key)


def spec_from_mapping(values: dict[str, str]) -> SynthSpec:
    known = {f for f in SynthSpec.__dataclass_fields__}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown synth spec key {unknown[0]!r}", unknown[0])
    defaults = SynthSpec()
    quality = _kv.as_list(values, "quality")
    try:
        qualities = tuple(float(q) for q in quality) if quality else defaults.quality
    except ValueError:
        raise ConfigError(f"quality: expected numbers, got {values['quality']!r}", "quality") from None
    spec = SynthSpec(
        num_topics=_kv.as_int(values, "num_topics", defaults.num_topics),
        collection_size=_kv.as_int(values, "collection_size", defaults.collection_size),
        num_relevant_per_topic=_kv.as_int(values, "num_relevant_per_topic", defaults.num_relevant_per_topic),
        num_systems=_kv.as_int(values, "num_systems", defaults.num_systems),
        quality=qualities,
        list_depth=_kv.as_int(values, "list_depth", defaults.list_depth),
        judgment_coverage=_kv.as_float(values, "judgment_coverage", defaults.judgment_coverage),
        rng_seed=_kv.as_int(values, "rng_seed", defaults.rng_seed),
        system_prefix=values.get("system_prefix", defaults.system_prefix),
    )
    spec.validate()
    return spec


def load_spec(path: str | Path) -> SynthSpec:
    return spec_from_mapping(_kv.read_kv(path))


def _system_list(
    rng: PinnedRandom,
    topic: str,
    relevant: Sequence[int],
    nonrelevant: Sequence[int],
    quality: float,
    depth: int,
    doc_name,
) -> RankedList:
    rel_order = [relevant[i] for i in rng.permutation(len(relevant))]
    take_nonrel = min(depth, len(nonrelevant))
    nonrel_order = [nonrelevant[i] for i in rng.sample(len(nonrelevant), take_nonrel)]
    picked: list[int] = []
    ri = ni = 0
    for _ in range(depth):
        rel_left = ri < len(rel_order)
        nonrel_left = ni < len(nonrel_order)
        if rel_left and (not nonrel_left or rng.random() < quality):
            picked.append(rel_order[ri])
            ri += 1
        else:
            picked.append(nonrel_order[ni])
            ni += 1
    gaps = [1 + rng.below(_MAX_GAP) for _ in picked]
    units = rng.below(10 * _SCORE_UNIT)
    scores = []
    for gap in reversed(gaps):
        scores.append(units / _SCORE_UNIT)
        units += gap
    scores.reverse()
    return RankedList(topic, tuple(doc_name(d) for d in picked), tuple(scores))


def generate(spec: SynthSpec) -> tuple[list[RunSet], Qrels]:
    """Build ``spec.num_systems`` runs and their qrels; deterministic in the seed."""
    spec.validate()
    width = len(str(spec.collection_size - 1))

    def doc_name(i: int) -> str:
        return f"D{i:0{width}d}"

    qualities = spec.qualities()
    lists: list[dict[str, RankedList]] = [{} for _ in range(spec.num_systems)]
    judgments: dict[tuple[str, str], int] = {}
    for t in range(spec.num_topics):
        topic = str(t + 1)
        rng = PinnedRandom(spec.rng_seed, t)
        relevant = sorted(rng.sample(spec.collection_size, spec.num_relevant_per_topic))
        rel_set = set(relevant)
        nonrelevant = [d for d in range(spec.collection_size) if d not in rel_set]
        pooled: set[str] = set()
        for s in range(spec.num_systems):
            ranked = _system_list(rng, topic, relevant, nonrelevant, qualities[s], spec.list_depth, doc_name)
            lists[s][topic] = ranked
            pooled.update(ranked.doc_ids)
        rel_names = {doc_name(d) for d in relevant}
        for doc in sorted(pooled):
            if spec.judgment_coverage >= 1.0 or rng.random() < spec.judgment_coverage:
                judgments[(topic, doc)] = int(doc in rel_names)
        for doc in sorted(rel_names - pooled):
            judgments[(topic, doc)] = 1
    runs = [RunSet(f"{spec.system_prefix}{s + 1:02d}", lists[s]) for s in range(spec.num_systems)]
    return runs, Qrels(judgments)


def write_collection(runs: Iterable[RunSet], qrels: Qrels, out_dir: str | Path) -> list[Path]:
    """Write ``<tag>.run`` files and ``qrels.txt`` into *out_dir*."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for run in runs:
        path = out / f"{run.tag}.run"
        with atomic_output(path) as fh:
            write_run({t: list(r) for t, r in run.lists.items()}, run.tag or "run", fh)
        written.append(path)
    path = out / "qrels.txt"
    with atomic_output(path) as fh:
        write_qrels(qrels, fh)
    written.append(path)
    return written
