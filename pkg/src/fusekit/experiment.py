"""Train/fuse/evaluate protocol over random topic orderings.

For each seeded topic ordering and training size ``t`` the first ``t`` percent
of topics train one profile per input run; the remaining topics are fused
with probFuse (for every ``x`` and variant) and with CombMNZ, and both are
scored with MAP and bpref on those fusion topics only.

The grid is computed on a prepared, array-backed copy of the inputs. Its
arithmetic follows :mod:`fusekit.fusion_core` and :mod:`fusekit.evaluation`
operation for operation, so the results are bit-identical to calling
those functions topic by topic.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
import os
import statistics
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import IO, TextIO

import numpy as np

from . import _kv
from ._rng import PinnedRandom
from .errors import ConfigError, DataError
from .evaluation import DEFAULT_DEPTH, EvalSummary, TopicEval, topic_eval_from_codes
from .fusion_core import Variant, normalize_scores, segment_of
from .trec_io import Qrels, RunSet, load_qrels, load_run, run_topics, topic_sort_key

__all__ = [
    "DEFAULT_T_VALUES",
    "DEFAULT_X_VALUES",
    "ExperimentConfig",
    "ExperimentReport",
    "CellScore",
    "PreparedCollection",
    "load_config",
    "config_from_mapping",
    "split_topics",
    "make_orderings",
    "run_cell",
    "run_experiment",
    "average_over_groups",
    "REPORT_HEADER",
]

log = logging.getLogger(__name__)

DEFAULT_T_VALUES: tuple[float, ...] = (10, 20, 30, 40, 50)
DEFAULT_X_VALUES: tuple[int, ...] = (2, 4, 6, 8, 10, 15, 20, 25, 30, 40, 50, 100, 150, 200, 250, 300, 400, 500)
REPORT_HEADER = ["ordering", "t", "x", "method", "variant", "map", "bpref"]
PROBFUSE = "probfuse"
COMBMNZ = "combmnz"
NO_VARIANT = "-"


@dataclass(frozen=True)
class ExperimentConfig:
    input_runs: tuple[str, ...]
    qrels_path: str
    t_values: tuple[float, ...] = DEFAULT_T_VALUES
    x_values: tuple[int, ...] = DEFAULT_X_VALUES
    num_orderings: int = 5
    rng_seed: int = 0
    eval_depth: int = DEFAULT_DEPTH
    variants: tuple[Variant, ...] = (Variant.ALL, Variant.JUDGED)
    # truncate input lists before use; None keeps them whole
    input_depth: int | None = None

    def validate(self) -> None:
        if not self.input_runs:
            raise ConfigError("input_runs: at least one run file is required", "input_runs")
        if not self.qrels_path:
            raise ConfigError("qrels_path is required", "qrels_path")
        if not self.t_values or any(not 0 < t < 100 for t in self.t_values):
            raise ConfigError("t_values: every value must lie strictly between 0 and 100", "t_values")
        if len(set(self.t_values)) != len(self.t_values):
            raise ConfigError("t_values: duplicate value", "t_values")
        if not self.x_values or any(x < 1 for x in self.x_values):
            raise ConfigError("x_values: every value must be >= 1", "x_values")
        if len(set(self.x_values)) != len(self.x_values):
            raise ConfigError("x_values: duplicate value", "x_values")
        if self.num_orderings < 1:
            raise ConfigError("num_orderings must be >= 1", "num_orderings")
        if self.rng_seed < 0:
            raise ConfigError("rng_seed must be non-negative", "rng_seed")
        if self.eval_depth < 1:
            raise ConfigError("eval_depth must be >= 1", "eval_depth")
        if self.input_depth is not None and self.input_depth < 1:
            raise ConfigError("input_depth must be >= 1", "input_depth")
        if not self.variants or len(set(self.variants)) != len(self.variants):
            raise ConfigError("variants: give all, judged or both, once each", "variants")


_CONFIG_KEYS = {
    "input_runs",
    "qrels_path",
    "t_values",
    "x_values",
    "num_orderings",
    "rng_seed",
    "eval_depth",
    "variants",
    "input_depth",
}


def config_from_mapping(values: Mapping[str, str], base_dir: str | Path | None = None) -> ExperimentConfig:
    """Build a config from raw key=value strings; relative paths resolve against *base_dir*."""
    values = dict(values)
    unknown = sorted(set(values) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}", unknown[0])

    def path(p: str) -> str:
        if base_dir is None or p == "-" or os.path.isabs(p):
            return p
        return str(Path(base_dir) / p)

    runs = _kv.as_list(values, "input_runs")
    if not runs:
        raise ConfigError("missing required key 'input_runs'", "input_runs")
    if not values.get("qrels_path"):
        raise ConfigError("missing required key 'qrels_path'", "qrels_path")

    def numbers(key: str, cast, default):
        items = _kv.as_list(values, key)
        if items is None:
            return default
        try:
            return tuple(cast(v) for v in items)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {values[key]!r}", key) from None

    variants = _kv.as_list(values, "variants")
    config = ExperimentConfig(
        input_runs=tuple(path(p) for p in runs),
        qrels_path=path(values["qrels_path"]),
        t_values=numbers("t_values", _percent, DEFAULT_T_VALUES),
        x_values=numbers("x_values", int, DEFAULT_X_VALUES),
        num_orderings=_kv.as_int(values, "num_orderings", 5),
        rng_seed=_kv.as_int(values, "rng_seed", 0),
        eval_depth=_kv.as_int(values, "eval_depth", DEFAULT_DEPTH),
        variants=tuple(Variant.parse(v) for v in variants) if variants else (Variant.ALL, Variant.JUDGED),
        input_depth=_kv.as_int(values, "input_depth") if values.get("input_depth") else None,
    )
    config.validate()
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    return config_from_mapping(_kv.read_kv(path), Path(path).parent)


def _percent(text: str) -> float:
    value = float(text)
    return int(value) if value.is_integer() else value


def split_topics(
    all_topics: Sequence[str], t_percent: float, ordering: Sequence[int]
) -> tuple[list[str], list[str]]:
    """Permute the topics and cut off the first ``round(t% * n)`` (half-up) for training."""
    if not 0 < t_percent < 100:
        raise ConfigError(f"training size {t_percent}% must lie strictly between 0 and 100", "t_values")
    if sorted(ordering) != list(range(len(all_topics))):
        raise ValueError("ordering is not a permutation of the topic indices")
    n = len(all_topics)
    n_train = math.floor(Fraction(str(t_percent)) * n / 100 + Fraction(1, 2))
    permuted = [all_topics[i] for i in ordering]
    training, fusion = permuted[:n_train], permuted[n_train:]
    if not training or not fusion:
        raise ConfigError(
            f"t={t_percent}% of {n} topics leaves an empty training or fusion set", "t_values"
        )
    return training, fusion


def make_orderings(topics: Sequence[str], n: int, seed: int) -> list[tuple[int, ...]]:
    """*n* seeded permutations of ``range(len(topics))`` (see :mod:`fusekit._rng`)."""
    if n < 1:
        raise ConfigError("number of orderings must be >= 1", "num_orderings")
    rng = PinnedRandom(seed)
    return [tuple(rng.permutation(len(topics))) for _ in range(n)]


@functools.lru_cache(maxsize=4096)
def _segments(length: int, x: int) -> np.ndarray:
    segs = np.fromiter((segment_of(p, length, x) for p in range(1, length + 1)), dtype=np.int64, count=length)
    segs.setflags(write=False)
    return segs


@dataclass(frozen=True)
class _PreparedTopic:
    topic_id: str
    num_docs: int
    # per run: union indices in rank order, and their normalised scores
    positions: tuple[np.ndarray, ...]
    normalized: tuple[np.ndarray, ...]
    # 1 relevant, 0 judged nonrelevant, -1 unjudged, over the union
    codes: np.ndarray
    num_rel: int
    num_nonrel: int


class PreparedCollection:
    """Inputs of one experiment group flattened into per-topic arrays.

    The union of documents returned for a topic is indexed in doc_id order,
    so a stable sort on fused score alone reproduces the doc_id tie-break.
    """

    def __init__(
        self,
        runs: Sequence[RunSet],
        qrels: Qrels,
        topics: Iterable[str],
        input_depth: int | None = None,
    ) -> None:
        self.run_tags = [run.tag or f"run{i}" for i, run in enumerate(runs)]
        self.topics: dict[str, _PreparedTopic] = {}
        for topic in topics:
            lists = [run.get(topic).truncated(input_depth) for run in runs]
            union = sorted({doc for ranked in lists for doc in ranked.doc_ids})
            index = {doc: i for i, doc in enumerate(union)}
            positions = []
            normalized = []
            for ranked in lists:
                positions.append(np.fromiter((index[d] for d in ranked.doc_ids), dtype=np.int64, count=len(ranked)))
                norm = normalize_scores(ranked) if len(ranked) else {}
                normalized.append(np.fromiter(norm.values(), dtype=np.float64, count=len(norm)))
            judged = qrels.for_topic(topic)
            codes = np.fromiter(
                (-1 if (v := judged.get(doc)) is None else int(v >= 1) for doc in union),
                dtype=np.int8,
                count=len(union),
            )
            self.topics[topic] = _PreparedTopic(
                topic,
                len(union),
                tuple(positions),
                tuple(normalized),
                codes,
                qrels.num_relevant(topic),
                qrels.num_nonrelevant(topic),
            )
        self._combmnz_cache: dict[tuple[str, int], TopicEval] = {}

    def train(self, training: Sequence[str], x: int) -> dict[Variant, list[np.ndarray]]:
        """Profiles (one probability vector per run) for both variants at once."""
        out: dict[Variant, list[np.ndarray]] = {Variant.ALL: [], Variant.JUDGED: []}
        for r in range(len(self.run_tags)):
            acc_all = np.zeros(x)
            acc_judged = np.zeros(x)
            for topic in training:
                pt = self.topics[topic]
                pos = pt.positions[r]
                if not len(pos):
                    continue
                segs = _segments(len(pos), x)
                codes = pt.codes[pos]
                size = np.bincount(segs, minlength=x + 1)[1:]
                rel = np.bincount(segs[codes == 1], minlength=x + 1)[1:]
                judged = rel + np.bincount(segs[codes == 0], minlength=x + 1)[1:]
                acc_all += np.divide(rel, size, out=np.zeros(x), where=size > 0)
                acc_judged += np.divide(rel, judged, out=np.zeros(x), where=judged > 0)
            out[Variant.ALL].append(acc_all / len(training))
            out[Variant.JUDGED].append(acc_judged / len(training))
        return out

    def probfuse_scores(self, topic: str, probs: Sequence[np.ndarray]) -> np.ndarray:
        pt = self.topics[topic]
        scores = np.zeros(pt.num_docs)
        for pos, p in zip(pt.positions, probs):
            if not len(pos):
                continue
            segs = _segments(len(pos), len(p))
            scores[pos] += p[segs - 1] / segs
        return scores

    def combmnz_scores(self, topic: str) -> np.ndarray:
        pt = self.topics[topic]
        sums = np.zeros(pt.num_docs)
        positive = np.zeros(pt.num_docs, dtype=np.int64)
        for pos, norm in zip(pt.positions, pt.normalized):
            sums[pos] += norm
            positive[pos] += norm > 0.0
        return sums * positive

    def _topic_eval(self, topic: str, scores: np.ndarray, depth: int) -> TopicEval:
        pt = self.topics[topic]
        order = np.argsort(-scores, kind="stable")[:depth]
        return topic_eval_from_codes(topic, pt.codes[order], pt.num_rel, pt.num_nonrel)

    def _evaluable(self, fusion: Iterable[str]) -> list[str]:
        return sorted((t for t in fusion if self.topics[t].num_rel > 0), key=topic_sort_key)

    def evaluate_probfuse(self, fusion: Sequence[str], probs: Sequence[np.ndarray], depth: int) -> EvalSummary:
        return EvalSummary.from_topics(
            self._topic_eval(t, self.probfuse_scores(t, probs), depth) for t in self._evaluable(fusion)
        )

    def evaluate_combmnz(self, fusion: Sequence[str], depth: int) -> EvalSummary:
        evals = []
        for topic in self._evaluable(fusion):
            key = (topic, depth)
            if key not in self._combmnz_cache:
                self._combmnz_cache[key] = self._topic_eval(topic, self.combmnz_scores(topic), depth)
            evals.append(self._combmnz_cache[key])
        return EvalSummary.from_topics(evals)


def run_cell(
    runs: Sequence[RunSet],
    qrels: Qrels,
    training: Sequence[str],
    fusion: Sequence[str],
    x: int,
    variant: Variant | str,
    eval_depth: int = DEFAULT_DEPTH,
) -> tuple[EvalSummary, EvalSummary]:
    """Train on *training*, fuse and score *fusion*; returns (probFuse, CombMNZ) summaries."""
    variant = Variant.parse(variant)
    if x < 1:
        raise ConfigError(f"number of segments must be >= 1, got {x}", "x")
    if set(training) & set(fusion):
        raise ConfigError("training and fusion topics overlap", "topics")
    if not training:
        raise ConfigError("training topic list is empty", "topics")
    prepared = PreparedCollection(runs, qrels, list(dict.fromkeys([*training, *fusion])))
    profiles = prepared.train(training, x)[variant]
    return (
        prepared.evaluate_probfuse(fusion, profiles, eval_depth),
        prepared.evaluate_combmnz(fusion, eval_depth),
    )


@dataclass(frozen=True)
class CellScore:
    map_score: float
    bpref_score: float

    @classmethod
    def of(cls, summary: EvalSummary) -> CellScore:
        return cls(summary.map_score, summary.bpref_score)

    @classmethod
    def mean(cls, cells: Sequence[CellScore]) -> CellScore:
        return cls(
            statistics.fmean(c.map_score for c in cells),
            statistics.fmean(c.bpref_score for c in cells),
        )


def _num(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


@dataclass
class ExperimentReport:
    """Scores for every (ordering, t, x, method, variant) cell plus their means.

    CombMNZ does not depend on ``x`` and is stored once per (ordering, t);
    :meth:`cell` and the CSV replicate it across the x grid.
    """

    t_values: tuple[float, ...]
    x_values: tuple[int, ...]
    variants: tuple[Variant, ...]
    num_orderings: int
    probfuse: dict[tuple[int, float, int, Variant], CellScore] = field(default_factory=dict)
    combmnz: dict[tuple[int, float], CellScore] = field(default_factory=dict)

    def methods(self) -> list[tuple[str, str]]:
        return [(COMBMNZ, NO_VARIANT)] + [(PROBFUSE, v.value) for v in sorted(self.variants, key=lambda v: v.value)]

    def cell(self, ordering: int, t: float, x: int, method: str, variant: str | Variant = NO_VARIANT) -> CellScore:
        if method == COMBMNZ:
            if x not in self.x_values:
                raise KeyError(x)
            return self.combmnz[(ordering, t)]
        return self.probfuse[(ordering, t, x, Variant.parse(variant))]

    def mean_over_orderings(self, t: float, x: int, method: str, variant: str | Variant = NO_VARIANT) -> CellScore:
        return CellScore.mean([self.cell(o, t, x, method, variant) for o in range(1, self.num_orderings + 1)])

    def grand_mean(self, t: float, method: str, variant: str | Variant = NO_VARIANT) -> CellScore:
        """Mean over the x grid of the ordering means at training size *t*."""
        return CellScore.mean([self.mean_over_orderings(t, x, method, variant) for x in self.x_values])

    def rows(self) -> list[list[str]]:
        rows = []
        for o in range(1, self.num_orderings + 1):
            for t in self.t_values_sorted():
                for x in sorted(self.x_values):
                    for method, variant in self.methods():
                        c = self.cell(o, t, x, method, variant)
                        rows.append([str(o), _num(t), str(x), method, variant, repr(c.map_score), repr(c.bpref_score)])
        for t in self.t_values_sorted():
            for x in sorted(self.x_values):
                for method, variant in self.methods():
                    c = self.mean_over_orderings(t, x, method, variant)
                    rows.append(["aggregate", _num(t), str(x), method, variant, repr(c.map_score), repr(c.bpref_score)])
        for t in self.t_values_sorted():
            for method, variant in self.methods():
                c = self.grand_mean(t, method, variant)
                rows.append(["aggregate", _num(t), "all", method, variant, repr(c.map_score), repr(c.bpref_score)])
        return rows

    def t_values_sorted(self) -> list[float]:
        return sorted(self.t_values)

    def write_csv(self, sink: TextIO | IO[str]) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        writer.writerows(self.rows())


def _run_unit(
    prepared: PreparedCollection,
    ordering_index: int,
    t: float,
    training: list[str],
    fusion: list[str],
    config: ExperimentConfig,
) -> tuple[int, float, CellScore, dict[tuple[int, Variant], CellScore]]:
    combmnz = CellScore.of(prepared.evaluate_combmnz(fusion, config.eval_depth))
    probfuse = {}
    for x in config.x_values:
        profiles = prepared.train(training, x)
        for variant in config.variants:
            summary = prepared.evaluate_probfuse(fusion, profiles[variant], config.eval_depth)
            probfuse[(x, variant)] = CellScore.of(summary)
    return ordering_index, t, combmnz, probfuse


_WORKER_STATE: dict[str, object] = {}


def _init_worker(prepared: PreparedCollection, config: ExperimentConfig) -> None:
    _WORKER_STATE["prepared"] = prepared
    _WORKER_STATE["config"] = config


def _run_unit_in_worker(args: tuple[int, float, list[str], list[str]]):
    prepared = _WORKER_STATE["prepared"]
    config = _WORKER_STATE["config"]
    return _run_unit(prepared, *args, config)  # type: ignore[arg-type]


def load_inputs(config: ExperimentConfig) -> tuple[list[RunSet], Qrels]:
    """Read every input up front so a bad file aborts before any computation."""
    runs = [load_run(p) for p in config.input_runs]
    tags = [r.tag for r in runs]
    dupes = {t for t in tags if tags.count(t) > 1}
    if dupes:
        raise DataError(f"run tag(s) used by more than one input: {', '.join(sorted(map(str, dupes)))}")
    return runs, load_qrels(config.qrels_path)


def experiment_topics(runs: Sequence[RunSet], qrels: Qrels) -> list[str]:
    """Topics judged in the qrels and answered by at least one run."""
    answered = set(run_topics(runs))
    topics = [t for t in qrels.topics() if t in answered]
    if not topics:
        raise DataError("no topic is shared between the qrels and the input runs")
    return topics


def run_experiment(
    config: ExperimentConfig,
    jobs: int = 1,
    inputs: tuple[Sequence[RunSet], Qrels] | None = None,
) -> ExperimentReport:
    """Run the full ordering x t x x grid.

    Args:
        config: validated experiment configuration.
        jobs: worker processes; cells are independent so results do not
            depend on this.
        inputs: already-parsed (runs, qrels) to use instead of the files
            named in *config*.
    """
    config.validate()
    runs, qrels = inputs if inputs is not None else load_inputs(config)
    topics = experiment_topics(runs, qrels)
    orderings = make_orderings(topics, config.num_orderings, config.rng_seed)
    units = []
    for o, ordering in enumerate(orderings, start=1):
        for t in config.t_values:
            training, fusion = split_topics(topics, t, ordering)
            units.append((o, t, training, fusion))
    log.info(
        "experiment: %d topics, %d runs, %d ordering/t units x %d x-values",
        len(topics), len(runs), len(units), len(config.x_values),
    )
    prepared = PreparedCollection(runs, qrels, topics, config.input_depth)

    if jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(prepared, config)) as pool:
            results = list(pool.map(_run_unit_in_worker, units))
    else:
        results = [_run_unit(prepared, *unit, config) for unit in units]

    report = ExperimentReport(
        t_values=tuple(config.t_values),
        x_values=tuple(config.x_values),
        variants=tuple(config.variants),
        num_orderings=config.num_orderings,
    )
    for o, t, combmnz, probfuse in results:
        report.combmnz[(o, t)] = combmnz
        for (x, variant), cell in probfuse.items():
            report.probfuse[(o, t, x, variant)] = cell
    return report


def average_over_groups(
    reports: Sequence[ExperimentReport],
) -> dict[tuple[float, int | str, str, str], CellScore]:
    """Mean of the per-group ordering means, keyed by (t, x, method, variant).

    ``x == "all"`` holds the mean of the per-group grand means. All reports
    must share the same grid.
    """
    if not reports:
        raise ValueError("no reports to combine")
    first = reports[0]
    for other in reports[1:]:
        if (other.t_values, other.x_values, other.variants) != (first.t_values, first.x_values, first.variants):
            raise ConfigError("reports were produced with different grids")
    combined: dict[tuple[float, int | str, str, str], CellScore] = {}
    for t in first.t_values_sorted():
        for method, variant in first.methods():
            for x in sorted(first.x_values):
                combined[(t, x, method, variant)] = CellScore.mean(
                    [r.mean_over_orderings(t, x, method, variant) for r in reports]
                )
            combined[(t, "all", method, variant)] = CellScore.mean(
                [r.grand_mean(t, method, variant) for r in reports]
            )
    return combined
