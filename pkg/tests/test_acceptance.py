"""Exit criteria for the toolkit.

Each test carries a ``criterion`` marker; conftest prints one PASS/FAIL line
per criterion at the end of the session.  Runtime limits are asserted inside
the tests.
"""

from __future__ import annotations

import csv
import io
import os
import random
import statistics
import subprocess
import sys
import time
from pathlib import Path

import pytest

from fusekit.evaluation import average_precision, bpref, evaluate
from fusekit.experiment import REPORT_HEADER, ExperimentConfig, experiment_topics, load_inputs, run_experiment
from fusekit.fusion_core import (
    ProbabilityProfile,
    combmnz,
    combsum,
    normalize_scores,
    score_probfuse,
    segment_of,
    train_profile,
)
from fusekit.synthgen import SynthSpec, generate
from fusekit.trec_io import Qrels, RankedList, RunSet

from oracles import ap_bruteforce, bpref_bruteforce

pytestmark = pytest.mark.acceptance

TOL = 1e-9


def criterion(number, title):
    return pytest.mark.criterion(number, title)


# 1 ---------------------------------------------------------------------------

C1 = criterion(1, "hand-computed fixtures exact to 1e-9 in < 1 s")


def one_topic_run(docs):
    return RunSet("m", {"1": RankedList.from_pairs("1", [(d, float(len(docs) - i)) for i, d in enumerate(docs)])})


@C1
def test_c1_hand_computed_fixtures():
    start = time.perf_counter()

    assert [segment_of(p, 10, 4) for p in range(1, 11)] == [1, 1, 1, 2, 2, 3, 3, 3, 4, 4]
    assert [segment_of(p, 3, 5) for p in range(1, 4)] == [2, 4, 5]

    run = one_topic_run(["d1", "d2", "d3", "d4"])
    complete = Qrels({("1", "d1"): 1, ("1", "d2"): 0, ("1", "d3"): 1, ("1", "d4"): 0})
    for variant in ("all", "judged"):
        assert train_profile(run, complete, ["1"], 2, variant).probs == pytest.approx((0.5, 0.5), abs=TOL)
    partial = Qrels({("1", "d1"): 1, ("1", "d3"): 0})
    assert train_profile(run, partial, ["1"], 2, "all").probs == pytest.approx((0.5, 0.0), abs=TOL)
    assert train_profile(run, partial, ["1"], 2, "judged").probs == pytest.approx((1.0, 0.0), abs=TOL)

    results = {
        "m1": RankedList.from_pairs("1", [("d", 2.0), ("e", 1.0)]),
        "m2": RankedList.from_pairs("1", [("f", 2.0), ("d", 1.0)]),
    }
    profiles = {"m1": ProbabilityProfile("m1", 2, (0.5, 0.1)), "m2": ProbabilityProfile("m2", 2, (0.3, 0.4))}
    assert dict(score_probfuse(results, profiles).entries)["d"] == pytest.approx(0.7, abs=TOL)

    normalised = normalize_scores(RankedList.from_pairs("1", [("d1", 0.9), ("d2", 0.1), ("d3", 0.5)]))
    assert normalised == pytest.approx({"d1": 1.0, "d2": 0.0, "d3": 0.5}, abs=TOL)

    # d normalises to 0.8 in s1; 0.5 in s2, then 0.0 as s2's bottom document
    s1 = RankedList.from_pairs("1", [("a", 1.0), ("d", 0.8), ("z", 0.0)])
    s2 = RankedList.from_pairs("1", [("b", 1.0), ("d", 0.5), ("y", 0.0)])
    s2_bottom = RankedList.from_pairs("1", [("b", 1.0), ("d", 0.0)])
    assert dict(combmnz({"s1": s1, "s2": s2}).entries)["d"] == pytest.approx(2.6, abs=TOL)
    assert dict(combmnz({"s1": s1, "s2": s2_bottom}).entries)["d"] == pytest.approx(0.8, abs=TOL)

    ap_qrels = Qrels({("1", "r1"): 1, ("1", "n"): 0, ("1", "r2"): 1})
    assert average_precision(["r1", "n", "r2"], ap_qrels, "1", 1000) == pytest.approx(0.833333333333, abs=TOL)
    bp_qrels = Qrels({("1", "r1"): 1, ("1", "r2"): 1, ("1", "n1"): 0, ("1", "n2"): 0})
    assert bpref(["n1", "r1", "r2"], bp_qrels, "1", 1000) == pytest.approx(0.5, abs=TOL)
    assert bpref(["n1", "n2", "r1"], bp_qrels, "1", 1000) == pytest.approx(0.0, abs=TOL)

    # one system, one segment: every document scores P(segment 1) and ties
    single = {"m": RankedList.from_pairs("2", [("c", 3.0), ("a", 2.0), ("b", 1.0)])}
    fused = score_probfuse(single, {"m": ProbabilityProfile("m", 1, (0.25,))})
    assert fused.entries == (("a", 0.25), ("b", 0.25), ("c", 0.25))

    assert time.perf_counter() - start < 1.0


# 2 ---------------------------------------------------------------------------

C2 = criterion(2, "probFuseAll and probFuseJudged identical under complete judgments (100 instances, < 30 s)")


@C2
def test_c2_all_equals_judged_when_complete():
    start = time.perf_counter()
    instances = 0
    for seed in range(100):
        rnd = random.Random(seed)
        num_systems = rnd.randint(2, 5)
        spec = SynthSpec(
            num_topics=rnd.randint(2, 8),
            collection_size=rnd.randint(60, 200),
            num_relevant_per_topic=rnd.randint(1, 20),
            num_systems=num_systems,
            quality=tuple(rnd.random() for _ in range(num_systems)),
            list_depth=rnd.randint(5, 50),
            judgment_coverage=1.0,
            rng_seed=seed,
        )
        runs, qrels = generate(spec)
        topics = qrels.topics()
        cut = rnd.randint(1, len(topics) - 1)
        training, fusion = topics[:cut], topics[cut:]
        x = rnd.choice([1, 2, 3, 5, 10, 25, 60])
        all_profiles = {r.tag: train_profile(r, qrels, training, x, "all") for r in runs}
        judged_profiles = {r.tag: train_profile(r, qrels, training, x, "judged") for r in runs}
        for tag in all_profiles:
            assert all_profiles[tag].probs == judged_profiles[tag].probs
        for topic in fusion:
            lists = {r.tag: r.get(topic) for r in runs}
            assert score_probfuse(lists, all_profiles, topic) == score_probfuse(lists, judged_profiles, topic)
        instances += 1
    assert instances >= 100
    assert time.perf_counter() - start < 30.0


# 3 ---------------------------------------------------------------------------

C3 = criterion(3, "AP and bpref match a brute-force reference within 1e-12 (1000 instances, < 30 s)")


@C3
def test_c3_metrics_match_bruteforce():
    start = time.perf_counter()
    rnd = random.Random(20061)
    compared = 0
    for _ in range(1000):
        num_topics = rnd.randint(1, 5)
        judgments = {}
        fused = {}
        for t in range(1, num_topics + 1):
            topic = str(t)
            pool = [f"d{i}" for i in range(rnd.randint(1, 20))]
            for doc in pool:
                value = rnd.choice([None, None, 0, 0, 1, 2])
                if value is not None:
                    judgments[(topic, doc)] = value
            ranking = rnd.sample(pool, rnd.randint(0, len(pool)))
            fused[topic] = ranking
        qrels = Qrels(judgments)
        depth = rnd.randint(1, 25)
        expected = {}
        for topic, ranking in fused.items():
            topic_judgments = {d: v for (t, d), v in judgments.items() if t == topic}
            ap = ap_bruteforce(ranking, topic_judgments, depth)
            bp = bpref_bruteforce(ranking, topic_judgments, depth)
            assert (average_precision(ranking, qrels, topic, depth) is None) == (ap is None)
            if ap is not None:
                expected[topic] = (ap, bp)
                assert abs(average_precision(ranking, qrels, topic, depth) - ap) <= 1e-12
                assert abs(bpref(ranking, qrels, topic, depth) - bp) <= 1e-12
        if expected:
            summary = evaluate(fused, qrels, depth)
            assert [e.topic_id for e in summary.per_topic] == sorted(expected, key=int)
            assert abs(summary.map_score - statistics.fmean(a for a, _ in expected.values())) <= 1e-12
            assert abs(summary.bpref_score - statistics.fmean(b for _, b in expected.values())) <= 1e-12
        compared += 1
    assert compared >= 1000
    assert time.perf_counter() - start < 30.0


# 4 ---------------------------------------------------------------------------

C4 = criterion(4, "CombSum/CombMNZ orderings unchanged by per-system positive affine rescaling (100 instances, < 10 s)")


@C4
def test_c4_affine_invariance():
    start = time.perf_counter()
    rnd = random.Random(7)
    for _ in range(100):
        docs = [f"d{i:02d}" for i in range(rnd.randint(2, 40))]
        original = {}
        rescaled = {}
        for s in range(rnd.randint(1, 6)):
            returned = rnd.sample(docs, rnd.randint(1, len(docs)))
            scores = [rnd.uniform(-50.0, 50.0) for _ in returned]
            a, b = rnd.uniform(0.01, 100.0), rnd.uniform(-1000.0, 1000.0)
            tag = f"s{s}"
            original[tag] = RankedList.from_pairs("1", list(zip(returned, scores)))
            rescaled[tag] = RankedList.from_pairs("1", [(d, a * v + b) for d, v in zip(returned, scores)])
        assert combsum(original).doc_ids == combsum(rescaled).doc_ids
        assert combmnz(original).doc_ids == combmnz(rescaled).doc_ids
    assert time.perf_counter() - start < 10.0


# 5 ---------------------------------------------------------------------------

C5 = criterion(5, "desk-scale experiment: full grid < 5 min, valid reproducible report, exact aggregates")

DESK_SPEC = SynthSpec(
    num_topics=50,
    collection_size=5000,
    num_relevant_per_topic=100,
    num_systems=6,
    quality=(0.7, 0.6, 0.5, 0.4, 0.3, 0.2),
    list_depth=1000,
    judgment_coverage=0.6,
    rng_seed=2006,
)


def report_text(report):
    out = io.StringIO()
    report.write_csv(out)
    return out.getvalue()


@C5
def test_c5_desk_scale_experiment(tmp_path):
    from fusekit.synthgen import write_collection

    paths = write_collection(*generate(DESK_SPEC), tmp_path)
    config = ExperimentConfig(input_runs=tuple(str(p) for p in paths[:-1]), qrels_path=str(paths[-1]), rng_seed=1)
    assert len(config.t_values) == 5 and len(config.x_values) == 18 and config.num_orderings == 5

    start = time.perf_counter()
    first = report_text(run_experiment(config))
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    assert first == report_text(run_experiment(config))

    rows = list(csv.reader(io.StringIO(first)))
    assert rows[0] == REPORT_HEADER
    body = [dict(zip(REPORT_HEADER, r)) for r in rows[1:]]
    assert all(len(r) == len(REPORT_HEADER) for r in rows)
    cells = [r for r in body if r["ordering"] != "aggregate"]
    aggregates = [r for r in body if r["ordering"] == "aggregate"]
    assert len(cells) == 5 * 5 * 18 * 3
    for r in cells:
        assert r["ordering"] in {"1", "2", "3", "4", "5"}
        assert (r["method"], r["variant"]) in {("combmnz", "-"), ("probfuse", "all"), ("probfuse", "judged")}
        assert 0.0 <= float(r["map"]) <= 1.0 and 0.0 <= float(r["bpref"]) <= 1.0

    mnz = {}
    for r in cells:
        if r["method"] == "combmnz":
            mnz.setdefault((r["ordering"], r["t"]), set()).add((r["map"], r["bpref"]))
    assert len(mnz) == 25 and all(len(v) == 1 for v in mnz.values())

    by_key = {(r["t"], r["x"], r["method"], r["variant"]): r for r in aggregates}
    assert len(by_key) == 5 * 19 * 3
    for (t, x, method, variant), row in by_key.items():
        if x == "all":
            parts = [by_key[(t, str(xx), method, variant)] for xx in config.x_values]
        else:
            parts = [c for c in cells if (c["t"], c["x"], c["method"], c["variant"]) == (t, x, method, variant)]
            assert len(parts) == 5
        for measure in ("map", "bpref"):
            assert float(row[measure]) == statistics.fmean(float(p[measure]) for p in parts)
    print(f"desk-scale grid finished in {elapsed:.1f} s")


# 6 ---------------------------------------------------------------------------

C6 = criterion(6, "TREC-3 'third' group: CombMNZ MAP 0.43344 +/- 0.01, probFuseJudged >= probFuseAll on >= 4 of 5 groups")

TREC3_GROUPS = {
    "first": ["acqnt1", "citri1", "crnlea", "padre2", "xerox3", "xerox4"],
    "second": ["clartm", "crnlla", "dortd2", "eth002", "nyuir2", "padre1"],
    "third": ["brkly7", "clarta", "dortd1", "eth001", "inq101", "pircs1"],
    "fourth": ["assctv1", "erima1", "lsia0mf", "lsia0mw2", "virtu1", "vtc2s2"],
    "fifth": ["assctv2", "nyuir1", "rutfua1", "rutfua2", "siems1", "westp1"],
}


def trec3_inputs():
    run_dir = os.environ.get("FUSEKIT_TREC3_RUNS")
    qrels = os.environ.get("FUSEKIT_TREC3_QRELS")
    if not run_dir or not qrels:
        pytest.skip("set FUSEKIT_TREC3_RUNS (topfile directory) and FUSEKIT_TREC3_QRELS to run")
    found = {}
    for tags in TREC3_GROUPS.values():
        for tag in tags:
            candidates = [Path(run_dir) / name for name in (f"input.{tag}", f"input.{tag}.gz", tag, f"{tag}.run")]
            hits = [c for c in candidates if c.exists()]
            if not hits:
                pytest.fail(f"topfile for {tag} not found in {run_dir}")
            found[tag] = str(hits[0])
    return found, qrels


def trec3_config(found, qrels, group):
    return ExperimentConfig(
        input_runs=tuple(found[tag] for tag in TREC3_GROUPS[group]),
        qrels_path=qrels,
        t_values=(50,),
        x_values=(25,),
        num_orderings=5,
        rng_seed=int(os.environ.get("FUSEKIT_TREC3_SEED", "0")),
    )


def trec3_collection(config):
    """Inputs restricted to topics 151-200."""
    runs, judged = load_inputs(config)
    window = {str(t) for t in range(151, 201)}
    runs = [RunSet(r.tag, {t: v for t, v in r.lists.items() if t in window}) for r in runs]
    judged = Qrels({k: v for k, v in judged.items() if k[0] in window})
    return runs, judged


def trec3_report(found, qrels, group):
    config = trec3_config(found, qrels, group)
    return run_experiment(config, inputs=trec3_collection(config))


@C6
def test_c6_trec3_reproduction():
    found, qrels = trec3_inputs()
    wins = 0
    for group in TREC3_GROUPS:
        report = trec3_report(found, qrels, group)
        all_map = report.mean_over_orderings(50, 25, "probfuse", "all").map_score
        judged_map = report.mean_over_orderings(50, 25, "probfuse", "judged").map_score
        wins += judged_map >= all_map
        if group == "third":
            mnz_map = report.mean_over_orderings(50, 25, "combmnz", "-").map_score
            print(f"third: CombMNZ MAP {mnz_map:.5f} (target 0.43344)")
            assert abs(mnz_map - 0.43344) <= 0.01
    print(f"probFuseJudged >= probFuseAll on {wins} of 5 groups")
    assert wins >= 4


# 7 ---------------------------------------------------------------------------

C7 = criterion(7, "every CLI subcommand is byte-for-byte deterministic")


def fusekit(args, cwd, hash_seed):
    env = dict(os.environ, PYTHONHASHSEED=str(hash_seed))
    env.pop("FUSEKIT_JOBS", None)
    proc = subprocess.run([sys.executable, "-m", "fusekit", *map(str, args)], cwd=cwd, env=env,
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def invoke_all(workdir, hash_seed):
    workdir.mkdir()
    spec = workdir / "spec.txt"
    spec.write_text("num_topics = 10\ncollection_size = 400\nnum_relevant_per_topic = 15\nnum_systems = 3\n"
                    "quality = 0.7, 0.4, 0.2\nlist_depth = 80\njudgment_coverage = 0.7\n")
    fusekit(["synth", "--spec", spec, "--out-dir", "data", "--seed", 5], workdir, hash_seed)
    runs = [f"data/sys0{i}.run" for i in (1, 2, 3)]
    fusekit(["train", "--runs", *runs, "--qrels", "data/qrels.txt", "--topics", "1,2,3,4,5", "--x", 7,
             "--variant", "judged", "--out", "profiles.txt"], workdir, hash_seed)
    fusekit(["fuse", "--runs", *runs, "--profiles", "profiles.txt", "--topics", "6,7,8,9,10",
             "--out", "probfuse.run"], workdir, hash_seed)
    fusekit(["fuse", "--runs", *runs, "--method", "combmnz", "--out", "combmnz.run"], workdir, hash_seed)
    fusekit(["fuse", "--runs", *runs, "--method", "combsum", "--depth", 20, "--out", "combsum.run"],
            workdir, hash_seed)
    fusekit(["eval", "--run", "probfuse.run", "--qrels", "data/qrels.txt", "--out", "eval.csv"], workdir, hash_seed)
    (workdir / "exp.cfg").write_text("input_runs = " + ",".join(runs) + "\nqrels_path = data/qrels.txt\n"
                                     "t_values = 20, 50\nx_values = 2, 10\nnum_orderings = 2\nrng_seed = 8\n")
    fusekit(["experiment", "--config", "exp.cfg", "--out", "report.csv"], workdir, hash_seed)
    stdout = fusekit(["fuse", "--runs", *runs, "--method", "combmnz", "--depth", 5], workdir, hash_seed)
    (workdir / "stdout.run").write_text(stdout)
    return {p.relative_to(workdir): p.read_bytes() for p in sorted(workdir.rglob("*")) if p.is_file()}


@C7
def test_c7_cli_determinism(tmp_path):
    first = invoke_all(tmp_path / "a", 0)
    second = invoke_all(tmp_path / "b", 12345)
    assert len(first) == 13
    assert first == second


def test_trec3_harness_on_stand_in_files(tmp_path, monkeypatch):
    """Exercise the criterion 6 plumbing with synthetic topfiles named like the real ones."""
    from fusekit.trec_io import write_qrels, write_run

    tags = [tag for group in TREC3_GROUPS.values() for tag in group]
    spec = SynthSpec(num_topics=52, collection_size=300, num_relevant_per_topic=10, num_systems=len(tags),
                     quality=(0.4,), list_depth=30, judgment_coverage=0.5, rng_seed=3)
    runs, qrels = generate(spec)
    shift = {str(t): str(149 + t) for t in range(1, 53)}  # 150..201: two topics fall outside 151-200
    for tag, run in zip(tags, runs):
        with open(tmp_path / f"input.{tag}", "w") as fh:
            write_run({shift[t]: list(r) for t, r in run.lists.items()}, tag, fh)
    with open(tmp_path / "qrels.151-200", "w") as fh:
        write_qrels(Qrels({(shift[t], d): v for (t, d), v in qrels.items()}), fh)
    monkeypatch.setenv("FUSEKIT_TREC3_RUNS", str(tmp_path))
    monkeypatch.setenv("FUSEKIT_TREC3_QRELS", str(tmp_path / "qrels.151-200"))
    found, qrels_path = trec3_inputs()
    runs, judged = trec3_collection(trec3_config(found, qrels_path, "third"))
    assert [r.tag for r in runs] == TREC3_GROUPS["third"]
    assert experiment_topics(runs, judged) == [str(t) for t in range(151, 201)]
    report = trec3_report(found, qrels_path, "third")
    assert 0.0 <= report.mean_over_orderings(50, 25, "combmnz", "-").map_score <= 1.0
