"""``fusekit`` command line: train, fuse, eval, experiment, synth.

Exit codes: 0 success, 1 usage or configuration error, 2 unreadable or
unusable data, 3 unexpected runtime failure. Results go to ``--out`` (or
stdout); diagnostics go to stderr. Files are written to a temporary name
and renamed into place only once complete.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import IO, NoReturn

from ._files import atomic_output
from .errors import ConfigError, DataError, ProfileMismatchError
from .evaluation import DEFAULT_DEPTH, evaluate, write_eval_csv
from .experiment import load_config, run_experiment
from .fusion_core import Variant, combmnz, combsum, dump_profiles, load_profiles, score_probfuse, train_profile
from .synthgen import generate, load_spec, write_collection
from .trec_io import RunSet, load_qrels, load_run, read_lines, run_topics, write_run

__all__ = ["main", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA", "EXIT_RUNTIME"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

log = logging.getLogger("fusekit")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _topics(value: str) -> list[str]:
    """Comma-separated topic ids, or a file of whitespace/comma-separated ids."""
    if os.path.isfile(value):
        try:
            text = Path(value).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read topic file {value}: {exc.strerror}") from exc
        items = text.replace(",", " ").split()
    else:
        items = [t.strip() for t in value.split(",")]
    topics = [t for t in items if t]
    if not topics:
        raise ConfigError("no topics given", "topics")
    return topics


def _emit(out: str | None, write: Callable[[IO[str]], None]) -> None:
    if out is None or out == "-":
        write(sys.stdout)
        sys.stdout.flush()
        return
    with atomic_output(out) as fh:
        write(fh)


def _load_runs(paths: Sequence[str]) -> list[RunSet]:
    runs = [load_run(p) for p in paths]
    seen: set[str] = set()
    for path, run in zip(paths, runs):
        if run.tag is None:
            raise DataError(f"{path}: run file is empty")
        if run.tag in seen:
            raise DataError(f"{path}: run tag {run.tag!r} already used by another input")
        seen.add(run.tag)
    return runs


def cmd_train(args: argparse.Namespace) -> int:
    qrels = load_qrels(args.qrels)
    runs = _load_runs(args.runs)
    topics = _topics(args.topics)
    profiles = [train_profile(run, qrels, topics, args.x, args.variant) for run in runs]
    _emit(args.out, lambda fh: dump_profiles(profiles, fh))
    return EXIT_OK


def cmd_fuse(args: argparse.Namespace) -> int:
    method = args.method or ("probfuse" if args.profiles else None)
    if method is None:
        raise ConfigError("give --profiles for probfuse or --method combmnz|combsum", "method")
    if method == "probfuse" and not args.profiles:
        raise ConfigError("probfuse needs --profiles", "profiles")
    if method != "probfuse" and args.profiles:
        raise ConfigError("--profiles only applies to probfuse", "profiles")

    runs = _load_runs(args.runs)
    topics = _topics(args.topics) if args.topics else run_topics(runs)
    profiles = None
    if args.profiles:
        profiles = load_profiles(read_lines(args.profiles), args.profiles)
        if args.x is not None:
            bad = sorted(tag for tag, p in profiles.items() if p.x != args.x)
            if bad:
                raise ProfileMismatchError(f"profiles for {', '.join(bad)} do not use x={args.x}")

    fused = {}
    for topic in topics:
        results = {run.tag: run.lists[topic] for run in runs if topic in run.lists}
        if not results:
            continue
        if method == "probfuse":
            fused[topic] = score_probfuse(results, profiles, topic)
        elif method == "combmnz":
            fused[topic] = combmnz(results, topic)
        else:
            fused[topic] = combsum(results, topic)
    tag = args.tag or method
    _emit(args.out, lambda fh: write_run(fused, tag, fh, depth=args.depth))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    qrels = load_qrels(args.qrels)
    run = load_run(args.run)
    summary = evaluate(run.lists, qrels, args.depth)
    _emit(args.out, lambda fh: write_eval_csv(summary, fh))
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    report = run_experiment(config, jobs=args.jobs)
    _emit(args.out, report.write_csv)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, rng_seed=args.seed)
        spec.validate()
    runs, qrels = generate(spec)
    for path in write_collection(runs, qrels, args.out_dir):
        print(path)
    return EXIT_OK


def _default_jobs() -> int:
    raw = os.environ.get("FUSEKIT_JOBS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fusekit", description="probFuse and CombMNZ data fusion for TREC runs")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train probFuse segment probabilities")
    p.add_argument("--runs", nargs="+", required=True, metavar="PATH")
    p.add_argument("--qrels", required=True)
    p.add_argument("--topics", required=True, help="comma list or file of training topics")
    p.add_argument("--x", type=_positive_int, required=True, help="number of segments")
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.ALL.value)
    p.add_argument("--out", help="profile file (default stdout)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="fuse runs into one TREC run")
    p.add_argument("--runs", nargs="+", required=True, metavar="PATH")
    p.add_argument("--profiles", help="trained profile file (probfuse)")
    p.add_argument("--method", choices=["probfuse", "combmnz", "combsum"])
    p.add_argument("--topics", help="comma list or file of topics to fuse (default: all)")
    p.add_argument("--x", type=_positive_int, help="expected number of segments in the profiles")
    p.add_argument("--depth", type=_positive_int, default=DEFAULT_DEPTH, help="documents kept per topic")
    p.add_argument("--tag", help="run tag for the output (default: method name)")
    p.add_argument("--out", help="fused run file (default stdout)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="MAP and bpref of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--depth", type=_positive_int, default=DEFAULT_DEPTH)
    p.add_argument("--out", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run the train/fuse/evaluate grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report CSV (default stdout)")
    p.add_argument("--jobs", type=_positive_int, default=None, help="worker processes (env FUSEKIT_JOBS)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("synth", help="generate a synthetic collection")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="override rng_seed from the spec file")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, usage errors exit 1
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if getattr(args, "jobs", 0) is None:
        args.jobs = _default_jobs()
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ProfileMismatchError as exc:
        print(f"fusekit: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"fusekit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"fusekit: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled failure", exc_info=True)
        print(f"fusekit: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
