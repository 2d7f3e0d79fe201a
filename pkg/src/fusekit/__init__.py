"""Data fusion for TREC-style ranked lists: probFuse, CombSum and CombMNZ,
with trec_eval-compatible MAP/bpref and an experiment harness."""

from .errors import (
    ConfigError,
    DataError,
    DuplicateDocumentError,
    EmptyEvaluationError,
    FusekitError,
    InconsistentTagError,
    ParseError,
    ProfileMismatchError,
)
from .evaluation import EvalSummary, TopicEval, average_precision, bpref, evaluate
from .fusion_core import (
    FusedList,
    ProbabilityProfile,
    Variant,
    combmnz,
    combsum,
    normalize_scores,
    score_probfuse,
    segment_of,
    train_profile,
)
from .trec_io import Qrels, RankedList, RunSet, load_qrels, load_run, parse_qrels, parse_run, write_run

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DuplicateDocumentError",
    "EmptyEvaluationError",
    "FusekitError",
    "InconsistentTagError",
    "ParseError",
    "ProfileMismatchError",
    "EvalSummary",
    "TopicEval",
    "average_precision",
    "bpref",
    "evaluate",
    "FusedList",
    "ProbabilityProfile",
    "Variant",
    "combmnz",
    "combsum",
    "normalize_scores",
    "score_probfuse",
    "segment_of",
    "train_profile",
    "Qrels",
    "RankedList",
    "RunSet",
    "load_qrels",
    "load_run",
    "parse_qrels",
    "parse_run",
    "write_run",
]
