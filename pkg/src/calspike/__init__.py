"""Calibration and entropy-spike rewards for LLM reasoning traces.

The package scores structured completions (``<think>``, ``<answer>``,
``<confidence>`` sections) against ground truth: a confidence
calibration reward, a penalty for entropy spikes in the reasoning span,
and a format term. On top of scoring it provides calibration reports,
a synthetic trace generator with embedded oracle labels, a
newline-delimited JSON service, and a batch CLI.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .answers import AnswerParseError, MathValue, answers_equivalent, parse_answer
from .calibration import (
    BinStats,
    CalibrationReport,
    SampleOutcome,
    bin_index,
    brier_score,
    build_report,
    calibration_error,
    expected_calibration_error,
)
from .entropy import (
    EntropyProfile,
    analyze,
    entropy_matrix,
    sequence_zscores,
    token_entropy,
)
from .model import (
    GenerationTrace,
    ParsedCompletion,
    RewardBreakdown,
    RewardParams,
    TokenRecord,
    TraceValidationError,
    TraceViolation,
    max_entropy,
    validate_trace,
)
from .parsing import (
    parse_completion,
    parse_confidence,
    render_completion,
    think_token_indices,
)
from .rewards import (
    DEFAULT_PARAMS,
    ScoreResult,
    confidence_reward,
    entropy_reward,
    format_reward,
    score,
    score_batch,
    score_detailed,
)
from .service import ServiceConfig, serve_stream, serve_tcp
from .synth import SyntheticSpec, SynthLabels, generate, make_corpus_specs

__all__ = [
    "__version__",
    "AnswerParseError",
    "BinStats",
    "CalibrationReport",
    "DEFAULT_PARAMS",
    "EntropyProfile",
    "GenerationTrace",
    "MathValue",
    "ParsedCompletion",
    "RewardBreakdown",
    "RewardParams",
    "SampleOutcome",
    "ScoreResult",
    "ServiceConfig",
    "SyntheticSpec",
    "SynthLabels",
    "TokenRecord",
    "TraceValidationError",
    "TraceViolation",
    "analyze",
    "answers_equivalent",
    "bin_index",
    "brier_score",
    "build_report",
    "calibration_error",
    "confidence_reward",
    "entropy_matrix",
    "entropy_reward",
    "expected_calibration_error",
    "format_reward",
    "generate",
    "make_corpus_specs",
    "max_entropy",
    "parse_answer",
    "parse_completion",
    "parse_confidence",
    "render_completion",
    "score",
    "score_batch",
    "score_detailed",
    "sequence_zscores",
    "serve_stream",
    "serve_tcp",
    "think_token_indices",
    "token_entropy",
    "validate_trace",
]
