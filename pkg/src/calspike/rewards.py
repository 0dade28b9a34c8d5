"""Composite per-completion reward: confidence calibration + entropy
stability + format enforcement.

The three components:

* confidence: (2*correct - 1) * (2*confidence - 1), in [-1, 1]. Rewards
  justified confidence, penalizes overconfidence on wrong answers and
  underconfidence on right ones.
* entropy: -scale * max(0, z_max - threshold), always <= 0. Only spikes
  above the threshold are penalized; stable sequences cost nothing.
* format: +1.0 for a well-formed three-tag completion, -1.0 otherwise.

Malformed completions still get the most complete diagnostics available:
the confidence component falls back to 0 (the formula's neutral point,
confidence 0.5) when no confidence was recoverable, and the entropy
component falls back to the whole sequence when no think span was
recoverable. Components disabled for ablation runs are None and
contribute 0 to the total.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .answers import answers_equivalent
from .entropy import EntropyProfile, analyze
from .model import (
    GenerationTrace,
    ParsedCompletion,
    RewardBreakdown,
    RewardParams,
    TraceValidationError,
    validate_trace,
)
from .parsing import parse_completion, think_token_indices

DEFAULT_PARAMS = RewardParams()


def confidence_reward(correct: bool, confidence: float) -> float:
    """Calibration component (2*correct - 1) * (2*confidence - 1)."""
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence!r} outside [0, 1]")
    return (2.0 * (1 if correct else 0) - 1.0) * (2.0 * confidence - 1.0)


def entropy_reward(z_max: float, params: RewardParams = DEFAULT_PARAMS) -> float:
    """Spike penalty -scale * max(0, z_max - threshold); never positive."""
    penalty = params.spike_scale * max(0.0, z_max - params.spike_threshold)
    # The guard keeps a zero penalty from serializing as -0.0.
    return -penalty if penalty > 0.0 else 0.0


def format_reward(parsed: ParsedCompletion) -> float:
    """+1.0 for a well-formed completion, -1.0 for a malformed one."""
    return 1.0 if parsed.format_valid else -1.0


@dataclass(slots=True)
class ScoreResult:
    """Breakdown plus the intermediate artifacts, for reports/diagnostics."""

    breakdown: RewardBreakdown
    parsed: ParsedCompletion
    profile: EntropyProfile


def score_detailed(
    trace: GenerationTrace,
    params: RewardParams = DEFAULT_PARAMS,
    *,
    confidence_enabled: bool = True,
    entropy_enabled: bool = True,
    stats_over_think_only: bool = False,
) -> ScoreResult:
    """Score one trace, keeping the parse and entropy profile around.

    Raises TraceValidationError when the trace breaks an invariant;
    everything else (malformed completions, wrong or missing answers)
    is expressed through the breakdown, never an error.
    """
    params.validate()
    violations = validate_trace(trace, expected_k=params.top_k)
    if violations:
        raise TraceValidationError(trace.id, violations)

    parsed = parse_completion(trace.completion)
    correct = parsed.answer is not None and answers_equivalent(
        parsed.answer, trace.ground_truth
    )
    if parsed.think_span is not None:
        think_idx: Sequence[int] = think_token_indices(parsed, trace)
    else:
        think_idx = range(len(trace.tokens))
    profile = analyze(trace, think_idx, params, stats_over_think_only)

    r_confidence: float | None = None
    if confidence_enabled:
        if parsed.confidence is None:
            r_confidence = 0.0
        else:
            r_confidence = confidence_reward(correct, parsed.confidence)
    r_entropy = entropy_reward(profile.z_max, params) if entropy_enabled else None
    r_format = format_reward(parsed)
    r_total = (r_confidence or 0.0) + (r_entropy or 0.0) + r_format

    breakdown = RewardBreakdown(
        r_confidence=r_confidence,
        r_entropy=r_entropy,
        r_format=r_format,
        r_total=r_total,
        correct=correct,
        z_max=profile.z_max,
        spike_rate=profile.spike_rate,
        sentence_entropy=profile.sentence_entropy,
    )
    return ScoreResult(breakdown=breakdown, parsed=parsed, profile=profile)


def score(
    trace: GenerationTrace,
    params: RewardParams = DEFAULT_PARAMS,
    *,
    confidence_enabled: bool = True,
    entropy_enabled: bool = True,
) -> RewardBreakdown:
    """Composite reward breakdown for one validated trace."""
    return score_detailed(
        trace,
        params,
        confidence_enabled=confidence_enabled,
        entropy_enabled=entropy_enabled,
    ).breakdown


def score_batch(
    traces: Iterable[GenerationTrace],
    params: RewardParams = DEFAULT_PARAMS,
    *,
    workers: int = 1,
    confidence_enabled: bool = True,
    entropy_enabled: bool = True,
) -> list[RewardBreakdown]:
    """Score many traces; results always come back in input order.

    Scoring is pure per-trace, so traces may be processed concurrently.
    """
    def one(trace: GenerationTrace) -> RewardBreakdown:
        return score(
            trace,
            params,
            confidence_enabled=confidence_enabled,
            entropy_enabled=entropy_enabled,
        )

    if workers <= 1:
        return [one(t) for t in traces]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, traces))
