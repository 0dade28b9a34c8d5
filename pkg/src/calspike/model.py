"""Core data types for reasoning-trace scoring.

A trace is one model completion plus the per-token top-k probability
records the producer logged (probabilities only, no logits, no tokenizer
state). Whether those probabilities come from a pre- or post-temperature
distribution is up to the producer; the engine scores whatever was logged.

All types are treated as immutable after construction: scoring functions
never mutate their inputs, so values can be shared freely across worker
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PROB_SUM_TOLERANCE = 1e-9


@dataclass(slots=True)
class TokenRecord:
    """One generated token: surface text, character span, top-k probabilities.

    Offsets are 0-based half-open indices into the completion string.
    ``top_k_probs`` is sorted descending; the list is used as-is (no
    renormalization of the top-k mass).
    """

    text: str
    char_start: int
    char_end: int
    top_k_probs: tuple[float, ...]


@dataclass(slots=True)
class GenerationTrace:
    """One completion with its token records and reference answer."""

    id: str
    completion: str
    tokens: tuple[TokenRecord, ...]
    ground_truth: str


@dataclass(slots=True)
class ParsedCompletion:
    """Decomposition of a completion into think/answer/confidence segments.

    ``format_valid`` is True only when the completion is exactly one
    well-nested ``<think>...</think><answer>...</answer><confidence>...
    </confidence>`` sequence (whitespace allowed around and between
    blocks) with a parseable confidence in [0, 1]. On invalid input the
    recoverable fields are still populated best-effort.

    ``think_span`` is the (start, end) character span of the inner
    content of the ``<think>`` block, when one was found.
    """

    think: str | None
    answer: str | None
    confidence: float | None
    format_valid: bool
    think_span: tuple[int, int] | None


@dataclass(slots=True)
class RewardParams:
    """Scoring configuration. Defaults follow the reference setup
    (spike scale 1.0, z-score threshold 1.5, top-5 probabilities)."""

    spike_scale: float = 1.0       # lambda: weight of the spike penalty
    spike_threshold: float = 1.5   # tau: z-score above which spikes are penalized
    top_k: int = 5                 # expected width of per-token probability lists

    def validate(self) -> None:
        if self.spike_scale < 0:
            raise ValueError(f"spike_scale must be >= 0, got {self.spike_scale}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")


@dataclass(slots=True)
class RewardBreakdown:
    """The three reward components, their sum, and per-trace diagnostics.

    ``r_total`` is exactly the sum of the enabled components. A component
    disabled for an ablation run is ``None`` and contributes 0; it is
    serialized as ``null`` so downstream consumers can tell "disabled"
    from "computed as zero".
    """

    r_confidence: float | None
    r_entropy: float | None
    r_format: float
    r_total: float
    correct: bool
    z_max: float
    spike_rate: float
    sentence_entropy: float


@dataclass(slots=True)
class TraceViolation:
    """One invariant violation found by validate_trace.

    ``token_index`` is None for trace-level problems.
    """

    token_index: int | None
    reason: str

    def __str__(self) -> str:
        where = "trace" if self.token_index is None else f"token {self.token_index}"
        return f"{where}: {self.reason}"


class TraceValidationError(ValueError):
    """Raised by scoring when a trace fails validation."""

    def __init__(self, trace_id: str, violations: list[TraceViolation]):
        self.trace_id = trace_id
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:3])
        more = f" (+{len(violations) - 3} more)" if len(violations) > 3 else ""
        super().__init__(f"invalid trace {trace_id!r}: {head}{more}")


def validate_trace(
    trace: GenerationTrace, expected_k: int | None = None
) -> list[TraceViolation]:
    """Check every trace invariant; an empty list means the trace is ok.

    Violations are data, not failures: any well-formed GenerationTrace
    yields a (possibly empty) list, never an exception. A trace that
    validates cleanly is guaranteed to score without error downstream.

    Checks: probabilities in (0, 1], sorted descending, summing to at
    most 1 (+1e-9 slack); a single top-k width per trace (``expected_k``
    additionally pins that width, since k is a per-dataset constant);
    spans strictly increasing, contiguous, and tiling the completion
    exactly; token text matching its span.
    """
    violations: list[TraceViolation] = []
    tokens = trace.tokens
    n = len(tokens)

    if n == 0:
        if trace.completion:
            violations.append(TraceViolation(None, "completion non-empty but no tokens"))
        return violations

    widths = {len(t.top_k_probs) for t in tokens}
    if len(widths) > 1:
        violations.append(
            TraceViolation(None, f"mixed top-k widths in one trace: {sorted(widths)}")
        )
        return violations
    width = widths.pop()
    if width == 0:
        violations.append(TraceViolation(None, "empty top_k_probs"))
        return violations
    if expected_k is not None and width != expected_k:
        violations.append(
            TraceViolation(None, f"top-k width {width} does not match configured k={expected_k}")
        )

    probs = np.array([t.top_k_probs for t in tokens], dtype=np.float64)
    starts = np.fromiter((t.char_start for t in tokens), dtype=np.int64, count=n)
    ends = np.fromiter((t.char_end for t in tokens), dtype=np.int64, count=n)

    bad = np.flatnonzero(~np.isfinite(probs).all(axis=1))
    for i in bad:
        violations.append(TraceViolation(int(i), "non-finite probability"))
    low = np.flatnonzero((probs <= 0.0).any(axis=1))
    for i in low:
        violations.append(TraceViolation(int(i), "probability not in (0, 1]"))
    high = np.flatnonzero((probs > 1.0).any(axis=1))
    for i in high:
        violations.append(TraceViolation(int(i), "probability not in (0, 1]"))
    if width > 1:
        unsorted = np.flatnonzero((np.diff(probs, axis=1) > 0.0).any(axis=1))
        for i in unsorted:
            violations.append(TraceViolation(int(i), "top_k_probs not sorted descending"))
    oversum = np.flatnonzero(probs.sum(axis=1) > 1.0 + PROB_SUM_TOLERANCE)
    for i in oversum:
        violations.append(TraceViolation(int(i), "probability mass > 1"))

    empty_span = np.flatnonzero(starts >= ends)
    for i in empty_span:
        violations.append(TraceViolation(int(i), "char_start must be < char_end"))
    if starts[0] != 0:
        violations.append(TraceViolation(0, "first span does not start at 0"))
    gaps = np.flatnonzero(starts[1:] != ends[:-1])
    for i in gaps:
        violations.append(
            TraceViolation(int(i) + 1, "span not contiguous with previous token")
        )
    if ends[-1] != len(trace.completion):
        violations.append(
            TraceViolation(n - 1, "last span does not end at completion length")
        )

    # With spans tiling the text, equal lengths plus an equal concatenation
    # pin every token text to its own slice.
    lengths_ok = all(len(t.text) == t.char_end - t.char_start for t in tokens)
    if not lengths_ok or "".join(t.text for t in tokens) != trace.completion:
        for i, t in enumerate(tokens):
            if t.text != trace.completion[t.char_start : t.char_end]:
                violations.append(TraceViolation(i, "token text does not match its span"))

    return violations


def max_entropy(k: int) -> float:
    """Upper bound of token entropy for a k-outcome distribution (nats)."""
    return math.log(k)
