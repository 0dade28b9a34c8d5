"""Extraction of <think>/<answer>/<confidence> segments from completions.

Validity is strict: exactly one well-nested block per tag, in that order,
nothing but whitespace around or between the blocks, lowercase tag names,
and a confidence that parses as a plain decimal in [0, 1]. Anything else
is format-invalid, but recoverable fields are still extracted best-effort
so downstream rewards can be computed from whatever is there. Malformed
input is never an exception: it is data, expressed through format_valid.
"""

from __future__ import annotations

import re

from .model import GenerationTrace, ParsedCompletion

TAG_NAMES = ("think", "answer", "confidence")

_VALID_RE = re.compile(
    r"\s*<think>(.*)</think>\s*<answer>(.*)</answer>\s*<confidence>(.*)</confidence>\s*",
    re.DOTALL,
)
_RECOVER_RES = {
    name: re.compile(rf"<{name}>(.*?)</{name}>", re.DOTALL) for name in TAG_NAMES
}
# Sign-less decimal: "0.85", ".85", "1", "1.0". Percents, fractions,
# exponents and words are all rejected; out-of-range values are rejected
# rather than clamped so malformed introspection is never rewarded.
_CONFIDENCE_RE = re.compile(r"\d+(?:\.\d*)?|\.\d+")


def parse_confidence(text: str) -> float | None:
    """Parse a stated confidence, returning None unless it is a bare
    decimal in [0, 1] (surrounding whitespace tolerated)."""
    stripped = text.strip()
    if not _CONFIDENCE_RE.fullmatch(stripped):
        return None
    value = float(stripped)
    if not 0.0 <= value <= 1.0:
        return None
    return value


def parse_completion(completion: str) -> ParsedCompletion:
    """Split a completion into its three segments and judge format validity.

    Deterministic and total: identical input yields an identical result,
    and no input raises.
    """
    counts_ok = all(
        completion.count(f"<{name}>") == 1 and completion.count(f"</{name}>") == 1
        for name in TAG_NAMES
    )
    if counts_ok:
        match = _VALID_RE.fullmatch(completion)
        if match is not None:
            confidence = parse_confidence(match.group(3))
            if confidence is not None:
                return ParsedCompletion(
                    think=match.group(1),
                    answer=match.group(2),
                    confidence=confidence,
                    format_valid=True,
                    think_span=match.span(1),
                )

    # Invalid: recover what we can from the first block of each tag.
    think_match = _RECOVER_RES["think"].search(completion)
    answer_match = _RECOVER_RES["answer"].search(completion)
    conf_match = _RECOVER_RES["confidence"].search(completion)
    return ParsedCompletion(
        think=think_match.group(1) if think_match else None,
        answer=answer_match.group(1) if answer_match else None,
        confidence=parse_confidence(conf_match.group(1)) if conf_match else None,
        format_valid=False,
        think_span=think_match.span(1) if think_match else None,
    )


def render_completion(think: str, answer: str, confidence: float) -> str:
    """Render segments back into the canonical template. Re-parsing the
    result reproduces the fields exactly (round-trip property)."""
    return (
        f"<think>{think}</think>"
        f"<answer>{answer}</answer>"
        f"<confidence>{confidence!r}</confidence>"
    )


def think_token_indices(
    parsed: ParsedCompletion, trace: GenerationTrace
) -> list[int]:
    """Indices of tokens whose span intersects the <think> inner content.

    ``parsed`` must have come from ``trace.completion``. Ascending order;
    an empty think block intersects nothing.
    """
    if parsed.think_span is None:
        raise ValueError("no think span")
    lo, hi = parsed.think_span
    if lo >= hi:
        return []
    indices: list[int] = []
    for i, token in enumerate(trace.tokens):
        if token.char_start >= hi:
            break
        if token.char_end > lo:
            indices.append(i)
    return indices
