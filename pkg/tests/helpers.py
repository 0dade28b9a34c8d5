"""Shared trace builders for the test suite."""

from __future__ import annotations

from typing import Sequence

from calspike.model import GenerationTrace, TokenRecord
from calspike.synth import probs_for_entropy

UNIFORM5 = (0.2, 0.2, 0.2, 0.2, 0.2)


def split_spans(length: int, n_tokens: int) -> list[tuple[int, int]]:
    """n contiguous spans tiling [0, length), each at least one char wide."""
    if not 1 <= n_tokens <= length:
        raise ValueError(f"need 1 <= n_tokens <= {length}, got {n_tokens}")
    base, extra = divmod(length, n_tokens)
    spans = []
    start = 0
    for i in range(n_tokens):
        width = base + (1 if i < extra else 0)
        spans.append((start, start + width))
        start += width
    return spans


def make_trace(
    completion: str,
    *,
    n_tokens: int = 8,
    probs: Sequence[float] | Sequence[Sequence[float]] = UNIFORM5,
    trace_id: str = "t1",
    ground_truth: str = "4",
) -> GenerationTrace:
    """A valid trace over ``completion`` with evenly chunked token spans.

    ``probs`` is either one distribution applied to every token or one
    distribution per token.
    """
    spans = split_spans(len(completion), n_tokens)
    if probs and isinstance(probs[0], (int, float)):
        per_token = [tuple(float(p) for p in probs)] * n_tokens
    else:
        per_token = [tuple(float(p) for p in dist) for dist in probs]
        if len(per_token) != n_tokens:
            raise ValueError("one distribution per token required")
    tokens = tuple(
        TokenRecord(completion[s:e], s, e, per_token[i])
        for i, (s, e) in enumerate(spans)
    )
    return GenerationTrace(
        id=trace_id, completion=completion, tokens=tokens, ground_truth=ground_truth
    )


def entropy_probs(entropies: Sequence[float], k: int = 5) -> list[tuple[float, ...]]:
    """One top-k distribution per target entropy value."""
    return [probs_for_entropy(h, k) for h in entropies]


def canonical(think: str, answer: str, confidence: str) -> str:
    """The three-tag template with raw string contents."""
    return (
        f"<think>{think}</think>"
        f"<answer>{answer}</answer>"
        f"<confidence>{confidence}</confidence>"
    )
