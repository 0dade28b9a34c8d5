"""Deterministic oracle-labeled synthetic traces.

Each trace is a templated three-tag completion (or a deliberately
malformed one) whose per-token top-k distributions realize a target
entropy sequence: Gaussian baseline noise plus injected spikes at known
positions. Because the labels (spike positions, correctness, stated
confidence) are known by construction, these fixtures validate the
detector and the whole scoring pipeline without any model.

The target entropy for one token is realized with a one-parameter tilted
family between the one-hot and uniform distributions over k outcomes:

    p(theta) = (1 - theta + theta/k, theta/k, ..., theta/k)

whose entropy rises monotonically from 0 to ln k, so a bisection on
theta inverts it. The pseudo-random source is numpy's PCG64 (named,
seedable, portable); its identifier travels with the labels so fixtures
can be regenerated bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .entropy import token_entropy
from .model import GenerationTrace, TokenRecord

RNG_ALGORITHM = "numpy.random.PCG64"
BISECTION_TOL = 1e-9
ENTROPY_REALIZATION_TOL = 1e-6

_FILLER_VOCAB = (
    "add ", "then ", "carry ", "sum ", "shift ", "half ",
    "twice ", "minus ", "check ", "step ",
)


@dataclass(slots=True)
class SyntheticSpec:
    """Parameters for one synthetic trace."""

    seed: int
    n_tokens: int = 100
    top_k: int = 5
    baseline_entropy_mean: float = 0.8
    baseline_entropy_sd: float = 0.08
    spike_positions: tuple[int, ...] = ()
    spike_magnitude_sd: float = 6.0  # in units of the baseline sd
    answer_correct: bool = True
    stated_confidence: float = 0.9
    malformed: bool = False


@dataclass(slots=True)
class SynthLabels:
    """Ground-truth labels for a generated trace."""

    spike_positions: tuple[int, ...]
    correct: bool
    confidence: float
    malformed: bool
    think_token_range: tuple[int, int]  # half-open [start, end) of filler tokens
    seed: int
    rng: str = RNG_ALGORITHM

    def to_dict(self) -> dict[str, Any]:
        return {
            "spike_positions": list(self.spike_positions),
            "correct": self.correct,
            "confidence": self.confidence,
            "malformed": self.malformed,
            "think_token_range": list(self.think_token_range),
            "seed": self.seed,
            "rng": self.rng,
        }


def probs_for_entropy(target: float, k: int) -> tuple[float, ...]:
    """Top-k distribution (descending) whose entropy is ``target`` nats,
    to within 1e-6. Bisection on the tilted family's parameter."""
    if k < 2:
        raise ValueError("k must be >= 2 to hit a nonzero entropy target")
    if not 0.0 < target < math.log(k):
        raise ValueError(f"target entropy {target!r} outside (0, ln {k})")

    def dist(theta: float) -> tuple[float, ...]:
        tail = theta / k
        return (1.0 - theta + tail,) + (tail,) * (k - 1)

    lo, hi = 0.0, 1.0
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if token_entropy(dist(mid)) < target:
            lo = mid
        else:
            hi = mid
    return dist(0.5 * (lo + hi))


def _filler_count(n_tokens: int, malformed: bool) -> int:
    """Number of filler tokens inside <think>, given the template overhead
    (5 structural tokens when the confidence block is dropped, 8 otherwise)."""
    overhead = 5 if malformed else 8
    n_fillers = n_tokens - overhead
    if n_fillers < 1:
        raise ValueError(
            f"n_tokens={n_tokens} too small for the template (needs >= {overhead + 1})"
        )
    return n_fillers


def generate(spec: SyntheticSpec) -> tuple[GenerationTrace, SynthLabels]:
    """Deterministically generate one oracle-labeled trace.

    Identical specs produce byte-identical traces. Raises ValueError when
    a target entropy (baseline draw plus spike) leaves (0, ln k) or the
    spec is inconsistent.
    """
    for pos in spec.spike_positions:
        if not 0 <= pos < spec.n_tokens:
            raise ValueError(f"spike position {pos} out of range")
    if not 0.0 < spec.baseline_entropy_mean < math.log(spec.top_k):
        raise ValueError("baseline entropy mean must lie in (0, ln k)")
    if not 0.0 <= spec.stated_confidence <= 1.0:
        raise ValueError("stated_confidence must lie in [0, 1]")

    rng = np.random.Generator(np.random.PCG64(spec.seed))

    answer_value = int(rng.integers(0, 100))
    answer = str(answer_value)
    ground_truth = answer if spec.answer_correct else str(answer_value + 1)
    confidence_text = repr(float(spec.stated_confidence))

    n_fillers = _filler_count(spec.n_tokens, spec.malformed)
    fillers = [
        _FILLER_VOCAB[int(i)] for i in rng.integers(0, len(_FILLER_VOCAB), n_fillers)
    ]
    texts = ["<think>", *fillers, "</think>", "<answer>", answer, "</answer>"]
    if not spec.malformed:
        texts += ["<confidence>", confidence_text, "</confidence>"]
    assert len(texts) == spec.n_tokens

    targets = rng.normal(
        spec.baseline_entropy_mean, spec.baseline_entropy_sd, spec.n_tokens
    )
    for pos in spec.spike_positions:
        targets[pos] += spec.spike_magnitude_sd * spec.baseline_entropy_sd

    tokens: list[TokenRecord] = []
    cursor = 0
    for text, target in zip(texts, targets):
        probs = probs_for_entropy(float(target), spec.top_k)
        end = cursor + len(text)
        tokens.append(TokenRecord(text, cursor, end, probs))
        cursor = end

    trace = GenerationTrace(
        id=f"synth-{spec.seed}",
        completion="".join(texts),
        tokens=tuple(tokens),
        ground_truth=ground_truth,
    )
    labels = SynthLabels(
        spike_positions=tuple(spec.spike_positions),
        correct=spec.answer_correct,
        confidence=float(spec.stated_confidence),
        malformed=spec.malformed,
        think_token_range=(1, 1 + n_fillers),
        seed=spec.seed,
    )
    return trace, labels


def make_corpus_specs(
    seed: int,
    count: int,
    *,
    n_tokens: int = 100,
    top_k: int = 5,
    baseline_entropy_mean: float = 0.8,
    baseline_entropy_sd: float = 0.08,
    spike_magnitude_sd: float = 6.0,
    spike_fraction: float = 0.5,
    incorrect_fraction: float = 0.3,
    malformed_fraction: float = 0.1,
) -> list[SyntheticSpec]:
    """A deterministic mixed corpus: some traces with one injected spike
    (at a random think-span position), some incorrect, some malformed,
    with varied stated confidences. Per-trace seeds are seed+i."""
    policy = np.random.Generator(np.random.PCG64(seed))
    specs = []
    for i in range(count):
        malformed = bool(policy.random() < malformed_fraction)
        n_fillers = _filler_count(n_tokens, malformed)
        spiked = policy.random() < spike_fraction
        spike_pos = int(policy.integers(1, 1 + n_fillers)) if spiked else None
        specs.append(
            SyntheticSpec(
                seed=seed + i,
                n_tokens=n_tokens,
                top_k=top_k,
                baseline_entropy_mean=baseline_entropy_mean,
                baseline_entropy_sd=baseline_entropy_sd,
                spike_positions=(spike_pos,) if spike_pos is not None else (),
                spike_magnitude_sd=spike_magnitude_sd,
                answer_correct=bool(policy.random() >= incorrect_fraction),
                stated_confidence=round(float(policy.uniform(0.05, 0.95)), 2),
                malformed=malformed,
            )
        )
    return specs
