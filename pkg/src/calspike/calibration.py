"""Dataset-level evaluation metrics: accuracy, calibration error, ECE,
Brier score, format validity, and entropy statistics.

Binning for ECE uses M equal-width half-open intervals ((m-1)/M, m/M].
A confidence of exactly 0 falls in no half-open interval, so it is
assigned to bin 1 by convention. Bin membership is decided with exact
rational comparisons on the float's value, so the result never depends
on rounding luck at bin edges.

Samples whose confidence could not be parsed are excluded from the
calibration metrics (inventing a confidence for them would poison the
signal) but still count toward accuracy and format validity; the report
carries the exclusion count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .model import RewardBreakdown

__all__ = [
    "SampleOutcome",
    "BinStats",
    "CalibrationReport",
    "bin_index",
    "expected_calibration_error",
    "brier_score",
    "calibration_error",
    "build_report",
]


@dataclass(slots=True)
class SampleOutcome:
    """Per-sample evaluation record.

    ``confidence`` is None when the completion had no parseable
    confidence. ``mean_token_entropy`` is an optional diagnostic (the
    average token entropy of the sample's trace, nats) used for the
    report's entropy statistics.
    """

    confidence: float | None
    correct: bool
    sentence_entropy: float = 0.0
    spike_rate: float = 0.0
    format_valid: bool = True
    mean_token_entropy: float | None = None


@dataclass(slots=True)
class BinStats:
    """One confidence bin ((m-1)/M, m/M]: occupancy and per-bin means."""

    bin: int
    lo: float
    hi: float
    count: int
    mean_confidence: float | None
    accuracy: float | None


@dataclass(slots=True)
class CalibrationReport:
    """Aggregate metrics over a scored dataset.

    Calibration fields are None when no sample had a parseable
    confidence; entropy fields are None when no entropy data was
    attached. ``mean_token_entropy``/``entropy_std`` are the mean and
    population std of the per-sample average token entropy, while
    ``mean_sentence_entropy`` averages the per-sample maxima - both are
    reported because either convention is defensible for "average
    entropy of the reasoning span".
    """

    n: int
    n_excluded: int
    accuracy: float
    calibration_error: float | None
    ece: float | None
    brier: float | None
    format_validity: float
    mean_token_entropy: float | None
    entropy_std: float | None
    mean_sentence_entropy: float | None
    mean_spike_rate: float | None
    bins: list[BinStats] = field(default_factory=list)


def bin_index(confidence: float, m_bins: int) -> int:
    """1-based bin of a confidence under ((m-1)/M, m/M] binning; c = 0
    goes to bin 1. Exact: uses the rational value of the float."""
    if m_bins < 1:
        raise ValueError("m_bins must be >= 1")
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence!r} outside [0, 1]")
    if confidence == 0.0:
        return 1
    return math.ceil(Fraction(confidence) * m_bins)


def _checked(samples: Sequence[SampleOutcome]) -> list[tuple[float, int]]:
    if len(samples) == 0:
        raise ValueError("no samples")
    pairs: list[tuple[float, int]] = []
    for s in samples:
        if s.confidence is None:
            raise ValueError("sample without parseable confidence")
        if not 0.0 <= s.confidence <= 1.0:
            raise ValueError(f"confidence {s.confidence!r} outside [0, 1]")
        pairs.append((s.confidence, 1 if s.correct else 0))
    return pairs


def expected_calibration_error(samples: Sequence[SampleOutcome], m_bins: int = 10) -> float:
    """ECE = sum_m (|B_m|/N) * |acc(B_m) - conf(B_m)| with M equal-width
    half-open bins; empty bins contribute 0."""
    pairs = _checked(samples)
    counts = [0] * (m_bins + 1)
    conf_sums = [0.0] * (m_bins + 1)
    correct_sums = [0] * (m_bins + 1)
    for c, y in pairs:
        m = bin_index(c, m_bins)
        counts[m] += 1
        conf_sums[m] += c
        correct_sums[m] += y
    n = len(pairs)
    ece = 0.0
    for m in range(1, m_bins + 1):
        if counts[m] == 0:
            continue
        acc = correct_sums[m] / counts[m]
        conf = conf_sums[m] / counts[m]
        ece += (counts[m] / n) * abs(acc - conf)
    return ece


def brier_score(samples: Sequence[SampleOutcome]) -> float:
    """Mean squared difference between confidence and 0/1 correctness."""
    pairs = _checked(samples)
    return sum((c - y) ** 2 for c, y in pairs) / len(pairs)


def calibration_error(samples: Sequence[SampleOutcome]) -> float:
    """Mean absolute difference between confidence and 0/1 correctness."""
    pairs = _checked(samples)
    return sum(abs(c - y) for c, y in pairs) / len(pairs)


def _bin_table(samples: Sequence[SampleOutcome], m_bins: int) -> list[BinStats]:
    counts = [0] * (m_bins + 1)
    conf_sums = [0.0] * (m_bins + 1)
    correct_sums = [0] * (m_bins + 1)
    for s in samples:
        m = bin_index(s.confidence, m_bins)
        counts[m] += 1
        conf_sums[m] += s.confidence
        correct_sums[m] += 1 if s.correct else 0
    table = []
    for m in range(1, m_bins + 1):
        c = counts[m]
        table.append(
            BinStats(
                bin=m,
                lo=(m - 1) / m_bins,
                hi=m / m_bins,
                count=c,
                mean_confidence=conf_sums[m] / c if c else None,
                accuracy=correct_sums[m] / c if c else None,
            )
        )
    return table


def build_report(
    samples: Sequence[SampleOutcome],
    breakdowns: Sequence[RewardBreakdown] | None = None,
    m_bins: int = 10,
) -> CalibrationReport:
    """Aggregate aligned per-sample outcomes (and optionally their reward
    breakdowns, preferred for the entropy statistics) into one report."""
    n = len(samples)
    if n == 0:
        raise ValueError("no samples")
    if breakdowns is not None:
        if len(breakdowns) != n:
            raise ValueError("samples and breakdowns must be aligned")
        for s, b in zip(samples, breakdowns):
            if s.correct != b.correct:
                raise ValueError("samples and breakdowns disagree; misaligned input?")

    accuracy = sum(1 for s in samples if s.correct) / n
    format_validity = sum(1 for s in samples if s.format_valid) / n
    with_conf = [s for s in samples if s.confidence is not None]
    n_excluded = n - len(with_conf)

    if with_conf:
        cal = calibration_error(with_conf)
        ece = expected_calibration_error(with_conf, m_bins)
        brier = brier_score(with_conf)
        bins = _bin_table(with_conf, m_bins)
    else:
        cal = ece = brier = None
        bins = _bin_table([], m_bins)

    if breakdowns is not None:
        sentence = [b.sentence_entropy for b in breakdowns]
        spikes = [b.spike_rate for b in breakdowns]
    else:
        sentence = [s.sentence_entropy for s in samples]
        spikes = [s.spike_rate for s in samples]
    token_means = [
        s.mean_token_entropy for s in samples if s.mean_token_entropy is not None
    ]

    return CalibrationReport(
        n=n,
        n_excluded=n_excluded,
        accuracy=accuracy,
        calibration_error=cal,
        ece=ece,
        brier=brier,
        format_validity=format_validity,
        mean_token_entropy=float(np.mean(token_means)) if token_means else None,
        entropy_std=float(np.std(token_means)) if token_means else None,
        mean_sentence_entropy=float(np.mean(sentence)) if sentence else None,
        mean_spike_rate=float(np.mean(spikes)) if spikes else None,
        bins=bins,
    )
