"""Token-entropy profile of a trace: Shannon entropies, per-sequence
z-scores, and the spike statistics used by the reward.

Conventions, fixed for reproducibility:

* Entropies are in nats (natural log), so the uniform top-k bound is ln k.
* The entropy of each token is the literal sum over the logged top-k
  terms, with no renormalization; 0-probability terms contribute 0.
* z-score statistics (mean and population standard deviation, divide-by-n)
  are taken over the whole sequence's token entropies, while the reported
  extremes (z_max, sentence_entropy, spike_rate) are restricted to the
  think span. ``stats_over_think_only`` switches the statistics to the
  think span as well, for comparison runs.
* Degenerate sequences (fewer than 2 tokens, or zero deviation) get
  z = 0 everywhere: constant entropy is maximally stable, never NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import GenerationTrace, RewardParams


@dataclass(slots=True)
class EntropyProfile:
    """Per-token entropies and z-scores plus think-span summary stats."""

    token_entropies: tuple[float, ...]
    z_scores: tuple[float, ...]
    z_max: float
    sentence_entropy: float
    spike_rate: float


def token_entropy(top_k_probs: Sequence[float]) -> float:
    """Shannon entropy -sum(p * ln p) over exactly the given terms (nats).

    Accepts p = 0 with the standard 0 * ln 0 := 0 convention; rejects
    values outside [0, 1] and empty lists.
    """
    if len(top_k_probs) == 0:
        raise ValueError("no probabilities")
    total = 0.0
    for p in top_k_probs:
        if not 0.0 <= p <= 1.0:  # also rejects NaN
            raise ValueError(f"probability {p!r} outside [0, 1]")
        if p > 0.0:
            total -= p * math.log(p)
    return total


def entropy_matrix(probs: np.ndarray) -> np.ndarray:
    """Vectorized token_entropy over an (n, k) probability matrix."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0.0, probs * np.log(probs), 0.0)
    return -terms.sum(axis=1)


def sequence_zscores(entropies: np.ndarray, stat_indices: np.ndarray | None = None) -> np.ndarray:
    """z-score of each entropy against the sequence mean/population sigma.

    ``stat_indices`` restricts which tokens the statistics are computed
    from (the scores themselves are still produced for every token).
    Returns all zeros when fewer than 2 statistic tokens exist or the
    deviation is exactly 0.
    """
    pool = entropies if stat_indices is None else entropies[stat_indices]
    if pool.size < 2:
        return np.zeros_like(entropies)
    if np.all(pool == pool.flat[0]):
        # A constant pool has zero deviation by definition. Computing it
        # anyway can leave ~1-ulp residue from the float mean, which would
        # standardize the residue itself into z = +/-1.
        return np.zeros_like(entropies)
    mu = pool.mean()
    sigma = pool.std()  # population (divide-by-n)
    if sigma == 0.0:
        return np.zeros_like(entropies)
    return (entropies - mu) / sigma


def profile_from_entropies(
    entropies: Sequence[float],
    think_indices: Sequence[int],
    params: RewardParams,
    stats_over_think_only: bool = False,
) -> EntropyProfile:
    """Build an EntropyProfile from an already-computed entropy sequence."""
    ent = np.asarray(entropies, dtype=np.float64)
    idx = np.asarray(think_indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= ent.size):
        raise ValueError("think index out of range")
    z = sequence_zscores(ent, idx if stats_over_think_only else None)
    if idx.size:
        z_think = z[idx]
        z_max = float(z_think.max())
        sentence_entropy = float(ent[idx].max())
        spike_rate = float((z_think > params.spike_threshold).sum() / idx.size)
    else:
        z_max = 0.0
        sentence_entropy = 0.0
        spike_rate = 0.0
    return EntropyProfile(
        token_entropies=tuple(ent.tolist()),
        z_scores=tuple(z.tolist()),
        z_max=z_max,
        sentence_entropy=sentence_entropy,
        spike_rate=spike_rate,
    )


def analyze(
    trace: GenerationTrace,
    think_indices: Sequence[int],
    params: RewardParams,
    stats_over_think_only: bool = False,
) -> EntropyProfile:
    """Entropy profile of a validated trace, restricted to ``think_indices``
    for the summary statistics."""
    if not trace.tokens:
        return EntropyProfile((), (), 0.0, 0.0, 0.0)
    probs = np.array([t.top_k_probs for t in trace.tokens], dtype=np.float64)
    entropies = entropy_matrix(probs)
    return profile_from_entropies(entropies, think_indices, params, stats_over_think_only)
