"""On-disk and on-wire JSON schemas.

Trace lines (the authoritative ingest format, also emitted by synth):

    {"id": str, "completion": str, "ground_truth": str,
     "tokens": [{"text": str, "span": [start, end], "p": [k floats]}]}

Unknown keys are ignored on read and never emitted, so producers may
attach extras (synth attaches its labels under "synth"). Floats are
serialized with Python's shortest round-trip repr, which decodes back to
the identical double, satisfying the schema's precision requirement.

Score lines (cmd_score output, superset of the service's response body):

    {"v": 1, "id": str, "ok": true, "reward": {...}, "outcome": {...}}
    {"v": 1, "id": str|null, "ok": false, "error": {"code": str, "message": str}}
"""

from __future__ import annotations

import io
import json
import sys
from typing import Any, IO, Iterator

from .calibration import BinStats, CalibrationReport, SampleOutcome
from .model import GenerationTrace, RewardBreakdown, TokenRecord
from .rewards import ScoreResult

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A JSON document does not match the expected schema."""


def dumps(obj: dict[str, Any]) -> str:
    """One compact JSON document, no trailing newline."""
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def trace_to_dict(trace: GenerationTrace) -> dict[str, Any]:
    return {
        "id": trace.id,
        "completion": trace.completion,
        "ground_truth": trace.ground_truth,
        "tokens": [
            {"text": t.text, "span": [t.char_start, t.char_end], "p": list(t.top_k_probs)}
            for t in trace.tokens
        ],
    }


def _expect(obj: dict[str, Any], key: str, kind: type, where: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def trace_from_dict(obj: dict[str, Any]) -> GenerationTrace:
    """Decode one trace object; unknown keys are ignored."""
    if not isinstance(obj, dict):
        raise SchemaError("trace: expected a JSON object")
    trace_id = _expect(obj, "id", str, "trace")
    completion = _expect(obj, "completion", str, "trace")
    ground_truth = _expect(obj, "ground_truth", str, "trace")
    raw_tokens = _expect(obj, "tokens", list, "trace")
    tokens = []
    for i, item in enumerate(raw_tokens):
        where = f"tokens[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{where}: expected an object")
        text = _expect(item, "text", str, where)
        span = _expect(item, "span", list, where)
        if len(span) != 2 or not all(isinstance(x, int) for x in span):
            raise SchemaError(f"{where}: span must be [start, end] integers")
        probs = _expect(item, "p", list, where)
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in probs):
            raise SchemaError(f"{where}: p must be a list of numbers")
        tokens.append(TokenRecord(text, span[0], span[1], tuple(float(x) for x in probs)))
    return GenerationTrace(
        id=trace_id, completion=completion, tokens=tuple(tokens), ground_truth=ground_truth
    )


def breakdown_to_dict(b: RewardBreakdown) -> dict[str, Any]:
    return {
        "r_confidence": b.r_confidence,
        "r_entropy": b.r_entropy,
        "r_format": b.r_format,
        "r_total": b.r_total,
        "correct": b.correct,
        "z_max": b.z_max,
        "spike_rate": b.spike_rate,
        "sentence_entropy": b.sentence_entropy,
    }


def breakdown_from_dict(obj: dict[str, Any]) -> RewardBreakdown:
    if not isinstance(obj, dict):
        raise SchemaError("reward: expected a JSON object")

    def opt(key: str) -> float | None:
        value = obj[key]
        return None if value is None else float(value)

    try:
        return RewardBreakdown(
            r_confidence=opt("r_confidence"),
            r_entropy=opt("r_entropy"),
            r_format=float(obj["r_format"]),
            r_total=float(obj["r_total"]),
            correct=bool(obj["correct"]),
            z_max=float(obj["z_max"]),
            spike_rate=float(obj["spike_rate"]),
            sentence_entropy=float(obj["sentence_entropy"]),
        )
    except KeyError as exc:
        raise SchemaError(f"reward: missing field {exc.args[0]!r}") from exc


def response_line(trace_id: str, breakdown: RewardBreakdown) -> dict[str, Any]:
    """Service response body: reward only, no diagnostics."""
    return {
        "v": SCHEMA_VERSION,
        "id": trace_id,
        "ok": True,
        "reward": breakdown_to_dict(breakdown),
    }


def score_line(trace_id: str, result: ScoreResult) -> dict[str, Any]:
    """Full per-trace record: reward breakdown plus outcome diagnostics."""
    profile = result.profile
    n = len(profile.token_entropies)
    mean_token_entropy = sum(profile.token_entropies) / n if n else None
    return {
        "v": SCHEMA_VERSION,
        "id": trace_id,
        "ok": True,
        "reward": breakdown_to_dict(result.breakdown),
        "outcome": {
            "confidence": result.parsed.confidence,
            "correct": result.breakdown.correct,
            "format_valid": result.parsed.format_valid,
            "sentence_entropy": result.breakdown.sentence_entropy,
            "spike_rate": result.breakdown.spike_rate,
            "mean_token_entropy": mean_token_entropy,
            "n_tokens": n,
        },
    }


def error_line(trace_id: str | None, code: str, message: str) -> dict[str, Any]:
    return {
        "v": SCHEMA_VERSION,
        "id": trace_id,
        "ok": False,
        "error": {"code": code, "message": message},
    }


def outcome_from_score_line(obj: dict[str, Any]) -> tuple[SampleOutcome, RewardBreakdown]:
    """Decode one ok score line back into (SampleOutcome, RewardBreakdown)."""
    outcome = _expect(obj, "outcome", dict, "score line")
    reward = _expect(obj, "reward", dict, "score line")
    breakdown = breakdown_from_dict(reward)
    sample = SampleOutcome(
        confidence=outcome.get("confidence"),
        correct=bool(outcome.get("correct", breakdown.correct)),
        sentence_entropy=float(outcome.get("sentence_entropy", 0.0)),
        spike_rate=float(outcome.get("spike_rate", 0.0)),
        format_valid=bool(outcome.get("format_valid", False)),
        mean_token_entropy=outcome.get("mean_token_entropy"),
    )
    return sample, breakdown


def report_to_dict(report: CalibrationReport) -> dict[str, Any]:
    return {
        "v": SCHEMA_VERSION,
        "n": report.n,
        "n_excluded": report.n_excluded,
        "accuracy": report.accuracy,
        "calibration_error": report.calibration_error,
        "ece": report.ece,
        "brier": report.brier,
        "format_validity": report.format_validity,
        "mean_token_entropy": report.mean_token_entropy,
        "entropy_std": report.entropy_std,
        "mean_sentence_entropy": report.mean_sentence_entropy,
        "mean_spike_rate": report.mean_spike_rate,
        "bins": [
            {
                "bin": b.bin,
                "lo": b.lo,
                "hi": b.hi,
                "count": b.count,
                "mean_confidence": b.mean_confidence,
                "accuracy": b.accuracy,
            }
            for b in report.bins
        ],
    }


def open_input(path: str) -> IO[str]:
    if path == "-":
        return sys.stdin
    return open(path, "r", encoding="utf-8")


def open_output(path: str) -> IO[str]:
    if path == "-":
        return sys.stdout
    return open(path, "w", encoding="utf-8")


def io_text(stream: IO[bytes], *, write: bool = False) -> IO[str]:
    """UTF-8 text view over a binary stream (e.g. socket file objects)."""
    return io.TextIOWrapper(stream, encoding="utf-8", newline="", write_through=write)


def iter_lines(handle: IO[str]) -> Iterator[tuple[int, str]]:
    """(1-based line number, line) pairs, skipping blank lines."""
    for line_no, line in enumerate(handle, 1):
        stripped = line.strip()
        if stripped:
            yield line_no, stripped
