"""Scoring as a long-lived newline-delimited JSON service.

One request per line, one response per line. Requests carry the trace
fields inline plus an optional ``params`` object with per-request
overrides:

    {"v": 1, "id": "t1", "completion": "...", "ground_truth": "...",
     "tokens": [...], "params": {"lambda": 0.0, "confidence_reward": false}}

Responses are ``{"v": 1, "id": ..., "ok": true, "reward": {...}}`` or,
on failure, ``{"v": 1, "id": ..., "ok": false, "error": {"code": ...,
"message": ...}}`` with ``id`` null when the request line could not be
parsed at all. Responses may be written in any order; each one is a
single complete line. End of input drains in-flight work and exits.

Scoring is stateless, so requests are fanned out to a worker pool and a
lock serializes writes.
"""

from __future__ import annotations

import json
import socketserver
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Any

from .jsonl import SchemaError, dumps, error_line, response_line, trace_from_dict
from .model import RewardParams, TraceValidationError
from .rewards import score
from . import jsonl

ERR_PARSE = "PARSE"
ERR_SCHEMA = "SCHEMA"
ERR_INVALID_TRACE = "INVALID_TRACE"
ERR_INTERNAL = "INTERNAL"


@dataclass(slots=True)
class ServiceConfig:
    """Startup defaults; per-request params may override the reward knobs."""

    params: RewardParams = field(default_factory=RewardParams)
    workers: int = 4
    confidence_enabled: bool = True
    entropy_enabled: bool = True


def apply_overrides(
    config: ServiceConfig, overrides: Any
) -> tuple[RewardParams, bool, bool]:
    """Effective (params, confidence_enabled, entropy_enabled) for a request.

    Recognized override keys: ``lambda``, ``tau``, ``top_k``,
    ``confidence_reward``, ``entropy_reward``. Anything else is ignored.
    """
    params = config.params
    confidence = config.confidence_enabled
    entropy = config.entropy_enabled
    if overrides is None:
        return params, confidence, entropy
    if not isinstance(overrides, dict):
        raise SchemaError("params: expected a JSON object")

    def number(key: str) -> float:
        value = overrides[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"params: {key} must be a number")
        return float(value)

    changes: dict[str, Any] = {}
    if "lambda" in overrides:
        changes["spike_scale"] = number("lambda")
    if "tau" in overrides:
        changes["spike_threshold"] = number("tau")
    if "top_k" in overrides:
        top_k = overrides["top_k"]
        if isinstance(top_k, bool) or not isinstance(top_k, int):
            raise SchemaError("params: top_k must be an integer")
        changes["top_k"] = top_k
    if changes:
        params = replace(params, **changes)
        try:
            params.validate()
        except ValueError as exc:
            raise SchemaError(f"params: {exc}") from exc
    for key in ("confidence_reward", "entropy_reward"):
        if key in overrides:
            value = overrides[key]
            if not isinstance(value, bool):
                raise SchemaError(f"params: {key} must be a boolean")
            if key == "confidence_reward":
                confidence = value
            else:
                entropy = value
    return params, confidence, entropy


def handle_request_line(raw: str, config: ServiceConfig) -> dict[str, Any]:
    """Turn one request line into one response document. Never raises."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        return error_line(None, ERR_PARSE, f"invalid JSON: {exc}")
    if not isinstance(obj, dict):
        return error_line(None, ERR_PARSE, "request must be a JSON object")

    request_id = obj.get("id")
    if not isinstance(request_id, str) or not request_id:
        return error_line(None, ERR_SCHEMA, "id must be a non-empty string")
    try:
        trace = trace_from_dict(obj)
        params, confidence_enabled, entropy_enabled = apply_overrides(
            config, obj.get("params")
        )
    except SchemaError as exc:
        return error_line(request_id, ERR_SCHEMA, str(exc))

    try:
        breakdown = score(
            trace,
            params,
            confidence_enabled=confidence_enabled,
            entropy_enabled=entropy_enabled,
        )
    except TraceValidationError as exc:
        return error_line(request_id, ERR_INVALID_TRACE, str(exc))
    except Exception as exc:  # pragma: no cover - defensive catch-all
        return error_line(request_id, ERR_INTERNAL, f"{type(exc).__name__}: {exc}")
    return response_line(request_id, breakdown)


def serve_stream(reader: IO[str], writer: IO[str], config: ServiceConfig) -> None:
    """Serve one connection until the input stream ends.

    Requests are processed concurrently; every response is written and
    flushed as one line under a lock, so lines never interleave.
    """
    write_lock = threading.Lock()

    def respond(raw: str) -> None:
        doc = handle_request_line(raw, config)
        line = dumps(doc) + "\n"
        with write_lock:
            writer.write(line)
            writer.flush()

    workers = max(1, config.workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for raw in reader:
            if raw.strip():
                pool.submit(respond, raw)
    # Leaving the pool context joins the workers: in-flight requests
    # finish and their responses land before shutdown.


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:  # pragma: no cover - exercised over TCP in tests
        reader = jsonl.io_text(self.rfile, write=False)
        writer = jsonl.io_text(self.wfile, write=True)
        serve_stream(reader, writer, self.server.config)  # type: ignore[attr-defined]
        writer.flush()


class RewardServer(socketserver.ThreadingTCPServer):
    """TCP transport: each connection gets an independent NDJSON stream."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], config: ServiceConfig):
        super().__init__(address, _Handler)
        self.config = config


def serve_tcp(host: str, port: int, config: ServiceConfig) -> None:
    """Listen and serve until interrupted."""
    with RewardServer((host, port), config) as server:
        server.serve_forever()
