"""Batch command line interface over JSONL files.

Subcommands: score, report, detect, synth, serve. Exit codes: 0 success
(including runs with per-line error records), 1 usage, 2 I/O or
unusable input, 3 internal error.

Every flag can be seeded from the environment with the CALSPIKE_ prefix
(``--top-k`` -> ``CALSPIKE_TOP_K``); an explicit flag wins.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Iterator, Sequence

from . import __version__
from .calibration import CalibrationReport, build_report
from .entropy import analyze
from .jsonl import (
    SchemaError,
    dumps,
    error_line,
    iter_lines,
    open_input,
    open_output,
    outcome_from_score_line,
    report_to_dict,
    score_line,
    trace_from_dict,
    trace_to_dict,
)
from .model import RewardParams, TraceValidationError, validate_trace
from .parsing import parse_completion, think_token_indices
from .rewards import score_detailed
from .service import ERR_INTERNAL, ERR_INVALID_TRACE, ERR_PARSE, ERR_SCHEMA, RewardServer, ServiceConfig, serve_stream
from .synth import SyntheticSpec, generate, make_corpus_specs

ENV_PREFIX = "CALSPIKE_"


class UsageError(Exception):
    """Bad flags, bad environment overrides, or unusable parameters."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract here is 1.
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _env_raw(name: str) -> str | None:
    value = os.environ.get(ENV_PREFIX + name)
    return value if value else None


def _env_float(name: str, fallback: float) -> float:
    raw = _env_raw(name)
    if raw is None:
        return fallback
    try:
        return float(raw)
    except ValueError:
        raise UsageError(f"{ENV_PREFIX}{name}: not a number: {raw!r}") from None


def _env_int(name: str, fallback: int) -> int:
    raw = _env_raw(name)
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{ENV_PREFIX}{name}: not an integer: {raw!r}") from None


def _env_str(name: str, fallback: str | None) -> str | None:
    raw = _env_raw(name)
    return fallback if raw is None else raw


def _env_flag(name: str) -> bool:
    raw = _env_raw(name)
    if raw is None:
        return False
    if raw.lower() in ("1", "true", "yes", "on"):
        return True
    if raw.lower() in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{ENV_PREFIX}{name}: not a boolean: {raw!r}")


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--lambda", dest="lambda_", type=float, metavar="X",
        default=_env_float("LAMBDA", 1.0),
        help="weight of the entropy spike penalty (default 1.0)",
    )
    _add_tau_flag(p)
    _add_top_k_flag(p)


def _add_tau_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--tau", type=float, metavar="X", default=_env_float("TAU", 1.5),
        help="z-score threshold above which a token counts as a spike (default 1.5)",
    )


def _add_top_k_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--top-k", dest="top_k", type=int, metavar="K",
        default=_env_int("TOP_K", 5),
        help="expected probabilities per token (default 5)",
    )


def _add_ablation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--no-confidence-reward", action="store_true",
        default=_env_flag("NO_CONFIDENCE_REWARD"),
        help="disable the confidence component (reported as null)",
    )
    p.add_argument(
        "--no-entropy-reward", action="store_true",
        default=_env_flag("NO_ENTROPY_REWARD"),
        help="disable the entropy penalty (reported as null)",
    )


def _add_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--input", default=_env_str("INPUT", "-"), metavar="PATH",
        help="input JSONL path, or - for stdin (default)",
    )
    p.add_argument(
        "--output", default=_env_str("OUTPUT", "-"), metavar="PATH",
        help="output path, or - for stdout (default)",
    )


def _add_workers_flag(p: argparse.ArgumentParser, fallback: int) -> None:
    p.add_argument(
        "--workers", type=int, metavar="N",
        default=_env_int("WORKERS", fallback),
        help=f"concurrent scoring workers (default {fallback})",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="calspike",
        description="Score LLM reasoning traces for confidence calibration "
                    "and entropy spikes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_score = sub.add_parser(
        "score", help="score traces; one reward record per input line",
    )
    _add_param_flags(p_score)
    _add_ablation_flags(p_score)
    _add_io_flags(p_score)
    _add_workers_flag(p_score, 1)
    p_score.set_defaults(func=cmd_score)

    p_report = sub.add_parser(
        "report", help="aggregate score output into a calibration report",
    )
    p_report.add_argument(
        "--bins", type=int, metavar="M", default=_env_int("BINS", 10),
        help="confidence bins for ECE and the bin table (default 10)",
    )
    p_report.add_argument(
        "--format", choices=("json", "csv", "text"),
        default=_env_str("FORMAT", "json"),
        help="report rendering (default json)",
    )
    p_report.add_argument(
        "--figures", metavar="DIR", default=_env_str("FIGURES", None),
        help="also render reliability and entropy figures into DIR",
    )
    _add_io_flags(p_report)
    p_report.set_defaults(func=cmd_report)

    p_detect = sub.add_parser(
        "detect", help="list entropy spikes per trace",
    )
    _add_tau_flag(p_detect)
    _add_top_k_flag(p_detect)
    _add_io_flags(p_detect)
    p_detect.set_defaults(func=cmd_detect)

    p_synth = sub.add_parser(
        "synth", help="generate labeled synthetic trace fixtures",
    )
    p_synth.add_argument("--seed", type=int, default=_env_int("SEED", 0))
    p_synth.add_argument("--count", type=int, default=_env_int("COUNT", 10))
    p_synth.add_argument("--n-tokens", dest="n_tokens", type=int,
                         default=_env_int("N_TOKENS", 100))
    _add_top_k_flag(p_synth)
    p_synth.add_argument("--spike-fraction", type=float, default=0.5)
    p_synth.add_argument("--incorrect-fraction", type=float, default=0.3)
    p_synth.add_argument("--malformed-fraction", type=float, default=0.1)
    p_synth.add_argument(
        "--spec-file", metavar="PATH",
        help="JSON corpus policy object, or a list of per-trace specs; "
             "overrides the generation flags",
    )
    p_synth.add_argument(
        "--output", default=_env_str("OUTPUT", "-"), metavar="PATH",
        help="output path, or - for stdout (default)",
    )
    p_synth.set_defaults(func=cmd_synth)

    p_serve = sub.add_parser(
        "serve", help="run the scoring service over stdio or a TCP socket",
    )
    _add_param_flags(p_serve)
    _add_ablation_flags(p_serve)
    _add_workers_flag(p_serve, 4)
    transport = p_serve.add_mutually_exclusive_group()
    transport.add_argument(
        "--stdio", action="store_true",
        help="serve newline-delimited JSON on stdin/stdout (default)",
    )
    transport.add_argument(
        "--listen", metavar="[HOST:]PORT", default=_env_str("LISTEN", None),
        help="listen on a TCP socket instead of stdio",
    )
    p_serve.set_defaults(func=cmd_serve)

    return parser


def _params_from_args(args: argparse.Namespace) -> RewardParams:
    params = RewardParams(
        spike_scale=getattr(args, "lambda_", 1.0),
        spike_threshold=args.tau,
        top_k=args.top_k,
    )
    try:
        params.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return params


@contextlib.contextmanager
def _open_pair(input_path: str, output_path: str):
    fin = open_input(input_path)
    try:
        fout = open_output(output_path)
    except OSError:
        if fin is not sys.stdin:
            fin.close()
        raise
    try:
        yield fin, fout
    finally:
        if fout is not sys.stdout:
            fout.close()
        elif hasattr(fout, "flush"):
            fout.flush()
        if fin is not sys.stdin:
            fin.close()


def _load_trace(line_no: int, raw: str) -> tuple[Any, dict[str, Any] | None]:
    """(trace, None) on success, (None, error document) otherwise."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        return None, error_line(None, ERR_PARSE, f"line {line_no}: {exc}")
    if not isinstance(obj, dict):
        return None, error_line(None, ERR_PARSE, f"line {line_no}: not an object")
    raw_id = obj.get("id")
    trace_id = raw_id if isinstance(raw_id, str) and raw_id else None
    try:
        return trace_from_dict(obj), None
    except SchemaError as exc:
        return None, error_line(trace_id, ERR_SCHEMA, f"line {line_no}: {exc}")


def cmd_score(args: argparse.Namespace) -> int:
    params = _params_from_args(args)
    confidence_enabled = not args.no_confidence_reward
    entropy_enabled = not args.no_entropy_reward

    def process(item: tuple[int, str]) -> dict[str, Any]:
        line_no, raw = item
        trace, err = _load_trace(line_no, raw)
        if err is not None:
            return err
        try:
            result = score_detailed(
                trace,
                params,
                confidence_enabled=confidence_enabled,
                entropy_enabled=entropy_enabled,
            )
        except TraceValidationError as exc:
            return error_line(trace.id, ERR_INVALID_TRACE, str(exc))
        except Exception as exc:  # pragma: no cover - defensive
            return error_line(trace.id, ERR_INTERNAL, f"{type(exc).__name__}: {exc}")
        return score_line(trace.id, result)

    scored = errors = 0
    with _open_pair(args.input, args.output) as (fin, fout):
        lines = iter_lines(fin)
        with contextlib.ExitStack() as stack:
            if args.workers > 1:
                pool = stack.enter_context(ThreadPoolExecutor(max_workers=args.workers))
                docs: Iterator[dict[str, Any]] = pool.map(process, lines)
            else:
                docs = map(process, lines)
            for doc in docs:
                if doc["ok"]:
                    scored += 1
                else:
                    errors += 1
                fout.write(dumps(doc) + "\n")
    print(f"calspike score: {scored} scored, {errors} errors", file=sys.stderr)
    return 0


def _fmt(value: float | None, spec: str = ".4f") -> str:
    return "-" if value is None else format(value, spec)


def _text_report(report: CalibrationReport) -> str:
    rows = [
        ("samples", str(report.n)),
        ("excluded (no confidence)", str(report.n_excluded)),
        ("accuracy", _fmt(report.accuracy)),
        ("calibration error", _fmt(report.calibration_error)),
        ("ece", _fmt(report.ece)),
        ("brier", _fmt(report.brier)),
        ("format validity", _fmt(report.format_validity)),
        ("mean token entropy", _fmt(report.mean_token_entropy)),
        ("entropy std", _fmt(report.entropy_std)),
        ("mean sentence entropy", _fmt(report.mean_sentence_entropy)),
        ("mean spike rate", _fmt(report.mean_spike_rate)),
    ]
    width = max(len(label) for label, _ in rows)
    lines = [f"{label:<{width}}  {value}" for label, value in rows]
    lines.append("")
    lines.append(f"{'bin':>3}  {'range':<13} {'count':>6}  {'mean conf':>9}  {'accuracy':>8}")
    for b in report.bins:
        interval = f"({b.lo:.2f}, {b.hi:.2f}]"
        lines.append(
            f"{b.bin:>3}  {interval:<13} {b.count:>6}  "
            f"{_fmt(b.mean_confidence):>9}  {_fmt(b.accuracy):>8}"
        )
    return "\n".join(lines) + "\n"


_CSV_COLUMNS = (
    "n", "n_excluded", "accuracy", "calibration_error", "ece", "brier",
    "format_validity", "mean_token_entropy", "entropy_std",
    "mean_sentence_entropy", "mean_spike_rate",
)


def cmd_report(args: argparse.Namespace) -> int:
    if args.bins < 1:
        raise UsageError(f"--bins must be >= 1, got {args.bins}")
    if args.format not in ("json", "csv", "text"):
        # Reachable via CALSPIKE_FORMAT; argparse only checks real flags.
        raise UsageError(f"--format must be json, csv or text, got {args.format!r}")
    samples = []
    breakdowns = []
    skipped = 0
    with _open_pair(args.input, args.output) as (fin, fout):
        for line_no, raw in iter_lines(fin):
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {line_no}: {exc}") from None
            if not isinstance(obj, dict):
                raise SchemaError(f"line {line_no}: not an object")
            if not obj.get("ok"):
                skipped += 1
                continue
            try:
                sample, breakdown = outcome_from_score_line(obj)
            except SchemaError as exc:
                raise SchemaError(f"line {line_no}: {exc}") from None
            samples.append(sample)
            breakdowns.append(breakdown)
        if skipped:
            print(f"calspike report: skipped {skipped} error lines", file=sys.stderr)
        try:
            report = build_report(samples, breakdowns, m_bins=args.bins)
        except ValueError as exc:
            raise SchemaError(str(exc)) from None

        if args.format == "json":
            fout.write(dumps(report_to_dict(report)) + "\n")
        elif args.format == "csv":
            writer = csv.writer(fout, lineterminator="\n")
            writer.writerow(_CSV_COLUMNS)
            writer.writerow([getattr(report, col) for col in _CSV_COLUMNS])
        else:
            fout.write(_text_report(report))

    if args.figures:
        from .figures import render_report_figures

        paths = render_report_figures(report, samples, args.figures)
        for path in paths:
            print(f"calspike report: wrote {path}", file=sys.stderr)
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    if args.top_k < 1:
        raise UsageError(f"--top-k must be >= 1, got {args.top_k}")
    params = RewardParams(spike_threshold=args.tau, top_k=args.top_k)
    errors = 0
    with _open_pair(args.input, args.output) as (fin, fout):
        for line_no, raw in iter_lines(fin):
            trace, err = _load_trace(line_no, raw)
            if err is None:
                violations = validate_trace(trace, expected_k=args.top_k)
                if violations:
                    err = error_line(
                        trace.id, ERR_INVALID_TRACE,
                        "; ".join(str(v) for v in violations[:3]),
                    )
            if err is not None:
                errors += 1
                fout.write(dumps(err) + "\n")
                continue
            parsed = parse_completion(trace.completion)
            if parsed.think_span is not None:
                think_idx: Sequence[int] = think_token_indices(parsed, trace)
            else:
                think_idx = range(len(trace.tokens))
            profile = analyze(trace, think_idx, params)
            spikes = []
            for i in think_idx:
                if profile.z_scores[i] <= args.tau:
                    continue
                token = trace.tokens[i]
                lo = max(0, token.char_start - 20)
                hi = min(len(trace.completion), token.char_end + 20)
                spikes.append(
                    {
                        "token": i,
                        "z": profile.z_scores[i],
                        "entropy": profile.token_entropies[i],
                        "text": token.text,
                        "context": trace.completion[lo:hi],
                    }
                )
            doc = {"v": 1, "id": trace.id, "ok": True, "spikes": spikes}
            fout.write(dumps(doc) + "\n")
    if errors:
        print(f"calspike detect: {errors} error lines", file=sys.stderr)
    return 0


def _specs_from_file(path: str) -> list[SyntheticSpec]:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if isinstance(data, list):
        specs = []
        for i, item in enumerate(data):
            if not isinstance(item, dict):
                raise UsageError(f"spec file: entry {i} is not an object")
            item = dict(item)
            if "spike_positions" in item:
                item["spike_positions"] = tuple(item["spike_positions"])
            try:
                specs.append(SyntheticSpec(**item))
            except TypeError as exc:
                raise UsageError(f"spec file: entry {i}: {exc}") from None
        return specs
    if isinstance(data, dict):
        try:
            return make_corpus_specs(**data)
        except TypeError as exc:
            raise UsageError(f"spec file: {exc}") from None
    raise UsageError("spec file: expected a JSON object or list")


def cmd_synth(args: argparse.Namespace) -> int:
    if args.spec_file:
        specs = _specs_from_file(args.spec_file)
    else:
        try:
            specs = make_corpus_specs(
                args.seed,
                args.count,
                n_tokens=args.n_tokens,
                top_k=args.top_k,
                spike_fraction=args.spike_fraction,
                incorrect_fraction=args.incorrect_fraction,
                malformed_fraction=args.malformed_fraction,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    with contextlib.ExitStack() as stack:
        fout = open_output(args.output)
        if fout is not sys.stdout:
            stack.enter_context(fout)
        for spec in specs:
            try:
                trace, labels = generate(spec)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            doc = trace_to_dict(trace)
            doc["synth"] = labels.to_dict()
            fout.write(dumps(doc) + "\n")
    return 0


def _parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep:
        host, port = "", value
    if not host:
        host = "127.0.0.1"
    try:
        return host, int(port)
    except ValueError:
        raise UsageError(f"--listen: bad port in {value!r}") from None


def cmd_serve(args: argparse.Namespace) -> int:
    if args.workers < 1:
        raise UsageError(f"--workers must be >= 1, got {args.workers}")
    config = ServiceConfig(
        params=_params_from_args(args),
        workers=args.workers,
        confidence_enabled=not args.no_confidence_reward,
        entropy_enabled=not args.no_entropy_reward,
    )
    # An explicit --stdio outranks a CALSPIKE_LISTEN default.
    if args.listen and not args.stdio:
        host, port = _parse_listen(args.listen)
        with RewardServer((host, port), config) as server:
            bound_host, bound_port = server.server_address[:2]
            print(f"calspike serve: listening on {bound_host}:{bound_port}",
                  file=sys.stderr, flush=True)
            try:
                server.serve_forever()
            except KeyboardInterrupt:
                pass
        return 0
    serve_stream(sys.stdin, sys.stdout, config)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"calspike: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"calspike: {exc}", file=sys.stderr)
        return 1
    except SchemaError as exc:
        print(f"calspike: input error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"calspike: i/o error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 0
    except Exception as exc:
        print(f"calspike: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
