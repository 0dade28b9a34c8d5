"""JSONL schemas: round-trips, tolerant reads, strict writes."""

from __future__ import annotations

import io
import json
import sys

import pytest

from calspike import jsonl
from calspike.calibration import SampleOutcome, build_report
from calspike.model import GenerationTrace, RewardBreakdown, TokenRecord
from calspike.rewards import score_detailed

from helpers import canonical, make_trace


def sample_trace() -> GenerationTrace:
    return make_trace(
        canonical("π reasoning ünïcode", "4", "0.9"),
        n_tokens=6,
        trace_id="trace-π",
        ground_truth="4",
    )


class TestTraceRoundTrip:
    def test_exact_round_trip(self):
        trace = sample_trace()
        decoded = jsonl.trace_from_dict(json.loads(jsonl.dumps(jsonl.trace_to_dict(trace))))
        assert decoded == trace

    def test_float_fidelity(self):
        probs = (0.30000000000000004, 0.2, 0.19999999999999998, 1e-300, 0.1)
        trace = make_trace("x" * 8, n_tokens=2, probs=probs)
        decoded = jsonl.trace_from_dict(json.loads(jsonl.dumps(jsonl.trace_to_dict(trace))))
        assert decoded.tokens[0].top_k_probs == probs

    def test_unknown_keys_ignored_on_read(self):
        doc = jsonl.trace_to_dict(sample_trace())
        doc["synth"] = {"seed": 1}
        doc["comment"] = "anything"
        doc["tokens"][0]["note"] = "extra"
        decoded = jsonl.trace_from_dict(doc)
        assert decoded == sample_trace()

    def test_canonical_keys_only_on_write(self):
        doc = jsonl.trace_to_dict(sample_trace())
        assert set(doc) == {"id", "completion", "ground_truth", "tokens"}
        assert all(set(t) == {"text", "span", "p"} for t in doc["tokens"])

    def test_integer_probabilities_coerce_to_float(self):
        doc = jsonl.trace_to_dict(make_trace("xxxx", n_tokens=1, probs=(1.0, 0.0)))
        doc["tokens"][0]["p"] = [1, 0]
        decoded = jsonl.trace_from_dict(doc)
        assert decoded.tokens[0].top_k_probs == (1.0, 0.0)
        assert all(isinstance(p, float) for p in decoded.tokens[0].top_k_probs)


class TestTraceSchemaErrors:
    def base(self):
        return jsonl.trace_to_dict(sample_trace())

    @pytest.mark.parametrize("key", ["id", "completion", "ground_truth", "tokens"])
    def test_missing_required_field(self, key):
        doc = self.base()
        del doc[key]
        with pytest.raises(jsonl.SchemaError, match=key):
            jsonl.trace_from_dict(doc)

    def test_non_object_rejected(self):
        with pytest.raises(jsonl.SchemaError, match="object"):
            jsonl.trace_from_dict(["not", "a", "trace"])

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.update(tokens="nope"),
            lambda d: d["tokens"].__setitem__(0, "nope"),
            lambda d: d["tokens"][0].update(span=[1]),
            lambda d: d["tokens"][0].update(span=[0.0, 4.0]),
            lambda d: d["tokens"][0].update(p="nope"),
            lambda d: d["tokens"][0].update(p=[0.5, True]),
            lambda d: d["tokens"][0].update(text=7),
            lambda d: d["tokens"][0].pop("span"),
        ],
    )
    def test_malformed_tokens_rejected(self, mutate):
        doc = self.base()
        mutate(doc)
        with pytest.raises(jsonl.SchemaError):
            jsonl.trace_from_dict(doc)


class TestBreakdownRoundTrip:
    def full(self):
        return RewardBreakdown(
            r_confidence=-0.8,
            r_entropy=-0.5,
            r_format=1.0,
            r_total=-0.3,
            correct=False,
            z_max=2.0,
            spike_rate=0.5,
            sentence_entropy=1.25,
        )

    def test_round_trip(self):
        b = self.full()
        assert jsonl.breakdown_from_dict(json.loads(jsonl.dumps(jsonl.breakdown_to_dict(b)))) == b

    def test_ablated_components_survive_as_null(self):
        b = RewardBreakdown(
            r_confidence=None,
            r_entropy=None,
            r_format=1.0,
            r_total=1.0,
            correct=True,
            z_max=0.0,
            spike_rate=0.0,
            sentence_entropy=0.0,
        )
        doc = json.loads(jsonl.dumps(jsonl.breakdown_to_dict(b)))
        assert doc["r_confidence"] is None and doc["r_entropy"] is None
        assert jsonl.breakdown_from_dict(doc) == b

    def test_integers_coerce_to_float(self):
        doc = jsonl.breakdown_to_dict(self.full())
        doc["r_format"] = 1
        doc["z_max"] = 2
        decoded = jsonl.breakdown_from_dict(doc)
        assert decoded.r_format == 1.0 and isinstance(decoded.r_format, float)
        assert decoded.z_max == 2.0 and isinstance(decoded.z_max, float)

    def test_missing_field_names_the_field(self):
        doc = jsonl.breakdown_to_dict(self.full())
        del doc["spike_rate"]
        with pytest.raises(jsonl.SchemaError, match="spike_rate"):
            jsonl.breakdown_from_dict(doc)


class TestLineShapes:
    def test_response_line_is_exactly_the_wire_shape(self):
        result = score_detailed(sample_trace())
        doc = jsonl.response_line("trace-π", result.breakdown)
        assert set(doc) == {"v", "id", "ok", "reward"}
        assert doc["v"] == 1 and doc["ok"] is True and doc["id"] == "trace-π"

    def test_score_line_is_a_superset_with_outcome(self):
        result = score_detailed(sample_trace())
        doc = jsonl.score_line("trace-π", result)
        assert set(doc) == {"v", "id", "ok", "reward", "outcome"}
        assert set(doc["outcome"]) == {
            "confidence",
            "correct",
            "format_valid",
            "sentence_entropy",
            "spike_rate",
            "mean_token_entropy",
            "n_tokens",
        }
        assert doc["outcome"]["n_tokens"] == 6
        expected_mean = sum(result.profile.token_entropies) / 6
        assert doc["outcome"]["mean_token_entropy"] == pytest.approx(expected_mean, abs=0)

    def test_score_line_for_an_empty_trace(self):
        empty = GenerationTrace(id="e", completion="", tokens=(), ground_truth="1")
        doc = jsonl.score_line("e", score_detailed(empty))
        assert doc["outcome"]["n_tokens"] == 0
        assert doc["outcome"]["mean_token_entropy"] is None

    def test_error_line(self):
        doc = jsonl.error_line(None, "PARSE", "bad json")
        assert doc == {
            "v": 1,
            "id": None,
            "ok": False,
            "error": {"code": "PARSE", "message": "bad json"},
        }
        assert jsonl.error_line("t9", "SCHEMA", "m")["id"] == "t9"

    def test_outcome_from_score_line_inverts_score_line(self):
        result = score_detailed(sample_trace())
        doc = json.loads(jsonl.dumps(jsonl.score_line("t", result)))
        sample, breakdown = jsonl.outcome_from_score_line(doc)
        assert breakdown == result.breakdown
        assert sample.confidence == result.parsed.confidence
        assert sample.correct == result.breakdown.correct
        assert sample.format_valid == result.parsed.format_valid
        assert sample.sentence_entropy == result.breakdown.sentence_entropy
        assert sample.mean_token_entropy == doc["outcome"]["mean_token_entropy"]


class TestReportSerialization:
    def test_report_to_dict_shape_and_round_trip(self):
        samples = [
            SampleOutcome(confidence=0.9, correct=True, mean_token_entropy=1.0),
            SampleOutcome(confidence=None, correct=False, format_valid=False),
        ]
        doc = jsonl.report_to_dict(build_report(samples, m_bins=5))
        assert doc["v"] == 1
        assert doc["n"] == 2 and doc["n_excluded"] == 1
        assert len(doc["bins"]) == 5
        assert json.loads(jsonl.dumps(doc)) == doc

    def test_null_metrics_serialize_as_null(self):
        doc = jsonl.report_to_dict(
            build_report([SampleOutcome(confidence=None, correct=True)])
        )
        assert doc["ece"] is None and doc["brier"] is None
        assert doc["calibration_error"] is None


class TestStreamHelpers:
    def test_dumps_is_compact_and_keeps_unicode(self):
        text = jsonl.dumps({"a": [1, 2], "s": "π"})
        assert text == '{"a":[1,2],"s":"π"}'

    def test_iter_lines_skips_blanks_and_keeps_numbering(self):
        handle = io.StringIO("first\n\n  second  \n\t\nthird")
        assert list(jsonl.iter_lines(handle)) == [
            (1, "first"),
            (3, "second"),
            (5, "third"),
        ]

    def test_dash_means_stdio(self):
        assert jsonl.open_input("-") is sys.stdin
        assert jsonl.open_output("-") is sys.stdout

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "lines.jsonl"
        with jsonl.open_output(str(path)) as out:
            out.write(jsonl.dumps({"x": "π"}) + "\n")
        with jsonl.open_input(str(path)) as handle:
            assert list(jsonl.iter_lines(handle)) == [(1, '{"x":"π"}')]

    def test_io_text_wraps_binary_streams(self):
        reader = jsonl.io_text(io.BytesIO('{"x":"π"}\n'.encode()))
        assert reader.readline() == '{"x":"π"}\n'
        raw = io.BytesIO()
        writer = jsonl.io_text(raw, write=True)
        writer.write("done π\n")
        assert raw.getvalue() == "done π\n".encode()  # write_through, no flush
