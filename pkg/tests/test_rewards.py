"""Composite reward: component algebra, composition, fallbacks, ablation."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from calspike.model import RewardParams, TraceValidationError
from calspike.parsing import parse_completion
from calspike.rewards import (
    confidence_reward,
    entropy_reward,
    format_reward,
    score,
    score_batch,
    score_detailed,
)

from helpers import UNIFORM5, canonical, entropy_probs, make_trace


class TestConfidenceReward:
    @pytest.mark.parametrize(
        "correct,confidence,expected",
        [
            (True, 1.0, 1.0),
            (False, 1.0, -1.0),
            (True, 0.5, 0.0),
            (False, 0.5, 0.0),
            (False, 0.9, -0.8),
            (True, 0.9, 0.8),
            (True, 0.0, -1.0),
            (False, 0.0, 1.0),
        ],
    )
    def test_reference_points(self, correct, confidence, expected):
        assert confidence_reward(correct, confidence) == pytest.approx(
            expected, abs=1e-12
        )

    def test_grid_against_exact_arithmetic(self):
        for i in range(101):
            c = i / 100
            exact = 2 * Fraction(i, 100) - 1
            assert abs(confidence_reward(True, c) - float(exact)) <= 1e-12
            assert abs(confidence_reward(False, c) - float(-exact)) <= 1e-12

    def test_sign_symmetry(self):
        for i in range(101):
            c = i / 100
            assert confidence_reward(True, c) == -confidence_reward(False, c)

    def test_strictly_monotone_in_confidence(self):
        when_right = [confidence_reward(True, i / 100) for i in range(101)]
        when_wrong = [confidence_reward(False, i / 100) for i in range(101)]
        assert all(b > a for a, b in zip(when_right, when_right[1:]))
        assert all(b < a for a, b in zip(when_wrong, when_wrong[1:]))

    def test_stays_in_unit_interval(self):
        for i in range(101):
            for correct in (True, False):
                assert -1.0 <= confidence_reward(correct, i / 100) <= 1.0

    @pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
    def test_out_of_range_confidence_rejected(self, bad):
        with pytest.raises(ValueError):
            confidence_reward(True, bad)


class TestEntropyReward:
    @pytest.mark.parametrize(
        "z,scale,threshold,expected",
        [
            (2.0, 1.0, 1.5, -0.5),
            (1.5, 1.0, 1.5, 0.0),
            (0.0, 1.0, 1.5, 0.0),
            (-3.0, 1.0, 1.5, 0.0),
            (3.0, 2.5, 1.0, -5.0),
            (10.0, 0.0, 1.5, 0.0),
        ],
    )
    def test_reference_points(self, z, scale, threshold, expected):
        params = RewardParams(spike_scale=scale, spike_threshold=threshold)
        assert entropy_reward(z, params) == expected

    def test_never_positive_and_zero_iff_under_threshold(self):
        rng = np.random.default_rng(13)
        for _ in range(500):
            z = float(rng.uniform(-4, 8))
            params = RewardParams(
                spike_scale=float(rng.uniform(0.1, 3)),
                spike_threshold=float(rng.uniform(0, 3)),
            )
            r = entropy_reward(z, params)
            assert r <= 0.0
            assert (r == 0.0) == (z <= params.spike_threshold)

    def test_zero_scale_yields_positive_zero(self):
        r = entropy_reward(7.0, RewardParams(spike_scale=0.0))
        assert r == 0.0
        assert math.copysign(1.0, r) == 1.0  # +0.0, not -0.0

    def test_barely_over_threshold_is_penalized(self):
        assert entropy_reward(1.5 + 1e-9, RewardParams()) < 0.0


class TestFormatReward:
    def test_well_formed(self):
        parsed = parse_completion(canonical("x", "4", "0.9"))
        assert format_reward(parsed) == 1.0

    def test_malformed(self):
        parsed = parse_completion("no tags here")
        assert format_reward(parsed) == -1.0


def spike_trace(ground_truth: str = "4"):
    """5-token trace: think covers tokens 0-1, token 1 carries a z=2 spike.

    Entropies [0.25, 1.25, 0.25, 0.25, 0.25]: mean 0.45, population
    sigma 0.4, so the spike token sits exactly 2 standard deviations up.
    """
    completion = canonical("t" * 30, "5", "0.9")
    assert len(completion) == 91
    return make_trace(
        completion,
        n_tokens=5,
        probs=entropy_probs([0.25, 1.25, 0.25, 0.25, 0.25]),
        ground_truth=ground_truth,
    )


class TestScore:
    def test_calm_correct_completion(self):
        trace = make_trace(canonical("steady work", "4", "0.9"), ground_truth="4")
        b = score(trace)
        assert b.r_confidence == 0.8
        assert b.r_entropy == 0.0
        assert b.r_format == 1.0
        assert b.r_total == 1.8
        assert b.correct is True
        assert b.z_max == 0.0  # uniform probs -> constant entropy
        assert b.spike_rate == 0.0
        assert abs(b.sentence_entropy - math.log(5)) <= 1e-12

    def test_overconfident_wrong_answer_with_spike(self):
        b = score(spike_trace(ground_truth="4"))
        assert b.correct is False
        assert b.r_confidence == -0.8
        assert b.r_entropy == pytest.approx(-0.5, abs=1e-4)
        assert b.r_format == 1.0
        assert b.r_total == pytest.approx(-0.3, abs=1e-4)
        assert b.r_total == b.r_confidence + b.r_entropy + b.r_format
        assert b.z_max == pytest.approx(2.0, abs=1e-4)
        assert b.spike_rate == 0.5  # one of the two think tokens
        assert b.sentence_entropy == pytest.approx(1.25, abs=1e-6)

    @pytest.mark.parametrize("ground_truth", ["4", "5"])
    def test_half_confidence_is_neutral_either_way(self, ground_truth):
        trace = make_trace(
            canonical("hedged", "4", "0.5"), ground_truth=ground_truth
        )
        assert score(trace).r_confidence == 0.0

    def test_malformed_without_recoverable_confidence(self):
        trace = make_trace("free-form rambling, no tags", ground_truth="4")
        b = score(trace)
        assert b.r_confidence == 0.0
        assert b.r_entropy == 0.0
        assert b.r_format == -1.0
        assert b.r_total == -1.0
        assert b.correct is False

    def test_malformed_with_recovered_confidence_and_answer(self):
        completion = "<answer>4</answer><think>x</think><confidence>0.9</confidence>"
        right = score(make_trace(completion, ground_truth="4"))
        assert right.r_format == -1.0
        assert right.r_confidence == 0.8
        assert right.correct is True
        assert right.r_total == pytest.approx(-0.2, abs=1e-12)
        wrong = score(make_trace(completion, ground_truth="7"))
        assert wrong.r_confidence == -0.8

    def test_malformed_entropy_falls_back_to_whole_sequence(self):
        # No think span: the spike is still visible because all tokens count.
        trace = make_trace(
            "no tags" + "x" * 28,
            n_tokens=5,
            probs=entropy_probs([0.25, 1.25, 0.25, 0.25, 0.25]),
            ground_truth="4",
        )
        b = score(trace)
        assert b.z_max == pytest.approx(2.0, abs=1e-4)
        assert b.r_entropy == pytest.approx(-0.5, abs=1e-4)

    def test_custom_params_flow_through(self):
        params = RewardParams(spike_scale=2.0, spike_threshold=0.5)
        b = score(spike_trace(), params)
        assert b.r_entropy == pytest.approx(-3.0, abs=1e-4)  # -2 * (2 - 0.5)

    def test_stats_over_think_only_changes_the_picture(self):
        trace = spike_trace()
        default = score_detailed(trace)
        restricted = score_detailed(trace, stats_over_think_only=True)
        # Think pool [0.25, 1.25]: mean 0.75, sigma 0.5, so z_max is 1.0
        # and the spike no longer crosses the threshold.
        assert restricted.breakdown.z_max == pytest.approx(1.0, abs=1e-4)
        assert restricted.breakdown.r_entropy == 0.0
        assert default.breakdown.r_entropy < 0.0

    def test_validation_failure_raises(self):
        bad = make_trace(canonical("x", "4", "0.9"), probs=(0.5,) * 5)
        with pytest.raises(TraceValidationError) as excinfo:
            score(bad)
        assert excinfo.value.trace_id == "t1"
        assert excinfo.value.violations


class TestAblation:
    def fixture(self):
        return spike_trace()

    def test_confidence_disabled(self):
        b = score(self.fixture(), confidence_enabled=False)
        assert b.r_confidence is None
        assert b.r_entropy is not None
        assert b.r_total == b.r_entropy + b.r_format

    def test_entropy_disabled(self):
        b = score(self.fixture(), entropy_enabled=False)
        assert b.r_entropy is None
        assert b.r_total == b.r_confidence + b.r_format

    def test_both_disabled(self):
        b = score(self.fixture(), confidence_enabled=False, entropy_enabled=False)
        assert b.r_confidence is None and b.r_entropy is None
        assert b.r_total == b.r_format == 1.0

    def test_total_is_always_the_sum_of_enabled_components(self):
        for conf_on in (True, False):
            for ent_on in (True, False):
                b = score(
                    self.fixture(),
                    confidence_enabled=conf_on,
                    entropy_enabled=ent_on,
                )
                assert b.r_total == (
                    (b.r_confidence or 0.0) + (b.r_entropy or 0.0) + b.r_format
                )
                assert (b.r_confidence is None) == (not conf_on)
                assert (b.r_entropy is None) == (not ent_on)


class TestScoreBatch:
    def traces(self):
        out = []
        for i in range(30):
            if i % 3 == 0:
                completion = canonical(f"case {i}", "4", "0.9")
            elif i % 3 == 1:
                completion = canonical(f"case {i}", "5", "0.7")
            else:
                completion = f"malformed {i} with no tags at all"
            out.append(
                make_trace(completion, trace_id=f"t{i}", ground_truth="4")
            )
        return out

    def test_parallel_matches_sequential_in_order(self):
        traces = self.traces()
        sequential = score_batch(traces, workers=1)
        parallel = score_batch(traces, workers=4)
        assert parallel == sequential
        for trace, got in zip(traces, sequential):
            assert got == score(trace)

    def test_order_reflects_inputs(self):
        traces = self.traces()
        results = score_batch(traces, workers=4)
        for i, b in enumerate(results):
            expected_format = 1.0 if i % 3 != 2 else -1.0
            assert b.r_format == expected_format
