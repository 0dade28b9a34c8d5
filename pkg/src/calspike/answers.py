"""Math-answer equivalence on exact rationals.

Numeric answers (integers, decimals, a/b fractions, \\frac forms, percents,
with optional $...$ / \\boxed{...} / one layer of parentheses around them)
are compared as exact rationals; decimals convert exactly, so "0.5" == "1/2"
deterministically with no floating-point tolerance anywhere. Everything
else falls through to a normalized string literal, which under-credits
rather than over-credits: no CAS-style simplification is attempted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

__all__ = ["MathValue", "AnswerParseError", "parse_answer", "answers_equivalent"]


class AnswerParseError(ValueError):
    """The answer looks numeric but cannot be a number (e.g. x/0)."""


@dataclass(slots=True, frozen=True)
class MathValue:
    """Either an exact rational or a normalized symbolic literal."""

    rational: Fraction | None = None
    literal: str | None = None

    @property
    def is_rational(self) -> bool:
        return self.rational is not None


_INT_RE = re.compile(r"[+-]?\d+")
_DECIMAL_RE = re.compile(r"[+-]?(?:\d+\.\d*|\.\d+|\d+)")
_SLASH_FRACTION_RE = re.compile(r"([+-]?\d+)\s*/\s*([+-]?\d+)")
_LATEX_FRACTION_RE = re.compile(r"\\d?frac\{([+-]?\d+)\}\{([+-]?\d+)\}")
_PERCENT_RE = re.compile(r"([+-]?(?:\d+\.\d*|\.\d+|\d+))\s*%")


def _wraps_fully(text: str, open_ch: str, close_ch: str) -> bool:
    """True when the opening bracket at position 0 closes at the very end."""
    depth = 0
    for i, ch in enumerate(text):
        if ch == open_ch:
            depth += 1
        elif ch == close_ch:
            depth -= 1
            if depth == 0:
                return i == len(text) - 1
    return False


def _strip_dollars(text: str) -> str:
    if len(text) >= 2 and text.startswith("$") and text.endswith("$"):
        return text[1:-1].strip()
    return text


def _strip_boxed(text: str) -> str:
    if text.startswith("\\boxed{") and _wraps_fully(text[len("\\boxed"):], "{", "}"):
        return text[len("\\boxed{"):-1].strip()
    return text


def _strip_parens(text: str) -> str:
    if text.startswith("(") and _wraps_fully(text, "(", ")"):
        return text[1:-1].strip()
    return text


def _as_rational(text: str) -> Fraction | None:
    """Parse one numeric form, or None if the text is not numeric.

    Raises AnswerParseError for a zero denominator.
    """
    if _INT_RE.fullmatch(text):
        return Fraction(int(text))
    if _DECIMAL_RE.fullmatch(text):
        return Fraction(text)  # exact decimal -> rational conversion
    for pattern in (_SLASH_FRACTION_RE, _LATEX_FRACTION_RE):
        match = pattern.fullmatch(text)
        if match:
            numerator, denominator = int(match.group(1)), int(match.group(2))
            if denominator == 0:
                raise AnswerParseError(f"b = 0 in fraction: {text!r}")
            return Fraction(numerator, denominator)
    match = _PERCENT_RE.fullmatch(text)
    if match:
        return Fraction(match.group(1)) / 100
    return None


def normalize_literal(text: str) -> str:
    """Normalization applied to non-numeric answers: trim, strip $ and
    \\boxed wrappers, collapse internal whitespace. Parentheses are kept."""
    stripped = _strip_boxed(_strip_dollars(text.strip()))
    return re.sub(r"\s+", " ", stripped)


def parse_answer(text: str) -> MathValue:
    """Parse an answer string into an exact rational when possible,
    otherwise a normalized symbolic literal.

    Raises AnswerParseError only for a numeric form with denominator 0.
    """
    candidate = text.strip()
    candidate = _strip_dollars(candidate)
    candidate = _strip_boxed(candidate)
    candidate = _strip_parens(candidate)  # one layer only
    rational = _as_rational(candidate)
    if rational is not None:
        return MathValue(rational=rational)
    return MathValue(literal=normalize_literal(text))


def answers_equivalent(predicted: str, truth: str) -> bool:
    """Exact-equivalence verdict between a predicted and reference answer.

    Total: any failure to parse on either side folds to False, because
    correctness must always be decidable.
    """
    try:
        left = parse_answer(predicted)
        right = parse_answer(truth)
    except AnswerParseError:
        return False
    except Exception:  # pragma: no cover - belt and braces for totality
        return False
    if left.is_rational and right.is_rational:
        return left.rational == right.rational
    if not left.is_rational and not right.is_rational:
        return left.literal == right.literal
    return False
