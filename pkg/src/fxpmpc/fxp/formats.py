"""Signed fixed-point formats and scalar values.

A format is a two's-complement word of ``word_width`` bits with
``frac_width`` bits to the right of the binary point.  A stored integer
``raw`` represents the real number ``raw * 2**-frac_width``.  All rounding
and overflow behaviour is explicit and deterministic so that runs are
reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

ROUND_NEAREST = "nearest"  # round to nearest, ties away from zero
ROUND_TRUNCATE = "truncate"  # round toward negative infinity
ROUNDING_MODES = (ROUND_NEAREST, ROUND_TRUNCATE)

OVERFLOW_SATURATE = "saturate"
OVERFLOW_ERROR = "error"
OVERFLOW_MODES = (OVERFLOW_SATURATE, OVERFLOW_ERROR)


class FxpOverflowError(ArithmeticError):
    """A value left the representable range under overflow mode 'error'."""


@dataclass(frozen=True)
class FxpFormat:
    """Signed fixed-point format with explicit rounding and overflow policy."""

    word_width: int
    frac_width: int
    rounding: str = ROUND_NEAREST
    overflow: str = OVERFLOW_SATURATE

    def __post_init__(self) -> None:
        if not isinstance(self.word_width, int) or not isinstance(self.frac_width, int):
            raise TypeError("word_width and frac_width must be integers")
        if not 2 <= self.word_width <= 64:
            raise ValueError(f"word_width must be in [2, 64], got {self.word_width}")
        if not 0 <= self.frac_width <= self.word_width - 1:
            raise ValueError(
                f"frac_width must be in [0, word_width - 1], got {self.frac_width} "
                f"for word_width {self.word_width}"
            )
        if self.rounding not in ROUNDING_MODES:
            raise ValueError(f"unknown rounding mode {self.rounding!r}")
        if self.overflow not in OVERFLOW_MODES:
            raise ValueError(f"unknown overflow mode {self.overflow!r}")

    @property
    def raw_min(self) -> int:
        return -(1 << (self.word_width - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.word_width - 1)) - 1

    @property
    def resolution(self) -> float:
        """Value of one least-significant bit."""
        return math.ldexp(1.0, -self.frac_width)

    @property
    def min_value(self) -> float:
        return math.ldexp(self.raw_min, -self.frac_width)

    @property
    def max_value(self) -> float:
        return math.ldexp(self.raw_max, -self.frac_width)

    def contains_raw(self, raw: int) -> bool:
        return self.raw_min <= raw <= self.raw_max


@dataclass(frozen=True)
class FxpValue:
    """One stored word: integer mantissa plus its format."""

    raw: int
    fmt: FxpFormat

    def __post_init__(self) -> None:
        if not isinstance(self.raw, int):
            raise TypeError("raw must be an int")
        if not self.fmt.contains_raw(self.raw):
            raise ValueError(
                f"raw {self.raw} outside [{self.fmt.raw_min}, {self.fmt.raw_max}]"
            )

    @property
    def value(self) -> float:
        """Real value represented by this word.

        Exact whenever the mantissa fits a double (word widths up to 53
        bits); wider words round to the nearest double, which is the best
        any float interface can report.
        """
        return math.ldexp(self.raw, -self.fmt.frac_width)


def round_rational(num: int, den: int, rounding: str) -> int:
    """Round the exact rational num/den (den > 0) under the given mode."""
    q, r = divmod(num, den)  # floor division: 0 <= r < den
    if rounding == ROUND_TRUNCATE or r == 0:
        return q
    twice = 2 * r
    if twice > den:
        return q + 1
    if twice < den:
        return q
    # exact tie: away from zero
    return q + 1 if q >= 0 else q


def round_scaled(num: int, shift: int, rounding: str) -> int:
    """Round num / 2**shift to an integer; used to rescale raw products."""
    if shift == 0:
        return num
    if rounding == ROUND_TRUNCATE:
        return num >> shift
    half = 1 << (shift - 1)
    if num >= 0:
        return (num + half) >> shift
    return -((-num + half) >> shift)


def clamp_raw(raw: int, fmt: FxpFormat) -> int:
    """Apply the format's overflow policy to a candidate mantissa."""
    if fmt.contains_raw(raw):
        return raw
    if fmt.overflow == OVERFLOW_ERROR:
        raise FxpOverflowError(
            f"raw {raw} overflows W={fmt.word_width}, F={fmt.frac_width}"
        )
    return fmt.raw_min if raw < fmt.raw_min else fmt.raw_max


def quantize_scalar(x: float, fmt: FxpFormat) -> int:
    """Quantize one real number to a mantissa, exactly.

    The scaling by 2**frac_width and the tie decisions are carried out in
    exact rational arithmetic, so the result never depends on double
    rounding artifacts.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    scaled = Fraction(x) * (1 << fmt.frac_width)
    raw = round_rational(scaled.numerator, scaled.denominator, fmt.rounding)
    return clamp_raw(raw, fmt)
