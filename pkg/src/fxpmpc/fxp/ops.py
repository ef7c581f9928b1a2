"""Quantized arithmetic on scalars and arrays.

Scalar operations work on :class:`FxpValue` words and are implemented with
exact integer arithmetic.  Array operations work on int64 mantissa arrays
("raw" arrays) and dispatch to the selected kernel backend; they are the
building blocks of the quantized solver datapath.
"""

from __future__ import annotations

import math

import numpy as np

from fxpmpc.fxp import _backend
from fxpmpc.fxp.formats import (
    OVERFLOW_SATURATE,
    ROUND_NEAREST,
    FxpFormat,
    FxpOverflowError,
    FxpValue,
    clamp_raw,
    quantize_scalar,
    round_scaled,
)


def _mode_flags(fmt: FxpFormat) -> tuple[bool, bool]:
    return fmt.rounding == ROUND_NEAREST, fmt.overflow == OVERFLOW_SATURATE


def _wrap_overflow(fmt: FxpFormat, exc: OverflowError) -> FxpOverflowError:
    return FxpOverflowError(
        f"{exc} (W={fmt.word_width}, F={fmt.frac_width})"
    )


def quantize(x: float, fmt: FxpFormat) -> FxpValue:
    """Quantize a real number to a fixed-point word."""
    return FxpValue(quantize_scalar(x, fmt), fmt)


def to_real(v: FxpValue) -> float:
    """Real value of a word (nearest double for mantissas beyond 53 bits)."""
    return v.value


def _check_same_format(a: FxpValue, b: FxpValue) -> FxpFormat:
    if a.fmt != b.fmt:
        raise ValueError(f"format mismatch: {a.fmt} vs {b.fmt}")
    return a.fmt


def q_add(a: FxpValue, b: FxpValue) -> FxpValue:
    """Sum of two words in their common format."""
    fmt = _check_same_format(a, b)
    return FxpValue(clamp_raw(a.raw + b.raw, fmt), fmt)


def q_mul(a: FxpValue, b: FxpValue) -> FxpValue:
    """Product of two words, rescaled back to the common format."""
    fmt = _check_same_format(a, b)
    raw = round_scaled(a.raw * b.raw, fmt.frac_width, fmt.rounding)
    return FxpValue(clamp_raw(raw, fmt), fmt)


def quantize_array(x, fmt: FxpFormat) -> np.ndarray:
    """Quantize an array of reals to int64 mantissas, preserving shape."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    try:
        flat = _backend.quantize_f64(
            arr.ravel(), fmt.frac_width, fmt.word_width, *_mode_flags(fmt)
        )
    except OverflowError as exc:
        raise _wrap_overflow(fmt, exc) from None
    return flat.reshape(arr.shape)


def to_real_array(raw, fmt: FxpFormat) -> np.ndarray:
    """Real values of a mantissa array."""
    return np.asarray(raw, dtype=np.float64) * math.ldexp(1.0, -fmt.frac_width)


def matvec_raw(m_raw, v_raw, fmt: FxpFormat, bias_raw=None):
    """Quantized multiply-accumulate ``m @ v (+ bias)`` on mantissas.

    Every product is rescaled to the working format and every partial sum
    passes through the overflow policy, left to right, exactly as a
    sequential hardware MAC would.  Returns ``(out_raw, err)`` where
    ``err[i]`` is the exact accumulated datapath error of row ``i`` in
    real units.
    """
    m_raw = np.ascontiguousarray(m_raw, dtype=np.int64)
    v_raw = np.ascontiguousarray(v_raw, dtype=np.int64)
    if bias_raw is None:
        bias_raw = np.zeros(m_raw.shape[0], dtype=np.int64)
    else:
        bias_raw = np.ascontiguousarray(bias_raw, dtype=np.int64)
    try:
        return _backend.matvec_i64(
            m_raw, v_raw, bias_raw, fmt.frac_width, fmt.word_width, *_mode_flags(fmt)
        )
    except OverflowError as exc:
        raise _wrap_overflow(fmt, exc) from None


def add_raw(a_raw, b_raw, fmt: FxpFormat, sign: int = 1) -> np.ndarray:
    """Elementwise mantissa sum (difference for ``sign=-1``)."""
    a_raw = np.ascontiguousarray(a_raw, dtype=np.int64)
    b_raw = np.ascontiguousarray(b_raw, dtype=np.int64)
    try:
        return _backend.addsub_i64(a_raw, b_raw, sign, fmt.word_width, _mode_flags(fmt)[1])
    except OverflowError as exc:
        raise _wrap_overflow(fmt, exc) from None


def mul_raw(a_raw, b_raw, fmt: FxpFormat) -> np.ndarray:
    """Elementwise mantissa product rescaled to the working format."""
    a_raw = np.ascontiguousarray(a_raw, dtype=np.int64)
    b_raw = np.ascontiguousarray(b_raw, dtype=np.int64)
    try:
        return _backend.mul_i64(
            a_raw, b_raw, fmt.frac_width, fmt.word_width, *_mode_flags(fmt)
        )
    except OverflowError as exc:
        raise _wrap_overflow(fmt, exc) from None


def scale_raw(a_raw, scalar_raw: int, fmt: FxpFormat) -> np.ndarray:
    """Multiply a mantissa array by one scalar word."""
    a_raw = np.ascontiguousarray(a_raw, dtype=np.int64)
    b = np.full(a_raw.shape[0], int(scalar_raw), dtype=np.int64)
    return mul_raw(a_raw, b, fmt)


def q_matvec(m, v: list[FxpValue] | tuple[FxpValue, ...], fmt: FxpFormat) -> list[FxpValue]:
    """Quantized matrix-vector product on words.

    ``m`` holds real coefficients and is quantized on entry; ``v`` is a
    vector of words that must all share ``fmt``.
    """
    for w in v:
        if w.fmt != fmt:
            raise ValueError(f"vector word format {w.fmt} differs from {fmt}")
    m_raw = quantize_array(np.asarray(m, dtype=np.float64), fmt)
    v_raw = np.array([w.raw for w in v], dtype=np.int64)
    out_raw, _ = matvec_raw(m_raw, v_raw, fmt)
    return [FxpValue(int(r), fmt) for r in out_raw]
