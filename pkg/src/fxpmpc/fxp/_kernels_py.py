"""Pure-Python fixed-point kernels.

Reference implementation of the hot loops: plain Python integers are
unbounded, so every product, rescale and accumulate is exact by
construction.  The compiled module in ``_kernels.pyx`` mirrors these
semantics with 128-bit intermediates; the parity test suite holds the two
to bit-identical outputs.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def _round_shift(num: int, shift: int, nearest: bool) -> int:
    if shift == 0:
        return num
    if not nearest:
        return num >> shift
    half = 1 << (shift - 1)
    if num >= 0:
        return (num + half) >> shift
    return -((-num + half) >> shift)


# Cap of the error meter, matching the compiled kernels: saturated chains
# clamp the meter here instead of growing without bound.
_ERR_CAP = 1 << 120


def _err_term(d: int, shift: int) -> int:
    t = d << shift
    if t > _ERR_CAP:
        return _ERR_CAP
    if t < -_ERR_CAP:
        return -_ERR_CAP
    return t


def _err_clamp(e: int) -> int:
    if e > _ERR_CAP:
        return _ERR_CAP
    if e < -_ERR_CAP:
        return -_ERR_CAP
    return e


def quantize_f64(values, frac_width, word_width, nearest, saturate):
    """Quantize a 1-D float64 array to int64 mantissas."""
    lo = -(1 << (word_width - 1))
    hi = (1 << (word_width - 1)) - 1
    values = np.ascontiguousarray(values, dtype=np.float64)
    out = np.empty(values.shape[0], dtype=np.int64)
    for i in range(values.shape[0]):
        x = float(values[i])
        if not math.isfinite(x):
            raise ValueError(f"non-finite input at index {i}")
        scaled = Fraction(x) * (1 << frac_width)
        num, den = scaled.numerator, scaled.denominator
        q, r = divmod(num, den)
        if r and nearest:
            twice = 2 * r
            if twice > den or (twice == den and q >= 0):
                q += 1
        if q > hi:
            if not saturate:
                raise OverflowError(f"quantize overflow at index {i}")
            q = hi
        elif q < lo:
            if not saturate:
                raise OverflowError(f"quantize overflow at index {i}")
            q = lo
        out[i] = q
    return out


def matvec_i64(m, v, bias, frac_width, word_width, nearest, saturate):
    """Quantized multiply-accumulate of int64 mantissas, row by row.

    Each output component is a left-to-right MAC chain seeded with the
    bias word: every product is rescaled back to the working format and
    every partial sum passes through the overflow policy.  The second
    return value is the exact accumulated datapath error of each row in
    real units (the difference between the quantized chain and the same
    chain run without rounding or saturation).
    """
    rows, cols = m.shape
    if v.shape[0] != cols:
        raise ValueError("matrix/vector size mismatch")
    if bias.shape[0] != rows:
        raise ValueError("matrix/bias size mismatch")
    lo = -(1 << (word_width - 1))
    hi = (1 << (word_width - 1)) - 1
    out = np.empty(rows, dtype=np.int64)
    err = np.empty(rows, dtype=np.float64)
    for i in range(rows):
        acc = int(bias[i])
        e = 0
        for j in range(cols):
            p = int(m[i, j]) * int(v[j])
            q = _round_shift(p, frac_width, nearest)
            e = _err_clamp(e + ((q << frac_width) - p))
            if q > hi:
                if not saturate:
                    raise OverflowError(f"product overflow at row {i}")
                e = _err_clamp(e + _err_term(hi - q, frac_width))
                q = hi
            elif q < lo:
                if not saturate:
                    raise OverflowError(f"product overflow at row {i}")
                e = _err_clamp(e + _err_term(lo - q, frac_width))
                q = lo
            acc += q
            if acc > hi:
                if not saturate:
                    raise OverflowError(f"accumulator overflow at row {i}")
                e = _err_clamp(e + _err_term(hi - acc, frac_width))
                acc = hi
            elif acc < lo:
                if not saturate:
                    raise OverflowError(f"accumulator overflow at row {i}")
                e = _err_clamp(e + _err_term(lo - acc, frac_width))
                acc = lo
        out[i] = acc
        err[i] = math.ldexp(float(e), -2 * frac_width)
    return out, err


def addsub_i64(a, b, sign, word_width, saturate):
    """Elementwise a + sign*b on mantissas under the overflow policy."""
    if a.shape[0] != b.shape[0]:
        raise ValueError("size mismatch")
    lo = -(1 << (word_width - 1))
    hi = (1 << (word_width - 1)) - 1
    out = np.empty(a.shape[0], dtype=np.int64)
    for i in range(a.shape[0]):
        s = int(a[i]) + sign * int(b[i])
        if s > hi:
            if not saturate:
                raise OverflowError(f"sum overflow at index {i}")
            s = hi
        elif s < lo:
            if not saturate:
                raise OverflowError(f"sum overflow at index {i}")
            s = lo
        out[i] = s
    return out


def mul_i64(a, b, frac_width, word_width, nearest, saturate):
    """Elementwise mantissa product rescaled back to the working format."""
    if a.shape[0] != b.shape[0]:
        raise ValueError("size mismatch")
    lo = -(1 << (word_width - 1))
    hi = (1 << (word_width - 1)) - 1
    out = np.empty(a.shape[0], dtype=np.int64)
    for i in range(a.shape[0]):
        p = int(a[i]) * int(b[i])
        q = _round_shift(p, frac_width, nearest)
        if q > hi:
            if not saturate:
                raise OverflowError(f"product overflow at index {i}")
            q = hi
        elif q < lo:
            if not saturate:
                raise OverflowError(f"product overflow at index {i}")
            q = lo
        out[i] = q
    return out
