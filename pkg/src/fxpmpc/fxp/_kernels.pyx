# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fixed-point kernels.

Bit-identical twin of ``_kernels_py``: same rounding, same overflow
policy, same exact error metering.  Intermediates are 128-bit so that
64-bit-word products cannot wrap.
"""

import numpy as np

from libc.math cimport floor as c_floor, round as c_round, ldexp, isfinite

cdef extern from *:
    ctypedef long long int128 "__int128"

# The error meter saturates at +-2**120 so that pathological saturated
# chains cannot overflow the 128-bit accumulator.  Unsaturated chains
# stay far below the cap and are metered exactly.
cdef int128 ERR_CAP = (<int128>1) << 120


cdef inline int128 _round_shift(int128 p, int shift, bint nearest) nogil:
    cdef int128 half
    if shift == 0:
        return p
    if not nearest:
        return p >> shift
    half = (<int128>1) << (shift - 1)
    if p >= 0:
        return (p + half) >> shift
    return -((-p + half) >> shift)


cdef inline int128 _err_term(int128 d, int shift) nogil:
    cdef int128 lim = ERR_CAP >> shift
    if d > lim:
        return ERR_CAP
    if d < -lim:
        return -ERR_CAP
    return d << shift


cdef inline int128 _err_clamp(int128 e) nogil:
    if e > ERR_CAP:
        return ERR_CAP
    if e < -ERR_CAP:
        return -ERR_CAP
    return e


def quantize_f64(const double[::1] values, int frac_width, int word_width,
                 bint nearest, bint saturate):
    """Quantize a 1-D float64 array to int64 mantissas."""
    cdef Py_ssize_t i, n = values.shape[0]
    cdef long long lo = -(1LL << (word_width - 1)) if word_width < 64 else (-9223372036854775807LL - 1)
    cdef long long hi = -lo - 1 if word_width < 64 else 9223372036854775807LL
    # 2**(word_width-1) is an exact double for every word_width <= 64
    cdef double limit = ldexp(1.0, word_width - 1)
    cdef double x, scaled, r
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] ov = out
    for i in range(n):
        x = values[i]
        if not isfinite(x):
            raise ValueError(f"non-finite input at index {i}")
        # scaling by a power of two is exact unless it overflows the double
        scaled = ldexp(x, frac_width)
        if not isfinite(scaled):
            if not saturate:
                raise OverflowError(f"quantize overflow at index {i}")
            ov[i] = hi if scaled > 0 else lo
            continue
        if nearest:
            r = c_round(scaled)
        else:
            r = c_floor(scaled)
        if r >= limit:
            if not saturate:
                raise OverflowError(f"quantize overflow at index {i}")
            ov[i] = hi
        elif r < -limit:
            if not saturate:
                raise OverflowError(f"quantize overflow at index {i}")
            ov[i] = lo
        else:
            ov[i] = <long long> r
    return out


def matvec_i64(const long long[:, ::1] m, const long long[::1] v, const long long[::1] bias,
               int frac_width, int word_width, bint nearest, bint saturate):
    """Quantized MAC of int64 mantissas, row by row, with exact error meter."""
    cdef Py_ssize_t i, j, rows = m.shape[0], cols = m.shape[1]
    if v.shape[0] != cols:
        raise ValueError("matrix/vector size mismatch")
    if bias.shape[0] != rows:
        raise ValueError("matrix/bias size mismatch")
    cdef int128 lo = -((<int128>1) << (word_width - 1))
    cdef int128 hi = ((<int128>1) << (word_width - 1)) - 1
    cdef int128 acc, p, q, e
    out = np.empty(rows, dtype=np.int64)
    err = np.empty(rows, dtype=np.float64)
    cdef long long[::1] ov = out
    cdef double[::1] ev = err
    for i in range(rows):
        acc = bias[i]
        e = 0
        for j in range(cols):
            p = (<int128> m[i, j]) * (<int128> v[j])
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
            acc = acc + q
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
        ov[i] = <long long> acc
        ev[i] = ldexp(<double> e, -2 * frac_width)
    return out, err


def addsub_i64(const long long[::1] a, const long long[::1] b, int sign, int word_width,
               bint saturate):
    """Elementwise a + sign*b on mantissas under the overflow policy."""
    cdef Py_ssize_t i, n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError("size mismatch")
    cdef int128 lo = -((<int128>1) << (word_width - 1))
    cdef int128 hi = ((<int128>1) << (word_width - 1)) - 1
    cdef int128 s
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] ov = out
    for i in range(n):
        s = (<int128> a[i]) + (<int128> sign) * (<int128> b[i])
        if s > hi:
            if not saturate:
                raise OverflowError(f"sum overflow at index {i}")
            s = hi
        elif s < lo:
            if not saturate:
                raise OverflowError(f"sum overflow at index {i}")
            s = lo
        ov[i] = <long long> s
    return out


def mul_i64(const long long[::1] a, const long long[::1] b, int frac_width, int word_width,
            bint nearest, bint saturate):
    """Elementwise mantissa product rescaled back to the working format."""
    cdef Py_ssize_t i, n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError("size mismatch")
    cdef int128 lo = -((<int128>1) << (word_width - 1))
    cdef int128 hi = ((<int128>1) << (word_width - 1)) - 1
    cdef int128 p, q
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] ov = out
    for i in range(n):
        p = (<int128> a[i]) * (<int128> b[i])
        q = _round_shift(p, frac_width, nearest)
        if q > hi:
            if not saturate:
                raise OverflowError(f"product overflow at index {i}")
            q = hi
        elif q < lo:
            if not saturate:
                raise OverflowError(f"product overflow at index {i}")
            q = lo
        ov[i] = <long long> q
    return out
