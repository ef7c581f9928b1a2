"""Bit-accurate signed fixed-point arithmetic."""

from fxpmpc.fxp._backend import BACKEND, get_backend
from fxpmpc.fxp.formats import (
    OVERFLOW_ERROR,
    OVERFLOW_MODES,
    OVERFLOW_SATURATE,
    ROUND_NEAREST,
    ROUND_TRUNCATE,
    ROUNDING_MODES,
    FxpFormat,
    FxpOverflowError,
    FxpValue,
)
from fxpmpc.fxp.ops import (
    add_raw,
    matvec_raw,
    mul_raw,
    q_add,
    q_matvec,
    q_mul,
    quantize,
    quantize_array,
    scale_raw,
    to_real,
    to_real_array,
)

__all__ = [
    "BACKEND",
    "get_backend",
    "FxpFormat",
    "FxpValue",
    "FxpOverflowError",
    "ROUND_NEAREST",
    "ROUND_TRUNCATE",
    "ROUNDING_MODES",
    "OVERFLOW_SATURATE",
    "OVERFLOW_ERROR",
    "OVERFLOW_MODES",
    "quantize",
    "to_real",
    "q_add",
    "q_mul",
    "q_matvec",
    "quantize_array",
    "to_real_array",
    "matvec_raw",
    "add_raw",
    "mul_raw",
    "scale_raw",
]
