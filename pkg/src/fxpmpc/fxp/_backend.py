"""Kernel backend selection.

The compiled extension is preferred when present; set ``FXPMPC_PURE_PYTHON``
to any non-empty value to force the pure-Python twin (useful for debugging
and for the parity benchmark).
"""

from __future__ import annotations

import os

if os.environ.get("FXPMPC_PURE_PYTHON"):
    from fxpmpc.fxp import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from fxpmpc.fxp import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from fxpmpc.fxp import _kernels_py as _impl

        BACKEND = "python"

quantize_f64 = _impl.quantize_f64
matvec_i64 = _impl.matvec_i64
addsub_i64 = _impl.addsub_i64
mul_i64 = _impl.mul_i64


def get_backend(name: str):
    """Return the kernel module for an explicit backend name."""
    if name == "python":
        from fxpmpc.fxp import _kernels_py

        return _kernels_py
    if name == "compiled":
        from fxpmpc.fxp import _kernels  # raises ImportError if not built

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
