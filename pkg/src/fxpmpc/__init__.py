"""Sparse MPC toolkit with emulated fixed-point solver arithmetic.

The package covers the full loop from a continuous-time plant down to the
per-word behaviour of an embedded solver datapath:

* :mod:`fxpmpc.fxp` -- signed fixed-point formats and bit-accurate kernels,
* :mod:`fxpmpc.plant` -- linear plants and zero-order-hold discretization,
* :mod:`fxpmpc.condense` -- condensed quadratic tracking form of the MPC,
* :mod:`fxpmpc.prox` -- proximal maps for the sparsity and constraint terms,
* :mod:`fxpmpc.solver` -- weighted proximal ADMM and its approximate
  proximal-gradient specialization, in exact or quantized arithmetic,
* :mod:`fxpmpc.simloop` -- closed-loop simulation and stability metrics,
* :mod:`fxpmpc.config` / :mod:`fxpmpc.cli` -- run configuration and the
  command line front end.
"""

from fxpmpc.fxp import FxpFormat, FxpOverflowError, FxpValue

__all__ = ["FxpFormat", "FxpValue", "FxpOverflowError"]

__version__ = "0.1.0"
