"""Proximal maps for the sparsity penalty and the constraint indicator."""

from __future__ import annotations

import numpy as np

from fxpmpc.condense import NORM_L0, NORM_L1, NORMS


def soft_threshold(v, t):
    """Shrink toward zero by t: prox of t*|.| at v.

    Three-branch form: ``v - t`` for ``v >= t``, ``v + t`` for
    ``v <= -t`` and exactly zero in between, so boundary values map to
    exact zeros.  Works elementwise on arrays.
    """
    v = np.asarray(v, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("threshold must be >= 0")
    out = np.where(v >= t, v - t, np.where(v <= -t, v + t, 0.0))
    return out if out.ndim else float(out)


def hard_threshold(v, t):
    """Keep entries with |v| > t, zero the rest: prox of the l0 penalty.

    Ties |v| == t resolve to zero, the sparser of the two minimizers.
    """
    v = np.asarray(v, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("threshold must be >= 0")
    out = np.where(np.abs(v) > t, v, 0.0)
    return out if out.ndim else float(out)


def project_upper_bound(w, bound):
    """Project onto {w : w <= bound} elementwise; +inf rows are inactive."""
    w = np.asarray(w, dtype=np.float64)
    bound = np.asarray(bound, dtype=np.float64)
    out = np.minimum(w, bound)
    return out if out.ndim else float(out)


def prox_z(
    gamma2,
    lambda2_diag,
    sigma: float,
    norm_p: str,
    ncal,
    split: tuple[int, int],
):
    """Metric-weighted proximal step of the z block.

    The evaluation point is ``c = gamma2 / lambda2_diag``.  The first
    ``split[0]`` entries carry the sparsity penalty and are thresholded
    with the per-component weight ``sigma / lambda2_diag[i]`` (l1) or
    ``sqrt(2 sigma / lambda2_diag[i])`` (l0); the remaining ``split[1]``
    entries are projected onto the constraint set ``z <= ncal``.
    """
    gamma2 = np.asarray(gamma2, dtype=np.float64)
    lam = np.asarray(lambda2_diag, dtype=np.float64)
    if gamma2.shape != lam.shape:
        raise ValueError("gamma2 and lambda2_diag must have the same shape")
    if np.any(lam <= 0):
        raise ValueError("lambda2_diag must be positive")
    if norm_p not in NORMS:
        raise ValueError(f"norm_p must be one of {NORMS}, got {norm_p!r}")
    n0, n1 = split
    if n0 + n1 != gamma2.shape[0]:
        raise ValueError("split sizes must sum to len(gamma2)")

    c = gamma2 / lam
    if norm_p == NORM_L1:
        z0 = soft_threshold(c[:n0], sigma / lam[:n0])
    else:
        z0 = hard_threshold(c[:n0], np.sqrt(2.0 * sigma / lam[:n0]))
    if n1 == 0:
        return np.asarray(z0, dtype=np.float64)
    ncal = np.asarray(ncal, dtype=np.float64)
    if ncal.shape != (n1,):
        raise ValueError(f"ncal must have shape ({n1},), got {ncal.shape}")
    z1 = project_upper_bound(c[n0:], ncal)
    return np.concatenate([np.atleast_1d(z0), np.atleast_1d(z1)])
