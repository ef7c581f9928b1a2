"""Condensed quadratic form of the tracking MPC.

The per-step states are eliminated so that the horizon cost becomes a
quadratic in the stacked control sequence, plus a sparsity penalty and
stacked inequality constraints handled by the solver's splitting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fxpmpc.plant import DiscretePlant

NORM_L0 = "l0"
NORM_L1 = "l1"
NORMS = (NORM_L0, NORM_L1)


def _as_bound(v, name: str, size: int) -> np.ndarray:
    arr = np.array(v, dtype=np.float64)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {arr.shape}")
    if np.any(np.isnan(arr)):
        raise ValueError(f"{name} contains NaN")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MpcProblem:
    """Tracking MPC with a sparsity penalty on the control sequence.

    Minimizes, over the stacked controls of the first ``n_ctrl`` steps,

        sum_k 0.5 * ||y_k - r||_q^2  +  sigma * ||u||_p

    subject to elementwise bounds on inputs and predicted outputs.
    Controls beyond the control horizon are zero in the prediction.
    Bounds may be +-inf to disable individual constraints.
    """

    plant: DiscretePlant
    n_pred: int
    n_ctrl: int
    q: np.ndarray
    sigma: float
    norm_p: str
    u_min: np.ndarray
    u_max: np.ndarray
    y_min: np.ndarray
    y_max: np.ndarray
    r: np.ndarray

    def __post_init__(self) -> None:
        if not isinstance(self.plant, DiscretePlant):
            raise TypeError("plant must be a DiscretePlant")
        n_pred = int(self.n_pred)
        n_ctrl = int(self.n_ctrl)
        if n_pred < 1:
            raise ValueError(f"n_pred must be >= 1, got {n_pred}")
        if not 1 <= n_ctrl <= n_pred:
            raise ValueError(
                f"n_ctrl must be in [1, n_pred], got {n_ctrl} with n_pred {n_pred}"
            )
        object.__setattr__(self, "n_pred", n_pred)
        object.__setattr__(self, "n_ctrl", n_ctrl)

        m = self.plant.n_outputs
        p = self.plant.n_inputs
        q = np.array(self.q, dtype=np.float64)
        if q.shape != (m, m):
            raise ValueError(f"q must have shape ({m}, {m}), got {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("q contains non-finite entries")
        if not np.allclose(q, q.T, atol=1e-12):
            raise ValueError("q must be symmetric")
        if np.linalg.eigvalsh(q).min() < -1e-10:
            raise ValueError("q must be positive semidefinite")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
        object.__setattr__(self, "sigma", sigma)
        if self.norm_p not in NORMS:
            raise ValueError(f"norm_p must be one of {NORMS}, got {self.norm_p!r}")

        u_min = _as_bound(self.u_min, "u_min", p)
        u_max = _as_bound(self.u_max, "u_max", p)
        y_min = _as_bound(self.y_min, "y_min", m)
        y_max = _as_bound(self.y_max, "y_max", m)
        if np.any(u_min > u_max):
            raise ValueError("u_min must be <= u_max elementwise")
        if np.any(y_min > y_max):
            raise ValueError("y_min must be <= y_max elementwise")
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)
        object.__setattr__(self, "y_min", y_min)
        object.__setattr__(self, "y_max", y_max)

        r = np.array(self.r, dtype=np.float64)
        if r.shape != (m,):
            raise ValueError(f"r must have shape ({m},), got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("r contains non-finite entries")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class CondensedMpc:
    """Precomputed horizon matrices of an :class:`MpcProblem`.

    ``ncal(x) = ncal_const + ncal_state_gain @ x`` gives the stacked
    constraint right-hand side at state ``x``; infinite entries mark
    disabled rows.
    """

    phi: np.ndarray
    f_mat: np.ndarray
    r_s: np.ndarray
    q_bar: np.ndarray
    h_mat: np.ndarray
    phit_q: np.ndarray
    mcal: np.ndarray
    ncal_const: np.ndarray
    ncal_state_gain: np.ndarray
    n_u: int
    n_constr: int
    has_finite_bounds: bool


def build_prediction(
    plant: DiscretePlant, n_pred: int, n_ctrl: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked prediction matrices (phi, f) for the output horizon.

    Row block i (steps 1..n_pred) of ``f`` is ``C A^i``; block (i, j) of
    ``phi`` is ``C A^(i-j) B`` for i >= j and zero above the diagonal, so
    ``y_stack = f @ x0 + phi @ u_stack`` with controls beyond the control
    horizon at zero.
    """
    n, p, m = plant.n_states, plant.n_inputs, plant.n_outputs
    # powers[k] = C A^k B for k = 0.., powers_f[i] = C A^(i+1)
    phi = np.zeros((m * n_pred, p * n_ctrl))
    f_mat = np.zeros((m * n_pred, n))
    a_pow = np.eye(n)
    cab = []  # C A^k B
    for i in range(1, n_pred + 1):
        cab.append(plant.c @ a_pow @ plant.b_d)
        a_pow = a_pow @ plant.a_d
        f_mat[(i - 1) * m : i * m, :] = plant.c @ a_pow
    for i in range(1, n_pred + 1):
        for j in range(1, min(i, n_ctrl) + 1):
            phi[(i - 1) * m : i * m, (j - 1) * p : j * p] = cab[i - j]
    return phi, f_mat


def condense(mpc: MpcProblem) -> CondensedMpc:
    """Build the condensed quadratic form and stacked constraints."""
    plant = mpc.plant
    if np.any(plant.d != 0.0):
        raise ValueError(
            "prediction assumes a strictly proper plant (d == 0); "
            "feedthrough only affects the measured output in simulation"
        )
    m, p = plant.n_outputs, plant.n_inputs
    phi, f_mat = build_prediction(plant, mpc.n_pred, mpc.n_ctrl)
    q_bar = np.kron(np.eye(mpc.n_pred), mpc.q)
    r_s = np.tile(mpc.r, mpc.n_pred)
    phit_q = phi.T @ q_bar
    h_mat = phit_q @ phi
    h_mat = 0.5 * (h_mat + h_mat.T)  # symmetrize away accumulation noise

    n_u = p * mpc.n_ctrl
    eye_u = np.eye(n_u)
    mcal = np.vstack([-eye_u, eye_u, -phi, phi])
    u_min_rep = np.tile(mpc.u_min, mpc.n_ctrl)
    u_max_rep = np.tile(mpc.u_max, mpc.n_ctrl)
    y_min_rep = np.tile(mpc.y_min, mpc.n_pred)
    y_max_rep = np.tile(mpc.y_max, mpc.n_pred)
    ncal_const = np.concatenate([-u_min_rep, u_max_rep, -y_min_rep, y_max_rep])
    n_y = m * mpc.n_pred
    ncal_state_gain = np.vstack(
        [np.zeros((2 * n_u, plant.n_states)), f_mat, -f_mat]
    )
    has_finite = bool(np.any(np.isfinite(ncal_const)))

    for arr in (phi, f_mat, r_s, q_bar, h_mat, phit_q, mcal, ncal_const, ncal_state_gain):
        arr.setflags(write=False)
    return CondensedMpc(
        phi=phi,
        f_mat=f_mat,
        r_s=r_s,
        q_bar=q_bar,
        h_mat=h_mat,
        phit_q=phit_q,
        mcal=mcal,
        ncal_const=ncal_const,
        ncal_state_gain=ncal_state_gain,
        n_u=n_u,
        n_constr=2 * n_u + 2 * n_y,
        has_finite_bounds=has_finite,
    )


def build_constraints(cond: CondensedMpc, x) -> np.ndarray:
    """Stacked constraint right-hand side at the current state."""
    x = np.asarray(x, dtype=np.float64)
    # inf_const + finite_gain*x stays inf; no nan can appear since x is finite
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite entries")
    return cond.ncal_const + cond.ncal_state_gain @ x


def build_tracking_form(cond: CondensedMpc, x) -> tuple[np.ndarray, float]:
    """Gradient offset and constant of the tracking cost at state x.

    The horizon tracking cost is ``0.5 u'Hu + g_lin'u + c0`` with ``H``
    cached on the condensed problem.
    """
    x = np.asarray(x, dtype=np.float64)
    d = cond.f_mat @ x - cond.r_s
    g_lin = cond.phit_q @ d
    c0 = 0.5 * float(d @ cond.q_bar @ d)
    return g_lin, c0
