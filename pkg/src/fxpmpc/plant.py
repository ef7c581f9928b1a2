"""Linear plant models and zero-order-hold discretization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


def _as_matrix(a, name: str, shape: tuple[int, int]) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ContinuousPlant:
    """State-space model dx/dt = a x + b u, y = c x + d u.

    ``h`` is the sampling period used when the model is discretized.
    Arrays are normalized to float64 and frozen after construction.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    h: float

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"a must be square, got shape {a.shape}")
        n = a.shape[0]
        p = np.asarray(self.b, dtype=np.float64).shape[-1] if np.ndim(self.b) == 2 else -1
        if p < 1:
            raise ValueError("b must be a 2-D array with at least one column")
        m = np.asarray(self.c, dtype=np.float64).shape[0] if np.ndim(self.c) == 2 else -1
        if m < 1:
            raise ValueError("c must be a 2-D array with at least one row")
        object.__setattr__(self, "a", _as_matrix(self.a, "a", (n, n)))
        object.__setattr__(self, "b", _as_matrix(self.b, "b", (n, p)))
        object.__setattr__(self, "c", _as_matrix(self.c, "c", (m, n)))
        object.__setattr__(self, "d", _as_matrix(self.d, "d", (m, p)))
        h = float(self.h)
        if not np.isfinite(h) or h <= 0:
            raise ValueError(f"sampling period h must be positive, got {h}")
        object.__setattr__(self, "h", h)

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class DiscretePlant:
    """State-space model x+ = a_d x + b_d u, y = c x + d u at period h."""

    a_d: np.ndarray
    b_d: np.ndarray
    c: np.ndarray
    d: np.ndarray
    h: float

    def __post_init__(self) -> None:
        a = np.asarray(self.a_d, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"a_d must be square, got shape {a.shape}")
        n = a.shape[0]
        p = np.asarray(self.b_d, dtype=np.float64).shape[-1] if np.ndim(self.b_d) == 2 else -1
        if p < 1:
            raise ValueError("b_d must be a 2-D array with at least one column")
        m = np.asarray(self.c, dtype=np.float64).shape[0] if np.ndim(self.c) == 2 else -1
        if m < 1:
            raise ValueError("c must be a 2-D array with at least one row")
        object.__setattr__(self, "a_d", _as_matrix(self.a_d, "a_d", (n, n)))
        object.__setattr__(self, "b_d", _as_matrix(self.b_d, "b_d", (n, p)))
        object.__setattr__(self, "c", _as_matrix(self.c, "c", (m, n)))
        object.__setattr__(self, "d", _as_matrix(self.d, "d", (m, p)))
        h = float(self.h)
        if not np.isfinite(h) or h <= 0:
            raise ValueError(f"sampling period h must be positive, got {h}")
        object.__setattr__(self, "h", h)

    @property
    def n_states(self) -> int:
        return self.a_d.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b_d.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.c.shape[0]


def expm(a) -> np.ndarray:
    """Matrix exponential of a square real matrix.

    Thin wrapper over the scaling-and-squaring Pade implementation; kept
    as a named seam so alternative backends can be swapped in and tested
    against series/ODE oracles in one place.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("expm input contains non-finite entries")
    return scipy.linalg.expm(arr)


def zoh_discretize(plant: ContinuousPlant) -> DiscretePlant:
    """Discretize under a zero-order hold on the input.

    Uses the block-matrix exponential of ``[[a, b], [0, 0]] * h``, whose
    top rows are exactly ``[a_d, b_d]``; this handles singular ``a``
    without special cases.
    """
    n, p = plant.n_states, plant.n_inputs
    blk = np.zeros((n + p, n + p))
    blk[:n, :n] = plant.a
    blk[:n, n:] = plant.b
    e = expm(blk * plant.h)
    return DiscretePlant(
        a_d=e[:n, :n], b_d=e[:n, n:], c=plant.c, d=plant.d, h=plant.h
    )


def plant_step(plant: DiscretePlant, x, u) -> tuple[np.ndarray, np.ndarray]:
    """One simulation step: returns (x_next, y) for state x and input u."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if x.shape != (plant.n_states,):
        raise ValueError(f"x must have shape ({plant.n_states},), got {x.shape}")
    if u.shape != (plant.n_inputs,):
        raise ValueError(f"u must have shape ({plant.n_inputs},), got {u.shape}")
    x_next = plant.a_d @ x + plant.b_d @ u
    y = plant.c @ x + plant.d @ u
    return x_next, y


def default_satellite_plant() -> ContinuousPlant:
    """Rigid-body satellite attitude model with a momentum-wheel channel.

    Seven states: roll, pitch, yaw angles (rad), their body rates (rad/s)
    and one wheel speed (rad/s).  Four inputs: two axis torquer commands,
    one weak yaw torquer command and one wheel torque command (V).  Small-
    angle kinematics decouple the axes.  A gradient-style stiffness
    restores roll and pitch but destabilizes yaw, so the yaw loop must
    stay active while the other two axes can coast.  The wheel
    accelerates under its command, bleeds off through bearing drag, and
    exerts the matching reaction torque on the yaw axis, so yaw is
    steered by the weak torquer together with momentum exchange while
    stored wheel speed slowly decays.  Numeric constants are generic
    textbook-scale values for a small satellite, not calibrated to any
    particular vehicle.
    """
    inertia = np.array([10.0, 12.0, 8.0])  # kg m^2, principal axes
    torque_gain = np.array([1.0, 1.0, 0.02])  # N m per volt of command
    stiffness_rp = -0.01  # 1/s^2, restoring on roll and pitch
    stiffness_yaw = 0.006  # 1/s^2, destabilizing on yaw
    wheel_tau = 50.0  # s, wheel speed decay constant
    wheel_gain = 1.0  # (rad/s)/s per volt of wheel command
    wheel_inertia = 0.05  # kg m^2, sets the reaction torque on yaw

    a = np.zeros((7, 7))
    a[0, 3] = a[1, 4] = a[2, 5] = 1.0  # angle rates
    a[3, 0] = a[4, 1] = stiffness_rp
    a[5, 2] = stiffness_yaw
    a[6, 6] = -1.0 / wheel_tau

    b = np.zeros((7, 4))
    b[3, 0] = torque_gain[0] / inertia[0]
    b[4, 1] = torque_gain[1] / inertia[1]
    b[5, 2] = torque_gain[2] / inertia[2]
    b[5, 3] = -wheel_inertia * wheel_gain / inertia[2]  # reaction on yaw
    b[6, 3] = wheel_gain

    c = np.eye(7)
    d = np.zeros((7, 4))
    return ContinuousPlant(a=a, b=b, c=c, d=d, h=0.1)
