"""Plant models, matrix exponential and zero-order-hold discretization."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from fxpmpc.plant import (
    ContinuousPlant,
    DiscretePlant,
    default_satellite_plant,
    expm,
    plant_step,
    zoh_discretize,
)


def series_expm(a: np.ndarray, terms: int = 60) -> np.ndarray:
    """Truncated-series oracle with scaling and repeated squaring.

    Scaling keeps the norm below 1/2 so the Taylor tail is far beyond
    double precision at 60 terms.
    """
    norm = np.linalg.norm(a, 1)
    k = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0 else 0
    s = a / (2.0**k)
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for i in range(1, terms):
        term = term @ s / i
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


def random_stable_system(rng, n, p):
    a = rng.normal(size=(n, n))
    a = a - (np.max(np.real(np.linalg.eigvals(a))) + 0.5) * np.eye(n)
    b = rng.normal(size=(n, p))
    return a, b


class TestExpm:
    def test_identity_and_zero(self):
        assert np.allclose(expm(np.zeros((3, 3))), np.eye(3), rtol=0, atol=1e-15)
        e = expm(np.eye(2))
        assert np.allclose(np.diag(e), np.e, rtol=1e-14)

    def test_matches_series_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            n = int(rng.integers(2, 7))
            a = rng.normal(scale=rng.uniform(0.1, 3.0), size=(n, n))
            got = expm(a)
            ref = series_expm(a)
            denom = max(1.0, np.linalg.norm(ref))
            assert np.linalg.norm(got - ref) / denom < 1e-10

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            expm(np.ones((2, 3)))
        with pytest.raises(ValueError):
            expm(np.array([[np.nan, 0], [0, 0]]))


class TestZoh:
    def test_matches_ode_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(8):
            n, p = int(rng.integers(2, 6)), int(rng.integers(1, 4))
            a, b = random_stable_system(rng, n, p)
            h = float(rng.uniform(0.02, 0.5))
            plant = ContinuousPlant(a=a, b=b, c=np.eye(n), d=np.zeros((n, p)), h=h)
            disc = zoh_discretize(plant)
            x0 = rng.normal(size=n)
            u = rng.normal(size=p)
            sol = solve_ivp(
                lambda t, x: a @ x + b @ u,
                (0.0, h),
                x0,
                rtol=1e-12,
                atol=1e-14,
                dense_output=False,
            )
            ref = sol.y[:, -1]
            got = disc.a_d @ x0 + disc.b_d @ u
            assert np.linalg.norm(got - ref) / max(1.0, np.linalg.norm(ref)) < 1e-8

    def test_singular_a_has_exact_integrator_form(self):
        # double integrator: closed-form A_d and B_d are polynomial in h
        h = 0.25
        plant = ContinuousPlant(
            a=[[0.0, 1.0], [0.0, 0.0]],
            b=[[0.0], [1.0]],
            c=np.eye(2),
            d=np.zeros((2, 1)),
            h=h,
        )
        disc = zoh_discretize(plant)
        assert np.allclose(disc.a_d, [[1.0, h], [0.0, 1.0]], rtol=0, atol=1e-15)
        assert np.allclose(disc.b_d, [[h * h / 2], [h]], rtol=0, atol=1e-15)

    def test_preserves_output_maps(self):
        plant = default_satellite_plant()
        disc = zoh_discretize(plant)
        assert np.array_equal(disc.c, plant.c)
        assert np.array_equal(disc.d, plant.d)
        assert disc.h == plant.h


class TestPlantTypes:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            ContinuousPlant(a=np.ones((2, 3)), b=np.ones((2, 1)), c=np.eye(2), d=np.zeros((2, 1)), h=0.1)
        with pytest.raises(ValueError):
            ContinuousPlant(a=np.eye(2), b=np.ones((3, 1)), c=np.eye(2), d=np.zeros((2, 1)), h=0.1)
        with pytest.raises(ValueError):
            ContinuousPlant(a=np.eye(2), b=np.ones((2, 1)), c=np.eye(2), d=np.zeros((2, 1)), h=0.0)

    def test_arrays_frozen(self):
        plant = default_satellite_plant()
        with pytest.raises(ValueError):
            plant.a[0, 0] = 5.0

    def test_step_shapes_and_feedthrough(self):
        disc = DiscretePlant(
            a_d=np.eye(2), b_d=[[1.0], [0.0]], c=[[1.0, 0.0]], d=[[2.0]], h=0.1
        )
        x1, y = plant_step(disc, [1.0, 2.0], [3.0])
        assert np.array_equal(x1, [4.0, 2.0])
        assert np.array_equal(y, [7.0])  # includes d @ u
        with pytest.raises(ValueError):
            plant_step(disc, [1.0, 2.0, 3.0], [0.0])


class TestDefaultPlant:
    def test_dimensions(self):
        plant = default_satellite_plant()
        assert plant.a.shape == (7, 7)
        assert plant.b.shape == (7, 4)
        assert plant.c.shape == (7, 7) and np.array_equal(plant.c, np.eye(7))
        assert not plant.d.any()

    def test_axis_structure(self):
        plant = default_satellite_plant()
        a, b = plant.a, plant.b
        # kinematics: angle_dot = rate
        assert a[0, 3] == a[1, 4] == a[2, 5] == 1.0
        # roll/pitch restored, yaw destabilized, wheel decays
        assert a[3, 0] < 0 and a[4, 1] < 0
        assert a[5, 2] > 0
        assert a[6, 6] < 0
        # wheel command accelerates the wheel and reacts on yaw
        assert b[6, 3] > 0 and b[5, 3] < 0

    def test_zero_input_zero_state_fixed_point(self):
        disc = zoh_discretize(default_satellite_plant())
        x, y = plant_step(disc, np.zeros(7), np.zeros(4))
        assert not x.any() and not y.any()
