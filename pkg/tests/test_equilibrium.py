import math

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose

from relbolt.equilibrium import (
    BesselUnderflowWarning,
    FitError,
    JuttnerParams,
    MomentSet,
    bessel_k,
    bessel_k_scaled,
    fit_juttner,
    juttner_eval,
    juttner_grid,
    juttner_moments,
    moments,
)
from relbolt.grid import MomentumGrid

GOLDEN = {0: 0.4210244382407084, 1: 0.6019072301972346, 2: 1.6248388986351774}


def _independent_k(j, z):
    # K_j(z) = int_0^inf exp(-z cosh t) cosh(j t) dt, a different integral form;
    # the tail past t_max is below exp(-120) of the total
    mpmath.mp.dps = 25
    t_max = float(mpmath.acosh(1 + 120 / z + 2 * j))
    integrand = lambda t: mpmath.exp(-z * mpmath.cosh(t)) * mpmath.cosh(j * t)
    return float(mpmath.quad(integrand, mpmath.linspace(0, t_max, 6)))


class TestBessel:
    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_golden_values(self, j):
        assert_allclose(bessel_k(j, 1.0), GOLDEN[j], rtol=1e-13)

    @pytest.mark.parametrize("j", [0, 1, 2, 3])
    @pytest.mark.parametrize("z", [0.1, 1.0, 7.5, 40.0])
    def test_against_independent_quadrature(self, j, z):
        assert_allclose(bessel_k(j, z), _independent_k(j, z), rtol=1e-9)

    def test_recurrence(self):
        z = np.linspace(0.1, 50.0, 400)
        for j in (1, 2, 3):
            lo, mid, hi = (np.array([bessel_k_scaled(k, x) for x in z]) for k in (j - 1, j, j + 1))
            residual = np.abs(hi - lo - 2 * j / z * mid) / hi
            assert residual.max() < 1e-10

    def test_scaled_matches(self):
        assert_allclose(bessel_k_scaled(2, 3.0), bessel_k(2, 3.0) * math.exp(3.0), rtol=1e-14)

    def test_underflow_warns(self):
        with pytest.warns(BesselUnderflowWarning):
            assert bessel_k(1, 800.0) == 0.0
        assert bessel_k_scaled(1, 800.0) > 0

    @pytest.mark.parametrize("j, z", [(0, 0.0), (1, -1.0), (5, 1.0), (-1, 1.0)])
    def test_rejects_invalid(self, j, z):
        with pytest.raises(ValueError):
            bessel_k(j, z)


class TestJuttner:
    def test_params_validation(self):
        with pytest.raises(ValueError):
            JuttnerParams(0.0, 1.0)
        with pytest.raises(ValueError):
            JuttnerParams(1.0, -1.0)
        with pytest.raises(ValueError):
            JuttnerParams(1.0, 1.0, (1.0, 0.5, 0.0, 0.0))
        p = JuttnerParams.from_velocity(1.0, 1.0, (0.75, 0.0, 0.0))
        assert_allclose(p.u, (1.25, 0.75, 0.0, 0.0))

    def test_rest_frame_value(self):
        params = JuttnerParams(2.0, 0.5)
        expected = 2.0 / (4 * math.pi * 0.5 * bessel_k(2, 2.0)) * math.exp(-2.0 * math.sqrt(2.0))
        assert_allclose(juttner_eval(params, [1.0, 0.0, 0.0]), expected, rtol=1e-13)

    def test_four_and_three_vector_inputs(self):
        params = JuttnerParams.from_velocity(1.0, 0.7, (0.2, -0.3, 0.1))
        p = np.array([0.4, 0.5, -1.0])
        p4 = np.concatenate([[math.sqrt(1 + p @ p)], p])
        assert_allclose(juttner_eval(params, p), juttner_eval(params, p4), rtol=1e-15)

    def test_cold_temperature_is_finite(self):
        params = JuttnerParams(1.0, 1e-3)
        assert np.isfinite(juttner_eval(params, [0.0, 0.0, 0.0]))

    def test_closed_form_moments_match_grid(self):
        params = JuttnerParams.from_velocity(1.0, 0.5, (0.3, 0.0, -0.2))
        grid = MomentumGrid(56, 14.0)
        m = moments(juttner_grid(grid, params))
        assert_allclose(m.vector, juttner_moments(params).vector, rtol=1e-6, atol=1e-9)

    def test_rest_frame_energy(self):
        # mean energy per particle at rest is K1/K2 + 3 theta
        th = 2.0
        m = juttner_moments(JuttnerParams(1.0, th))
        assert_allclose(m.T00, bessel_k(1, 0.5) / bessel_k(2, 0.5) + 3 * th, rtol=1e-13)


class TestFit:
    @pytest.mark.parametrize(
        "n, theta, u",
        [(1.0, 1.0, (0, 0, 0)), (0.3, 0.05, (0.5, 0, 0)), (5.0, 20.0, (0, -2.0, 1.0)), (1.0, 0.4, (0.0, 0.0, 3.0))],
    )
    def test_round_trip(self, n, theta, u):
        params = JuttnerParams.from_velocity(n, theta, u)
        fitted = fit_juttner(juttner_moments(params))
        assert_allclose(fitted.n, n, rtol=1e-9)
        assert_allclose(fitted.theta, theta, rtol=1e-9)
        assert_allclose(fitted.u, params.u, rtol=1e-9, atol=1e-9)

    def test_grid_round_trip(self, small_two_bump):
        m = moments(small_two_bump)
        fitted = fit_juttner(m)
        assert_allclose(juttner_moments(fitted).vector, m.vector, rtol=1e-10, atol=1e-12)
        assert fitted.u[1] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize(
        "vector", [(0.0, 1.0, 0, 0, 0), (1.0, 0.5, 0, 0, 0), (1.0, 2.0, 2.5, 0, 0)]
    )
    def test_unphysical_moments(self, vector):
        with pytest.raises(ValueError):
            fit_juttner(MomentSet(*vector))

    def test_fit_error_carries_residual(self):
        err = FitError("stuck", 0.5)
        assert err.residual == 0.5 and "5.000e-01" in str(err)
