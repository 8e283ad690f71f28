import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_less

from relbolt.kinematics import (
    ETA,
    MassShellError,
    apply,
    com_boost,
    g_relative,
    inverse,
    lift,
    lorentz_defect,
    minkowski_dot,
    moller_velocity,
    moller_velocity_cross,
    pure_boost,
    random_momenta,
    s_invariant,
    scattering_cosine,
)
from relbolt.collision import post_collision


def pair(rng, n, scale=3.0):
    return lift(random_momenta(rng, n, scale)), lift(random_momenta(rng, n, scale))


class TestLift:
    @pytest.mark.parametrize(
        "p, energy",
        [((0, 0, 0), 1.0), ((1, 0, 0), math.sqrt(2.0)), ((0, 3, 4), math.sqrt(26.0))],
    )
    def test_hand_values(self, p, energy):
        assert_allclose(lift(p), [energy, *p], rtol=1e-15)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            lift([np.inf, 0, 0])
        with pytest.raises(ValueError):
            lift([0, 0])

    def test_mass_shell(self, rng):
        p = lift(random_momenta(rng, 10_000, 30.0))
        assert_allclose(minkowski_dot(p, p) / p[:, 0] ** 2, -1.0 / p[:, 0] ** 2, atol=1e-15)


class TestInvariants:
    def test_minkowski_dot_examples(self):
        rest = lift((0, 0, 0))
        assert minkowski_dot(rest, rest) == -1.0
        assert_allclose(minkowski_dot(lift((1, 0, 0)), rest), -math.sqrt(2.0))
        assert minkowski_dot([0, 1, 0, 0], [0, 1, 0, 0]) == 1.0

    def test_s_examples(self):
        p = lift((0.3, -1.2, 2.0))
        assert_allclose(s_invariant(p, p), 4.0, rtol=1e-14)
        assert_allclose(s_invariant(lift((1, 0, 0)), lift((-1, 0, 0))), 8.0, rtol=1e-15)
        assert_allclose(s_invariant(lift((1, 0, 0)), lift((0, 0, 0))), 2 * (math.sqrt(2) + 1), rtol=1e-15)

    def test_g_examples(self):
        p = lift((0.3, -1.2, 2.0))
        assert g_relative(p, p) == 0.0
        assert_allclose(g_relative(lift((1, 0, 0)), lift((-1, 0, 0))), 2.0, rtol=1e-15)
        assert_allclose(g_relative(lift((1, 0, 0)), lift((0, 0, 0))), 0.9101797211244547, rtol=1e-14)

    def test_g_rejects_off_shell(self):
        with pytest.raises(MassShellError):
            g_relative([1.0, 0, 0, 0], [0.5, 0, 0, 0])

    def test_s_minus_g2_is_four(self, rng):
        p = lift(rng.uniform(-100, 100, (1_000_000, 3)) / math.sqrt(3))
        q = lift(rng.uniform(-100, 100, (1_000_000, 3)) / math.sqrt(3))
        g = g_relative(p, q)
        s = s_invariant(p, q)
        assert np.max(np.abs(s - g * g - 4.0) / s) < 1e-10

    def test_coercive_bounds(self, rng):
        p, q = pair(rng, 200_000)
        d = np.linalg.norm(p[:, 1:] - q[:, 1:], axis=1)
        g = g_relative(p, q)
        assert_array_less(d / np.sqrt(p[:, 0] * q[:, 0]), g + 1e-10 * d)
        assert_array_less(g, d + 1e-10 * d)

    def test_moller_examples(self):
        p = lift((0.5, 0.5, 0.5))
        assert moller_velocity(p, p) == 0.0
        assert_allclose(moller_velocity(lift((1, 0, 0)), lift((0, 0, 0))), math.sqrt(2.0), rtol=1e-14)
        assert_allclose(moller_velocity(lift((1, 0, 0)), lift((-1, 0, 0))), 2 * math.sqrt(2.0), rtol=1e-14)

    def test_three_velocity_form_is_half(self, rng):
        p, q = pair(rng, 100_000)
        assert_allclose(moller_velocity(p, q), 2.0 * moller_velocity_cross(p, q), rtol=0, atol=1e-10)

    def test_boost_invariance(self, rng):
        p, q = pair(rng, 10_000)
        beta = rng.uniform(-0.5, 0.5, (10_000, 3))
        lam = pure_boost(beta)
        bp, bq = apply(lam, p), apply(lam, q)
        assert_allclose(s_invariant(bp, bq), s_invariant(p, q), rtol=1e-9)
        assert_allclose(g_relative(bp, bq), g_relative(p, q), rtol=1e-9)
        assert_allclose(
            moller_velocity(bp, bq) * bp[:, 0] * bq[:, 0],
            moller_velocity(p, q) * p[:, 0] * q[:, 0],
            rtol=1e-9,
        )


class TestScatteringCosine:
    def test_identity_and_exchange(self):
        p, q = lift((1.0, 0.2, 0)), lift((-0.3, 0.5, 2.0))
        assert_allclose(scattering_cosine(p, q, p, q), 1.0)
        assert_allclose(scattering_cosine(p, q, q, p), -1.0)

    def test_rejects_zero_g(self):
        p = lift((1.0, 0, 0))
        with pytest.raises(ValueError):
            scattering_cosine(p, p, p, p)

    def test_matches_com_frame_angle(self, rng):
        p, q = pair(rng, 1000)
        omega = rng.normal(size=(1000, 3))
        omega /= np.linalg.norm(omega, axis=1, keepdims=True)
        pp, qp = post_collision(p, q, omega)
        lam = com_boost(p, q)
        before = apply(lam, p - q)[:, 1:]
        after = apply(lam, pp - qp)[:, 1:]
        cos_com = np.sum(before * after, axis=1) / (np.linalg.norm(before, axis=1) * np.linalg.norm(after, axis=1))
        assert_allclose(scattering_cosine(p, q, pp, qp), cos_com, atol=1e-9)


class TestComBoost:
    def test_collinear_example(self):
        p, q = lift((1, 0, 0)), lift((-1, 0, 0))
        lam = com_boost(p, q)
        assert_allclose(apply(lam, p + q), [2 * math.sqrt(2), 0, 0, 0], atol=1e-12)
        assert_allclose(-apply(lam, p - q), [0, 0, 0, 2.0], atol=1e-12)
        assert lorentz_defect(lam) < 1e-12

    def test_orthogonal_example(self):
        p, q = lift((1, 0, 0)), lift((0, 1, 0))
        lam = com_boost(p, q)
        assert_allclose(-apply(lam, p - q), [0, 0, 0, g_relative(p, q)], atol=1e-12)

    def test_rejects_equal_momenta(self):
        p = lift((0.4, 0.1, 0))
        with pytest.raises(ValueError):
            com_boost(p, p)

    def test_identities_random(self, rng):
        p, q = pair(rng, 100_000)
        lam = com_boost(p, q)
        s = s_invariant(p, q)
        g = g_relative(p, q)
        tot = apply(lam, p + q)
        diff = -apply(lam, p - q)
        scale = p[:, 0] + q[:, 0]
        assert np.max(np.abs(tot[:, 0] - np.sqrt(s)) / np.sqrt(s)) < 1e-10
        assert np.max(np.abs(tot[:, 1:]).max(axis=1) / scale) < 1e-10
        assert np.max(np.abs(diff[:, 3] - g) / scale) < 1e-10
        assert np.max(np.abs(diff[:, :3]).max(axis=1) / scale) < 1e-10
        assert np.max(lorentz_defect(lam) / scale**2) < 1e-12
        assert_allclose(np.linalg.det(lam), 1.0, atol=1e-9)

    def test_near_collinear_path(self, rng):
        p3 = random_momenta(rng, 1000)
        q3 = -0.7 * p3 + 1e-14 * rng.normal(size=p3.shape)
        p, q = lift(p3), lift(q3)
        lam = com_boost(p, q)
        assert np.all(np.isfinite(lam))
        assert_allclose(apply(lam, p + q)[:, 1:], 0.0, atol=1e-9)
        assert np.max(lorentz_defect(lam)) < 1e-9

    def test_first_row_bound(self, rng):
        p, q = pair(rng, 200_000)
        lam = com_boost(p, q)
        bound = math.sqrt(2.0) * np.sqrt(p[:, 0] * q[:, 0])
        assert np.all(np.abs(lam[:, 0, :]).max(axis=1) <= bound * (1 + 1e-10))


class TestApply:
    def test_identity(self):
        v = np.array([1.0, 2.0, -3.0, 0.5])
        assert_allclose(apply(np.eye(4), v), v)

    def test_round_trip_and_invariance(self, rng):
        p, q = pair(rng, 1000)
        lam = com_boost(p, q)
        v = rng.normal(size=(1000, 4))
        back = apply(inverse(lam), apply(lam, v))
        assert_allclose(back, v, atol=1e-12 * np.abs(lam).max())
        assert_allclose(minkowski_dot(apply(lam, v), apply(lam, v)), minkowski_dot(v, v), rtol=1e-9, atol=1e-9)

    def test_chain_preserves_mass_shell(self, rng):
        p = lift(random_momenta(rng, 1000))
        for _ in range(5):
            p = apply(pure_boost(rng.uniform(-0.4, 0.4, (1000, 3))), p)
        assert_allclose(minkowski_dot(p, p) / p[:, 0] ** 2, -1.0 / p[:, 0] ** 2, atol=1e-13)

    def test_eta_is_metric(self):
        assert_allclose(ETA, np.diag([-1.0, 1, 1, 1]))
