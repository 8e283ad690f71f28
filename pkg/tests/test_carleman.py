import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from relbolt.carleman import (
    PREFACTOR,
    carleman_terms,
    chart_for,
    disk_rule,
    q_gain_carleman,
    q_gain_mollified,
    step_u,
)
from relbolt.collision import q_gain
from relbolt.grid import GridFunction
from relbolt.kinematics import g_relative, lift, minkowski_dot, random_momenta

POINTS = np.array([[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [1.5, -0.5, 0.5], [-2.5, 1.5, 0.5], [3.5, 0.5, -0.5]])


def test_step_u():
    assert step_u(1.0) == 1.0
    assert step_u(0.0) == 0.0
    assert step_u(-3.5) == 0.0
    assert_allclose(step_u(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 1.0])


class TestChart:
    def test_hand_example(self):
        chart = chart_for(lift((0, 0, 0)), lift((1, 0, 0)))
        assert_allclose(chart.a, [math.sqrt(2) - 1, 1, 0, 0], rtol=1e-15)
        assert_allclose(minkowski_dot(chart.a, chart.a), 1 - (math.sqrt(2) - 1) ** 2, rtol=1e-14)

    def test_boosted_vector_is_spatial(self, rng):
        for p, pp in zip(random_momenta(rng, 200), random_momenta(rng, 200)):
            chart = chart_for(p, pp)
            A = chart.boost @ chart.a
            assert abs(A[0]) < 1e-10 * np.linalg.norm(A[1:])

    def test_plane_points_satisfy_constraint(self, rng):
        p, pp = random_momenta(rng, 1)[0], random_momenta(rng, 1)[0]
        chart = chart_for(p, pp)
        uv = rng.normal(scale=3.0, size=(10_000, 2))
        q = chart.lab_point(uv[:, 0], uv[:, 1])
        assert_allclose(minkowski_dot(q, q), -1.0, rtol=1e-9)
        scale = q[:, 0] * np.linalg.norm(chart.a)
        assert np.max(np.abs(chart.constraint(q)) / scale) < 1e-9

    def test_constraint_expansion(self, rng):
        # a.(q' - p) = 0  <=>  a.q' = p'.p + 1 on the mass shell
        n = 10_000
        P, PP, Q = lift(random_momenta(rng, n)), lift(random_momenta(rng, n)), lift(random_momenta(rng, n))
        a = PP - P
        lhs = minkowski_dot(a, Q - P)
        rhs = minkowski_dot(a, Q) - minkowski_dot(PP, P) - 1.0
        assert_allclose(lhs, rhs, atol=1e-9 * np.max(np.abs(lhs)))

    def test_space_like_norm_is_g_squared(self, rng):
        for p, pp in zip(random_momenta(rng, 100), random_momenta(rng, 100)):
            chart = chart_for(p, pp)
            assert_allclose(minkowski_dot(chart.a, chart.a), g_relative(lift(pp), lift(p)) ** 2, rtol=1e-10)

    def test_excluded_node(self):
        with pytest.raises(ValueError, match="separation"):
            chart_for([0.3, 0.1, 0.0], [0.3, 0.1, 0.0])


def test_disk_rule_area():
    rule = disk_rule(5.0, 0.05)
    assert_allclose(rule[:, 2].sum(), math.pi * 25.0, rtol=1e-3)
    assert np.all(rule[:, 0] ** 2 + rule[:, 1] ** 2 <= 25.0)


class TestCarlemanGain:
    def test_zero(self, small_grid):
        assert not np.any(q_gain_carleman(GridFunction.zeros(small_grid), POINTS))

    @pytest.mark.parametrize("state", ["small_juttner", "small_two_bump"])
    def test_agrees_with_center_of_momentum_form(self, state, request):
        f = request.getfixturevalue(state)
        res = carleman_terms(f, POINTS)
        assert not res.truncation_warning
        assert_allclose(res.gain, q_gain(f, POINTS), rtol=0.05)

    def test_prefactor_is_linear(self, small_two_bump):
        p = POINTS[1]
        half = carleman_terms(small_two_bump, p, prefactor=0.5 * PREFACTOR).gain
        assert_allclose(2 * half, q_gain_carleman(small_two_bump, p), rtol=1e-14)

    def test_small_disk_flags_truncation(self, small_two_bump):
        assert carleman_terms(small_two_bump, POINTS[:1], radius=1.0).truncation_warning

    def test_rejects_bad_rule(self, small_two_bump):
        with pytest.raises(ValueError):
            q_gain_carleman(small_two_bump, POINTS[0], spacing=0.0)


class TestMollified:
    def test_zero(self, small_grid):
        assert q_gain_mollified(GridFunction.zeros(small_grid), [0.0, 0.0, 0.0]) == (0.0, 0.0)

    def test_deterministic(self, small_two_bump):
        a = q_gain_mollified(small_two_bump, POINTS[2], n_samples=20_000, seed=7)
        b = q_gain_mollified(small_two_bump, POINTS[2], n_samples=20_000, seed=7)
        c = q_gain_mollified(small_two_bump, POINTS[2], n_samples=20_000, seed=8)
        assert a == b and a != c

    def test_validation(self, small_two_bump):
        with pytest.raises(ValueError):
            q_gain_mollified(small_two_bump, POINTS[0], eps=0.0)
        with pytest.raises(ValueError):
            q_gain_mollified(small_two_bump, POINTS[0], n_samples=999)

    @pytest.mark.parametrize("state", ["small_juttner", "small_two_bump"])
    def test_three_way_consistency(self, state, request):
        # pairwise agreement within max(5% relative, 3 standard errors)
        f = request.getfixturevalue(state)
        com = q_gain(f, POINTS[:3])
        carl = q_gain_carleman(f, POINTS[:3])
        for p, a, b in zip(POINTS[:3], com, carl):
            est, err = q_gain_mollified(f, p, seed=3)
            for ref in (a, b):
                assert abs(est - ref) <= max(0.05 * abs(ref), 3 * err)
