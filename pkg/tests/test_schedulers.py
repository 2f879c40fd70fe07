"""Schedule evaluation and parameterization-conversion identities."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from flowpoe.errors import ConfigError, DomainError, NonFiniteError, SingularityError
from flowpoe.schedulers import (Scheduler, conversion_coefficients,
                                eval_schedule, flow_from_score,
                                guidance_variance, score_from_flow,
                                x1_from_flow)

SCHED = Scheduler()


class TestSchedule:
    def test_ot_values(self):
        alpha, sigma, alpha_dot, sigma_dot = eval_schedule(SCHED, 0.3)
        assert_allclose([alpha, sigma, alpha_dot, sigma_dot], [0.3, 0.7, 1.0, -1.0])

    def test_endpoints(self):
        assert eval_schedule(SCHED, 0.0) == (0.0, 1.0, 1.0, -1.0)
        assert eval_schedule(SCHED, 1.0) == (1.0, 0.0, 1.0, -1.0)

    def test_array_input(self):
        t = np.array([0.2, 0.5, 0.9])
        alpha, sigma, alpha_dot, sigma_dot = eval_schedule(SCHED, t)
        assert_allclose(alpha, t)
        assert_allclose(sigma, 1 - t)
        assert_allclose(alpha_dot, np.ones(3))
        assert_allclose(sigma_dot, -np.ones(3))

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            eval_schedule(SCHED, -0.01)
        with pytest.raises(DomainError):
            eval_schedule(SCHED, 1.01)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            Scheduler(kind="variance_preserving")

    def test_bad_t_min_rejected(self):
        with pytest.raises(ConfigError):
            Scheduler(t_min=0.0)
        with pytest.raises(ConfigError):
            Scheduler(t_min=1.0)


class TestCoefficients:
    def test_midpoint_values(self):
        # t=0.5: a=1/0.5=2, b=(0.25+0.25)/0.5=1, denom=-0.5-0.5=-1, c=1, d=0.5
        coef = conversion_coefficients(SCHED, 0.5)
        assert_allclose([coef.a, coef.b, coef.c, coef.d], [2.0, 1.0, 1.0, 0.5])

    def test_ot_c_is_one_d_is_one_minus_t(self):
        for t in (0.05, 0.3, 0.8, 1.0):
            coef = conversion_coefficients(SCHED, t)
            assert_allclose(coef.c, 1.0, atol=1e-14)
            assert_allclose(coef.d, 1.0 - t, atol=1e-14)

    def test_below_t_min_rejected(self):
        with pytest.raises(SingularityError):
            conversion_coefficients(SCHED, 0.5e-3)


class TestConversions:
    def test_score_flow_roundtrip(self):
        rng = np.random.default_rng(7)
        y = rng.standard_normal((4, 8))
        s = rng.standard_normal((4, 8))
        for t in (0.01, 0.5, 0.99):
            u = flow_from_score(y, s, SCHED, t)
            assert_allclose(score_from_flow(y, u, SCHED, t), s, atol=1e-10)

    def test_tweedie_identity(self):
        # x1_from_flow(y, u(s)) must equal (y + sigma^2 s)/alpha for any s.
        rng = np.random.default_rng(8)
        y = rng.standard_normal(64)
        s = rng.standard_normal(64)
        for t in (0.1, 0.5, 0.9):
            alpha, sigma, _, _ = eval_schedule(SCHED, t)
            u = flow_from_score(y, s, SCHED, t)
            assert_allclose(x1_from_flow(y, u, SCHED, t),
                            (y + sigma**2 * s) / alpha, atol=1e-10)

    def test_ot_x1_identity(self):
        # For the OT path x1_hat = y + (1-t) u holds exactly, even at t=1.
        rng = np.random.default_rng(9)
        y = rng.standard_normal(32)
        u = rng.standard_normal(32)
        for t in (0.25, 0.75, 1.0):
            got = x1_from_flow(y, u, SCHED, t)
            expected = y + (1.0 - t) * u
            assert np.array_equal(got, expected)

    def test_x1_at_one_returns_y(self):
        y = np.array([1.0, -2.0, 3.0])
        assert_allclose(x1_from_flow(y, np.ones(3) * 99, SCHED, 1.0), y)

    def test_score_undefined_at_one(self):
        # b = sigma(sigma - sigma_dot*alpha)/alpha -> 0 at t=1.
        with pytest.raises(SingularityError):
            score_from_flow(np.zeros(3), np.zeros(3), SCHED, 1.0)

    def test_non_finite_rejected(self):
        bad = np.array([1.0, np.nan])
        with pytest.raises(NonFiniteError):
            flow_from_score(bad, np.zeros(2), SCHED, 0.5)
        with pytest.raises(NonFiniteError):
            score_from_flow(np.zeros(2), bad, SCHED, 0.5)


class TestGuidanceVariance:
    def test_known_value(self):
        # t=0.2: sigma^2=0.64, alpha^2=0.04 -> 0.64/0.68 = 16/17.
        assert_allclose(guidance_variance(SCHED, 0.2), 16.0 / 17.0)

    def test_limits(self):
        assert_allclose(guidance_variance(SCHED, 1.0), 0.0)
        assert_allclose(guidance_variance(SCHED, 0.0), 1.0)

    def test_monotone_decreasing(self):
        ts = np.linspace(0.0, 1.0, 41)
        vals = [guidance_variance(SCHED, t) for t in ts]
        assert all(v2 < v1 for v1, v2 in zip(vals, vals[1:]))
