"""
Growth fields: assumption checks, the characteristic flow and its properties.
"""

import numpy as np
import pytest

from errors import DomainError
from growth import (GrowthField, Linear, Saturating, UserRate, Zero, family_from_name, flow,
                    flow_property_suite, steps_for, verify_growth_assumptions)


class TestFlow:
    """Characteristics of linear growth are known in closed form"""

    def test_zero_field_is_identity(self, no_growth):
        v = np.geomspace(1e-3, 1e3, 7)
        result = flow(no_growth, 0.0, 1.0, v)
        np.testing.assert_array_equal(result.y, v)
        np.testing.assert_array_equal(result.jac, np.ones_like(v))

    def test_linear_backward(self, linear_growth):
        result = flow(linear_growth, 0.0, 1.0, 2.0)
        assert result.y == pytest.approx(2.0 * np.exp(-0.5), rel=1e-6)
        assert result.jac == pytest.approx(np.exp(-0.5), rel=1e-6)

    def test_linear_forward(self, linear_growth):
        result = flow(linear_growth, 1.5, 0.5, np.array([0.1, 10.0]))
        np.testing.assert_allclose(result.y, np.array([0.1, 10.0]) * np.exp(0.5), rtol=1e-6)

    def test_inverse_identity(self):
        field = GrowthField(Saturating(1.0, 1.0), 1.1, 2.1)
        v = np.geomspace(1e-2, 1e2, 9)
        there = flow(field, 0.2, 1.0, v).y
        back = flow(field, 1.0, 0.2, there).y
        assert np.all(np.abs(back - v) <= 1e-8 * np.maximum(v, 1.0))

    def test_nonpositive_volume_raises(self, linear_growth):
        with pytest.raises(DomainError):
            flow(linear_growth, 0.0, 1.0, 0.0)
        with pytest.raises(DomainError):
            flow(linear_growth, -0.1, 1.0, 1.0)

    def test_step_rule(self, linear_growth):
        # A = 0.6: 1/16 / 0.6 per step
        assert steps_for(linear_growth, 1.0) == 10
        assert steps_for(linear_growth, 0.0) == 1


class TestAssumptions:
    def test_linear_within_bounds(self, linear_growth):
        report = verify_growth_assumptions(linear_growth)
        assert report.ok
        assert all(report.checks.values())
        assert report.worst["value"] == pytest.approx(0.5, rel=1e-6)

    def test_slope_violation(self):
        report = verify_growth_assumptions(GrowthField(Linear(2.0), 1.0, 1.0))
        assert not report.ok
        assert report.worst["check"] == "slope"
        assert report.worst["value"] == pytest.approx(2.0, rel=1e-6)
        assert "ok = false" in report.as_text()

    def test_saturating_within_bounds(self):
        assert verify_growth_assumptions(GrowthField(Saturating(1.0, 1.0), 1.1, 2.1)).ok

    def test_negative_rate_fails(self):
        field = GrowthField(UserRate(lambda t, v: -0.1 * v), 1.0, 1.0)
        report = verify_growth_assumptions(field)
        assert not report.checks["nonnegative"]
        assert report.worst["check"] == "nonnegative"

    def test_nonvanishing_rate_fails(self):
        field = GrowthField(UserRate(lambda t, v: 0.1 + 0.0 * v), 1.0, 1.0)
        report = verify_growth_assumptions(field)
        assert not report.checks["vanishes_at_zero"]

    def test_bounds_must_be_positive(self):
        with pytest.raises(DomainError):
            GrowthField(Zero(), 0.0, 1.0)


class TestFlowProperties:
    @pytest.mark.parametrize("field", [
        GrowthField(Linear(0.5), 0.6, 0.1),
        GrowthField(Saturating(1.0, 1.0), 1.1, 2.1),
        GrowthField(Saturating(1.0, 1.0), 1.0, 2.0),
        GrowthField(Zero(), 1.0, 1.0),
    ])
    def test_suite_passes(self, field):
        report = flow_property_suite(field, trials=1000)
        assert report.ok, report.as_text()
        assert report.trials == 1000
        assert report.max_error["inverse"] <= 1e-8
        assert set(report.failures) == {"monotone_backward", "forward_bound", "speed_bound",
                                        "forward_increase", "inverse", "jacobian"}

    def test_deterministic_for_seed(self, linear_growth):
        first = flow_property_suite(linear_growth, trials=50, seed=3)
        second = flow_property_suite(linear_growth, trials=50, seed=3)
        assert first.max_error == second.max_error


class TestFamilies:
    def test_from_name(self):
        assert family_from_name("linear", [0.5]) == Linear(0.5)
        assert family_from_name("Saturating", ["1", "2"]) == Saturating(1.0, 2.0)
        assert family_from_name("zero", []) == Zero()

    def test_errors(self):
        with pytest.raises(DomainError):
            family_from_name("logistic", [1.0])
        with pytest.raises(DomainError):
            family_from_name("linear", [])
        with pytest.raises(DomainError):
            Saturating(1.0, 0.0)
