import math

import numpy as np
import pytest

from artifact.criteria import (GrowthBound, MTable, Verdict, change_of_variable_check, dyadic_integral,
                               general_visibility_integral_test, goldilocks_integral_test,
                               non_goldilocks_witness, power_surrogate, visibility_integrand)
from artifact.distance_estimators import spike_constants
from artifact.domains import build_single_spike_caltrop
from artifact.errors import DomainError, PreconditionError


class TestGoldilocks:
    def test_disc_profile(self):
        rep = goldilocks_integral_test(lambda r: 2 * r - r**2, 0.5)
        assert rep.verdict == Verdict.CONVERGENT
        assert rep.exponent + 1 == pytest.approx(1.0, abs=0.02)

    def test_sqrt(self):
        rep = goldilocks_integral_test(power_surrogate(0.5), 0.5)
        assert rep.verdict == Verdict.CONVERGENT
        assert rep.exponent + 1 == pytest.approx(0.5, abs=1e-9)

    def test_inverse_log(self):
        r = np.geomspace(1e-12, 0.5, 80)
        rep = goldilocks_integral_test((r, 1 / np.log(1 / r)), 0.5)
        assert rep.verdict == Verdict.DIVERGENT
        assert rep.model == "log-power"

    def test_too_few_rows(self):
        with pytest.raises(PreconditionError):
            goldilocks_integral_test(([1e-3, 1e-2], [1.0, 2.0]), 0.5)

    def test_report_serialises(self):
        rep = goldilocks_integral_test(power_surrogate(0.5), 0.5)
        assert '"verdict": "CONVERGENT"' in rep.to_json()


class TestGeneralVisibility:
    @pytest.mark.parametrize("p0,expected", [(1.1, Verdict.CONVERGENT), (1.25, Verdict.CONVERGENT),
                                             (1.4, Verdict.CONVERGENT), (1.6, Verdict.DIVERGENT),
                                             (2.0, Verdict.DIVERGENT)])
    def test_sqrt_power_threshold(self, p0, expected):
        rep = general_visibility_integral_test(power_surrogate(0.5), GrowthBound.power(p0 - 1), 0.5)
        assert rep.verdict == expected

    def test_logarithmic_reduction(self):
        r = np.geomspace(1e-8, 0.5, 50)
        M = np.sqrt(r) * (1 + 0.1 * np.sin(np.log(r)))
        f = GrowthBound.logarithmic(C=0.3, alpha=2.5)
        np.testing.assert_allclose(visibility_integrand(M, r, f), 2.5 * M / r, rtol=1e-12, atol=0)

    def test_threshold_is_divergent(self):
        # integrand r^{-1} exactly: the snapped exponent sits on the threshold
        rep = general_visibility_integral_test(power_surrogate(0.5), GrowthBound.power(0.5), 0.5)
        assert rep.verdict == Verdict.DIVERGENT


class TestChangeOfVariable:
    def test_logarithmic_linear_profile(self):
        rep = change_of_variable_check(lambda r: np.asarray(r), GrowthBound.logarithmic(0.0, 1.0))
        assert rep.agree
        assert rep.relative_error <= 0.01

    def test_unit_parameters(self):
        rep = change_of_variable_check(power_surrogate(0.5), GrowthBound.power(0.25), lam=1.0, kappa=0.0)
        assert rep.relative_error <= 1e-8

    def test_empty_tail(self):
        rep = change_of_variable_check(power_surrogate(0.5), GrowthBound.power(0.25), b_prime=5.0, T=5.0)
        assert (rep.t_side, rep.r_side) == (0.0, 0.0)


class TestGrowthBound:
    @pytest.mark.parametrize("f", [GrowthBound.logarithmic(1.0, 2.0), GrowthBound.power(0.3, 1.0, 2.0)])
    def test_inverse_and_monotone(self, f):
        t = np.geomspace(1.5, 1e6, 40)
        assert np.all(np.diff(f(t)) > 0)
        assert np.all(f.derivative(t) > 0)
        np.testing.assert_allclose(f.inverse(f(t)), t, rtol=1e-10)

    def test_power_inverse_domain(self):
        with pytest.raises(DomainError):
            GrowthBound.power(0.5, C0=1.0).inverse(0.5)


def test_dyadic_integral_sqrt():
    total, panels = dyadic_integral(lambda x: x**-0.5, 1e-6, 1.0)
    assert total == pytest.approx(2 - 2e-3, rel=1e-9)


def test_table_interpolation_exact_for_powers():
    r = np.geomspace(1e-6, 1, 7)
    tab = MTable.coerce((r, r**0.5))
    assert tab(np.array([3e-4]))[0] == pytest.approx(3e-4**0.5, rel=1e-12)


class TestWitness:
    @pytest.fixture(scope="class")
    @staticmethod
    def cal():
        return build_single_spike_caltrop(1.25)

    def test_matches_closed_form(self, cal):
        k = spike_constants(cal)
        x = np.array([1e-2, 1e-3, 1e-4])
        rep = non_goldilocks_witness(cal, x)
        half = 0.5 * k.a_second
        expected = (k.b / k.upper_comparability) * (x ** (1 - k.p) - half ** (1 - k.p)) / (k.p - 1)
        np.testing.assert_allclose(rep.lower, expected, rtol=1e-9)
        assert rep.monotone

    def test_single_point(self, cal):
        assert non_goldilocks_witness(cal, [1e-3]).verdict == Verdict.INCONCLUSIVE

    def test_near_one_exponent_monotone(self):
        cal = build_single_spike_caltrop(1.01)
        rep = non_goldilocks_witness(cal, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
        assert rep.monotone
        assert rep.growth_factor > 1

    def test_grid_must_decrease(self, cal):
        with pytest.raises(PreconditionError):
            non_goldilocks_witness(cal, [1e-4, 1e-3])
