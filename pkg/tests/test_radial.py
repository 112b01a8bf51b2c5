import math

import pytest
from scipy import stats

from balshrink.errors import DivergentIntegralError
from balshrink.mixtures import MixtureModel
from balshrink.radial import expect_positive, log_surface_factor, radial_integral


class TestSurfaceFactor:
    @pytest.mark.parametrize("d", [1, 2, 3, 5, 10])
    def test_matches_sphere_area(self, d):
        # pi^(d/2)/Gamma(d/2) is half the area of the unit sphere in R^d
        area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
        assert math.exp(log_surface_factor(d)) == pytest.approx(area / 2, rel=1e-14)


class TestRadialIntegral:
    @pytest.mark.parametrize("d", [3, 5, 12])
    def test_density_integrates_to_one(self, d):
        value, err = radial_integral(MixtureModel.normal(d, 2.0), lambda t: 1.0)
        assert value == pytest.approx(1.0, abs=1e-12)
        assert err < 1e-8

    @pytest.mark.parametrize("d,sigma2", [(3, 1.0), (5, 1.0), (7, 0.3)])
    def test_inverse_chi_square(self, d, sigma2):
        value, _ = radial_integral(MixtureModel.normal(d, sigma2), lambda t: 1.0 / t)
        assert value == pytest.approx(1.0 / (sigma2 * (d - 2)), rel=1e-12)

    def test_second_moment(self):
        value, _ = radial_integral(MixtureModel.normal(5), lambda t: t)
        assert value == pytest.approx(5.0, rel=1e-12)

    def test_truncation_matches_chi_square_cdf(self):
        value, _ = radial_integral(MixtureModel.normal(4), lambda t: 1.0, t_max=3.0)
        assert value == pytest.approx(stats.chi2.cdf(3.0, 4), rel=1e-12)

    def test_exponential_mixture_inverse_moment_diverges(self):
        with pytest.raises(DivergentIntegralError):
            radial_integral(MixtureModel.exponential(5), lambda t: 1.0 / t)

    @pytest.mark.parametrize("d", [3, 4])
    def test_non_decaying_lower_tail_flagged(self, d):
        # E 1/T^(d/2) diverges logarithmically at the origin
        with pytest.raises(DivergentIntegralError):
            radial_integral(MixtureModel.normal(d), lambda t: t ** (-d / 2))

    def test_log_integrand_agrees(self):
        m = MixtureModel.student(5, 6.0)
        a, _ = radial_integral(m, lambda t: 1.0 / t)
        b, _ = radial_integral(m, log_h=lambda t: -math.log(t))
        assert a == pytest.approx(b, rel=1e-13)

    def test_exactly_one_integrand(self):
        with pytest.raises(TypeError):
            radial_integral(MixtureModel.normal(3))


class TestExpectPositive:
    def test_gamma_mean(self):
        a, b = 2.5, 0.7
        logpdf = lambda v: stats.gamma.logpdf(v, a, scale=b)  # noqa: E731
        assert expect_positive(lambda v: v, logpdf, a * b) == pytest.approx(a * b, rel=1e-12)
