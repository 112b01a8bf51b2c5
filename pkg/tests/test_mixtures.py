import math

import numpy as np
import pytest
from scipy import stats

from balshrink.errors import DimensionError, MissingMixingError
from balshrink.kernels import Kernel
from balshrink.mixtures import (
    HarmonicTiltMixing,
    MixingDistribution,
    MixtureModel,
    TiltedModel,
    builtin_models,
    derived_mixing,
    sample,
    sample_tilted,
)
from balshrink.radial import radial_integral

FINITE_MODELS = [m for m in builtin_models(5) if m.mixing.family != "exponential"]
RHO_TILTS = [Kernel.reflected_normal(2.0), Kernel.log1p(), Kernel.bounded_rational(1.0)]


class TestMixingDistribution:
    @pytest.mark.parametrize("p", [-1.0, 0.5, 1.0, 2.0])
    def test_student_moments(self, p):
        nu = 6.0
        law = MixingDistribution.student(nu)
        ref = stats.invgamma(nu / 2, scale=nu / 2)
        assert law.moment(p) == pytest.approx(ref.expect(lambda v: v**p), rel=1e-8)

    def test_moment_divergence(self):
        assert MixingDistribution.student(4.0).moment(2.0) == math.inf
        assert MixingDistribution.exponential(1.0).mean_inv == math.inf

    def test_expect_by_quadrature(self):
        law = MixingDistribution.exponential(2.0)
        assert law.expect(lambda v: v * v) == pytest.approx(2 / 4, rel=1e-10)

    def test_discrete_validation(self):
        with pytest.raises(ValueError):
            MixingDistribution.discrete((1.0, 2.0), (0.3, 0.3))

    @pytest.mark.parametrize("law", [MixingDistribution.student(6.0), MixingDistribution.exponential(1.5),
                                     MixingDistribution.discrete((0.5, 2.0), (0.25, 0.75))])
    def test_sampling_mean(self, law):
        draws = law.sample(np.random.default_rng(3), 400_000)
        assert np.mean(draws) == pytest.approx(law.mean, rel=2e-2)


class TestRadialDensity:
    @pytest.mark.parametrize("model", builtin_models(5) + builtin_models(3), ids=lambda m: m.name)
    def test_normalised(self, model):
        value, _ = radial_integral(model, lambda t: 1.0)
        assert value == pytest.approx(1.0, abs=1e-10)

    def test_student_density_matches_scipy(self):
        nu, d = 6.0, 5
        x = np.array([0.3, -1.0, 2.0, 0.0, 0.5])
        expected = stats.multivariate_t(loc=np.zeros(d), shape=np.eye(d), df=nu).pdf(x)
        assert float(MixtureModel.student(d, nu).radial_density(x @ x)) == pytest.approx(expected, rel=1e-12)

    def test_exponential_density_by_mixing_quadrature(self):
        model = MixtureModel.exponential(4, 1.0)
        t = 2.3
        direct = model.mixing.expect(lambda v: (2 * math.pi * v) ** -2 * math.exp(-t / (2 * v)))
        assert float(model.radial_density(t)) == pytest.approx(direct, rel=1e-9)

    def test_dimension_guard(self):
        with pytest.raises(DimensionError):
            MixtureModel.normal(2)


class TestDerivedMixing:
    def test_normal_reflected_normal_is_degenerate(self):
        w = derived_mixing(MixingDistribution.degenerate(1.0),
                           Kernel.reflected_normal(2.0).laplace_mixing, 5)
        assert w.family == "degenerate"
        # 1/W = 1/sigma^2 + 2/alpha
        assert w.mean_inv == pytest.approx(2.0)

    def test_identity_leaves_mixing_unchanged(self):
        base = MixingDistribution.student(6.0)
        assert derived_mixing(base, Kernel.identity().laplace_mixing, 5) is base

    def test_student_tilt_weighted_inverse_moment(self):
        """The weighted law, not the unweighted shift E(1/V) + 2S, reproduces the radial value."""
        model = MixtureModel.student(5, 6.0)
        tilted = TiltedModel(model, Kernel.reflected_normal(2.0))
        w = tilted.derived_mixing
        assert isinstance(w, HarmonicTiltMixing)
        radial_inv = radial_integral(tilted, lambda t: 1.0 / t)[0]
        assert w.mean_inv / (model.d - 2) == pytest.approx(radial_inv, rel=1e-9)
        naive = model.mixing.mean_inv + 2 * Kernel.reflected_normal(2.0).laplace_mixing.rate
        assert abs(naive / (model.d - 2) - radial_inv) > 1e-2


class TestTiltedModel:
    @pytest.mark.parametrize("kernel", RHO_TILTS, ids=lambda k: k.name)
    @pytest.mark.parametrize("model", FINITE_MODELS, ids=lambda m: m.name)
    def test_normaliser_two_routes(self, model, kernel):
        tilted = TiltedModel(model, kernel)
        assert tilted.normalizer_via_mixing() == pytest.approx(tilted.normalizer, rel=1e-10)

    def test_chi_square_mgf(self):
        tilted = TiltedModel(MixtureModel.normal(5), Kernel.reflected_normal(2.0))
        assert tilted.normalizer == pytest.approx(0.5 * 2.0**-2.5, rel=1e-12)

    @pytest.mark.parametrize("t", [0.1, 1.0, 4.0, 12.0])
    def test_density_is_a_scale_mixture(self, t):
        tilted = TiltedModel(MixtureModel.discrete(5, (0.5, 2.0), (0.5, 0.5)), Kernel.log1p(),
                             "ell", 0.4)
        via_w = tilted.density_via_mixing(t)
        assert float(via_w) == pytest.approx(float(tilted.radial_density(t)), rel=1e-9)

    def test_rho_mode_rejects_pure_power(self):
        with pytest.raises(ValueError):
            TiltedModel(MixtureModel.normal(5), Kernel.pure_power(0.5), "rho")

    def test_pure_power_has_no_derived_mixing(self):
        with pytest.raises(MissingMixingError):
            TiltedModel(MixtureModel.normal(5), Kernel.pure_power(0.5), "ell").derived_mixing

    def test_ell_mode_uses_scaled_argument(self):
        tilted = TiltedModel(MixtureModel.normal(5), Kernel.log1p(), "ell", 0.3)
        assert tilted.scale == pytest.approx(0.7)
        assert float(tilted.tilt(2.0)) == pytest.approx(1 / (1 + 1.4))


class TestSampling:
    def test_deterministic_and_chunk_invariant_in_length(self):
        m = MixtureModel.student(4, 6.0)
        a = sample(m, np.zeros(4), 1000, seed=4, chunk_size=256)
        b = sample(m, np.zeros(4), 1000, seed=4, chunk_size=256)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (1000, 4)

    def test_second_moment(self):
        m = MixtureModel.discrete(3, (0.5, 2.0), (0.5, 0.5))
        x = sample(m, np.array([1.0, 0.0, 0.0]), 200_000, seed=1)
        t = np.sum((x - [1.0, 0.0, 0.0]) ** 2, axis=1)
        assert np.mean(t) == pytest.approx(3 * 1.25, rel=1e-2)

    @pytest.mark.parametrize("method", ["mixture", "rejection"])
    def test_tilted_sampling_matches_quadrature(self, method):
        tilted = TiltedModel(MixtureModel.student(5, 6.0), Kernel.log1p())
        x = sample_tilted(tilted, np.zeros(5), 200_000, seed=2, method=method)
        mc = np.mean(1.0 / np.sum(x * x, axis=1))
        exact = radial_integral(tilted, lambda t: 1.0 / t)[0]
        assert mc == pytest.approx(exact, rel=2e-2)

    def test_rejection_needs_bounded_tilt(self):
        tilted = TiltedModel(MixtureModel.normal(5), Kernel.pure_power(0.5), "ell")
        with pytest.raises(ValueError):
            sample_tilted(tilted, np.zeros(5), 10, seed=0, method="rejection")

    def test_theta_shape(self):
        with pytest.raises(DimensionError):
            sample(MixtureModel.normal(3), np.zeros(4), 10, seed=0)
