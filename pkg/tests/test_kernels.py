import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balshrink.kernels import (
    BUILTIN_KERNELS,
    Kernel,
    LaplaceMixing,
    LossSpec,
    combine_loss,
    eval_loss,
    loss_difference_delta,
    validate_kernel,
)

RHO_KERNELS = [k for k in BUILTIN_KERNELS if k.family != "pure_power"]


def numeric_derivative(k, t, h=1e-6):
    return (k.value(t + h) - k.value(t - h)) / (2 * h)


class TestKernelFamilies:
    @pytest.mark.parametrize("kernel", BUILTIN_KERNELS, ids=lambda k: k.name)
    def test_derivative_matches_value(self, kernel):
        t = np.array([0.05, 0.5, 2.0, 9.0])
        np.testing.assert_allclose(kernel.deriv(t), numeric_derivative(kernel, t), rtol=1e-6)

    @pytest.mark.parametrize("kernel", BUILTIN_KERNELS, ids=lambda k: k.name)
    def test_log_derivative(self, kernel):
        t = np.array([0.01, 1.0, 50.0])
        np.testing.assert_allclose(np.exp(kernel.log_deriv(t)), kernel.deriv(t), rtol=1e-13)

    @pytest.mark.parametrize("kernel", RHO_KERNELS, ids=lambda k: k.name)
    def test_rho_kernels_vanish_at_origin(self, kernel):
        assert kernel.value(0.0) == 0.0
        assert math.isfinite(kernel.deriv0) and kernel.deriv0 > 0

    def test_pure_power_has_unbounded_slope(self):
        k = Kernel.pure_power(0.5)
        assert k.deriv0 == math.inf
        assert not k.supports_role("rho")
        assert k.supports_role("ell")

    @pytest.mark.parametrize(
        "family,params",
        [("unknown", {}), ("reflected_normal", {}), ("power_shift", {"gamma": 1.0, "beta": 1.5}),
         ("pure_power", {"beta": 1.0}), ("log1p", {"alpha": 1.0}), ("reflected_normal", {"alpha": -1.0})],
    )
    def test_invalid_parameters(self, family, params):
        with pytest.raises(ValueError):
            Kernel.from_params(family, **params)

    def test_from_params_round_trip(self):
        k = Kernel.power_shift(2.0, 0.25)
        assert Kernel.from_params(k.family, **k.param_dict) == k

    def test_power_shift_closed_form(self):
        k = Kernel.power_shift(2.0, 0.5)
        assert k.value(6.0) == pytest.approx(math.sqrt(4.0) - 1.0)


class TestLaplaceMixing:
    @pytest.mark.parametrize("kernel", RHO_KERNELS, ids=lambda k: k.name)
    def test_closed_form_transform_is_the_derivative(self, kernel):
        t = np.geomspace(1e-3, 1e2, 9)
        np.testing.assert_allclose(kernel.laplace_mixing.laplace(t), kernel.deriv(t), rtol=1e-13)

    @pytest.mark.parametrize("c", [0.3, 1.0, 2.5])
    @pytest.mark.parametrize("kernel", RHO_KERNELS, ids=lambda k: k.name)
    def test_scaling(self, kernel, c):
        t = np.array([0.1, 1.0, 7.0])
        np.testing.assert_allclose(kernel.laplace_mixing.scaled(c).laplace(t), kernel.deriv(c * t),
                                   rtol=1e-13)

    def test_tau0(self):
        assert Kernel.reflected_normal(2.0).laplace_mixing.tau0 == pytest.approx(1.0)
        assert Kernel.identity().laplace_mixing.tau0 == math.inf
        with pytest.raises(ValueError):
            LaplaceMixing("gamma", 1.0).tau0

    def test_sampled_rates_reproduce_transform(self):
        lap = Kernel.bounded_rational(1.0).laplace_mixing
        s = lap.sample_rate(np.random.default_rng(1), 400_000)
        mc = lap.weight * np.mean(np.exp(-0.7 * s))
        assert mc == pytest.approx(float(Kernel.bounded_rational(1.0).deriv(0.7)), rel=5e-3)

    def test_pure_power_has_no_record(self):
        assert Kernel.pure_power(0.5).laplace_mixing is None


class TestValidation:
    @pytest.mark.parametrize("kernel", BUILTIN_KERNELS, ids=lambda k: k.name)
    def test_every_builtin_passes_ell_role(self, kernel):
        rep = validate_kernel(kernel, "ell")
        assert rep.passed, rep.failures

    @pytest.mark.parametrize("kernel", RHO_KERNELS, ids=lambda k: k.name)
    def test_rho_role(self, kernel):
        assert validate_kernel(kernel, "rho").passed

    def test_pure_power_fails_rho_only_on_slope(self):
        rep = validate_kernel(Kernel.pure_power(0.5), "rho")
        assert rep.failures == ["finite_positive_derivative_at_origin"]


class TestLosses:
    def test_balanced_squared(self):
        spec = LossSpec("balanced_squared", 0.25)
        est, tgt, th = np.array([1.0, 0.0]), np.array([0.0, 0.0]), np.array([1.0, 2.0])
        assert eval_loss(spec, est, tgt, th) == pytest.approx(0.25 * 1 + 0.75 * 4)

    def test_rho_and_ell_forms(self):
        k = Kernel.log1p()
        rho = LossSpec("rho_balanced", 0.5, k)
        ell = LossSpec("ell_balanced", 0.5, k)
        assert combine_loss(rho, 1.0, 3.0) == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(4))
        assert combine_loss(ell, 1.0, 3.0) == pytest.approx(math.log(3))

    def test_identity_kernel_collapses_families(self):
        rng = np.random.default_rng(0)
        est, tgt, th = rng.normal(size=(3, 20, 4))
        values = [eval_loss(LossSpec(f, 0.4, Kernel.identity()), est, tgt, th)
                  for f in ("balanced_squared", "rho_balanced", "ell_balanced")]
        np.testing.assert_allclose(values[0], values[1], rtol=1e-14)
        np.testing.assert_allclose(values[0], values[2], rtol=1e-14)

    @pytest.mark.parametrize("omega", [-0.1, 1.0])
    def test_omega_range(self, omega):
        with pytest.raises(ValueError):
            LossSpec("balanced_squared", omega)

    def test_rho_loss_rejects_pure_power(self):
        with pytest.raises(ValueError):
            LossSpec("rho_balanced", 0.2, Kernel.pure_power(0.5))

    def test_balanced_squared_rejects_kernel(self):
        with pytest.raises(ValueError):
            LossSpec("balanced_squared", 0.2, Kernel.log1p())

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            eval_loss(LossSpec("balanced_squared", 0.2, d=3), np.zeros(2), np.zeros(2), np.zeros(2))


vectors = st.lists(st.floats(-10, 10), min_size=5, max_size=5).map(np.array)


@settings(max_examples=200, deadline=None)
@given(theta=vectors, g=vectors, d0=vectors, omega=st.floats(0, 0.99))
def test_balanced_difference_is_a_scaled_squared_error_difference(theta, g, d0, omega):
    """Moving the target by (1 - w) g changes balanced loss by (1 - w)^2 times the w = 0 change."""
    balanced = loss_difference_delta(LossSpec("balanced_squared", omega), g, d0, theta)
    unbalanced = loss_difference_delta(LossSpec("balanced_squared", 0.0), g, d0, theta)
    scale = 1.0 + abs(unbalanced)
    assert abs(balanced - (1 - omega) ** 2 * unbalanced) <= 1e-12 * scale * 100


@settings(max_examples=100, deadline=None)
@given(t=st.floats(1e-3, 1e3), s=st.floats(1e-3, 1e3))
def test_concavity_inequality(t, s):
    for k in BUILTIN_KERNELS:
        lhs = float(k.value(t) - k.value(s))
        rhs = float(k.deriv(s) * (t - s))
        assert lhs <= rhs + 1e-9 * (1 + abs(rhs))
