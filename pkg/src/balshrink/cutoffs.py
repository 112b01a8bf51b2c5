"""Upper bounds on the shrinkage multiplier ``a`` for dominance over ``X``.

Every bound that can be reached two ways is computed both ways:

* radial route: one-dimensional quadrature of ``E_0 h(||X||^2)`` against the
  (possibly tilted) radial density;
* mixing route: closed forms or quadrature over the mixing variance, using
  ``E[1/||X||^2 | V] = 1/(V (d - 2))`` for a centred normal with variance ``V``.

Reports carry the route, an error estimate and an echo of the inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

from .errors import DimensionError, DivergentIntegralError, MissingMixingError
from .kernels import Kernel, LaplaceMixing
from .mixtures import MixingDistribution, MixtureModel, TiltedModel, derived_mixing
from .radial import radial_integral

THEOREMS = (
    "normal_known_scale",
    "normal_unknown_scale",
    "rho_mixing_route",
    "rho_radial_route",
    "mixture_squared_error",
    "ell_tilted",
)
ROUTES = ("closed_form", "quadrature", "monte_carlo")

# relative error attributed to nested adaptive quadrature on the mixing side;
# each level is asked for 1e-12 so this is a conservative envelope
_NESTED_RTOL = 1e-10


@dataclass(frozen=True)
class CutoffReport:
    theorem: str
    value: float
    route: str
    error: float
    inputs: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.theorem not in THEOREMS:
            raise ValueError(f"unknown theorem tag {self.theorem!r}")
        if self.route not in ROUTES:
            raise ValueError(f"unknown route {self.route!r}")
        if not self.value > 0:
            raise ValueError("a cut-off must be positive")

    @property
    def relative_error(self) -> float:
        return self.error / self.value

    def inputs_text(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.inputs.items())


def _inputs(model: MixtureModel, kernel: Kernel | None, omega: float, **extra) -> dict[str, Any]:
    out = {"model": model.mixing.name, "d": model.d}
    if kernel is not None:
        out["kernel"] = kernel.name
    out["omega"] = omega
    out.update(extra)
    return out


def _check_omega(omega: float) -> None:
    if not (0.0 <= omega < 1.0):
        raise ValueError("omega must lie in [0, 1)")


def _check_dim(d: int, minimum: int = 3) -> None:
    if int(d) != d or d < minimum:
        raise DimensionError(f"dimension must be an integer >= {minimum}")


# ---------------------------------------------------------------------------
# radial expectations


def radial_expectation_with_error(model, h) -> tuple[float, float]:
    """``(E_0 h(||X||^2), abs_error)`` for a model or tilted model."""
    return radial_integral(model, h)


def radial_expectation(model, h) -> float:
    """``E_0 h(||X||^2)`` by radial quadrature; raises on divergence."""
    return radial_integral(model, h)[0]


def _tilted_ratio(model: MixtureModel, kernel: Kernel, c: float, power: float) -> tuple[float, float]:
    """``E_0[k'(cT) T^power] / E_0[k'(cT)]`` with a propagated error bound."""
    num, num_err = radial_integral(
        model, log_h=lambda t: float(kernel.log_deriv(c * t)) + power * math.log(t)
    )
    den, den_err = radial_integral(model, log_h=lambda t: float(kernel.log_deriv(c * t)))
    if not (den > 0 and math.isfinite(den)):
        raise DivergentIntegralError("tilt is not normalisable")
    ratio = num / den
    err = abs(ratio) * (num_err / abs(num) + den_err / den) if num else num_err / den
    return ratio, err


# ---------------------------------------------------------------------------
# mixing-side moments


@lru_cache(maxsize=256)
def _w_inverse_mean(mixing: MixingDistribution, lap: LaplaceMixing, d: int) -> tuple[float, bool]:
    """``E(1/W)`` for the derived mixing law and whether it came out in closed form."""
    if mixing.mean_inv == math.inf:
        raise DivergentIntegralError(f"E(1/V) is infinite for {mixing.name} mixing")
    w = derived_mixing(mixing, lap, d)
    closed = isinstance(w, MixingDistribution) and w.family in ("degenerate", "discrete", "inverse_gamma")
    return w.mean_inv, closed


def _base_inverse_moment(mixing: MixingDistribution, d: int) -> float:
    """``E_0(1/||X||^2) = E(1/V) / (d - 2)``."""
    m = mixing.mean_inv
    if m == math.inf:
        raise DivergentIntegralError(f"E(1/V) is infinite for {mixing.name} mixing")
    return m / (d - 2)


def _closed_family(mixing: MixingDistribution) -> bool:
    return mixing.family in ("degenerate", "inverse_gamma", "discrete", "exponential")


# ---------------------------------------------------------------------------
# normal model closed forms


def cutoff_normal_known_scale(d: int, omega: float, sigma2: float = 1.0) -> CutoffReport:
    """``2 (d - 2) (1 - omega) sigma^2`` for ``X + (1 - omega) sigma^2 g(X)`` with James-Stein ``g``."""
    _check_dim(d)
    _check_omega(omega)
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    value = 2.0 * (d - 2) * (1.0 - omega) * sigma2
    return CutoffReport(
        "normal_known_scale", value, "closed_form", 0.0,
        {"model": f"normal(sigma2={sigma2:g})", "d": d, "omega": omega},
    )


def cutoff_normal_unknown_scale(d: int, k: int, omega: float) -> CutoffReport:
    """Bound on ``a`` in ``X - a (S^2/(k+2)) r(.) X/||X||^2`` with ``S^2 ~ sigma^2 chi^2_k``.

    The unbalanced bound ``2 (d - 2)`` carries over to balanced loss with the
    factor ``1 - omega``; it does not depend on ``sigma^2``.
    """
    _check_dim(d)
    _check_omega(omega)
    if int(k) != k or k < 1:
        raise ValueError("chi-square degrees of freedom must be a positive integer")
    value = 2.0 * (d - 2) * (1.0 - omega)
    return CutoffReport(
        "normal_unknown_scale", value, "closed_form", 0.0,
        {"model": "normal(unknown sigma2)", "d": d, "k": k, "omega": omega},
    )


# ---------------------------------------------------------------------------
# squared error on a scale mixture


def cutoff_squared_error_mixture(model: MixtureModel) -> tuple[CutoffReport, CutoffReport]:
    """``2 / E_0(1/||X||^2)`` by radial quadrature and as ``2 (d - 2) / E(1/V)``."""
    d = model.d
    inv, err = radial_integral(model, lambda t: 1.0 / t)
    radial = CutoffReport(
        "mixture_squared_error", 2.0 / inv, "quadrature", 2.0 * err / inv**2,
        _inputs(model, None, 0.0),
    )
    m = _base_inverse_moment(model.mixing, d)
    mixing = CutoffReport(
        "mixture_squared_error", 2.0 / m, "closed_form" if _closed_family(model.mixing) else "quadrature",
        0.0 if _closed_family(model.mixing) else _NESTED_RTOL * 2.0 / m,
        _inputs(model, None, 0.0),
    )
    return radial, mixing


# ---------------------------------------------------------------------------
# rho-balanced loss


def _rho_denominator(kernel: Kernel, omega: float, K: float) -> float:
    return omega * kernel.deriv0 + (1.0 - omega) * K


def cutoff_rho_radial(model: MixtureModel, kernel: Kernel, omega: float) -> CutoffReport:
    """``2 K^2 (1 - omega) / E_0(rho'(T)/T) / (omega rho'(0) + (1 - omega) K)`` by quadrature."""
    _check_omega(omega)
    if not kernel.supports_role("rho"):
        raise ValueError(f"{kernel.name} is not a rho kernel")
    K, k_err = radial_integral(model, lambda t: float(kernel.deriv(t)))
    J, j_err = radial_integral(model, lambda t: float(kernel.deriv(t)) / t)
    den = _rho_denominator(kernel, omega, K)
    value = 2.0 * K * K * (1.0 - omega) / J / den
    rel = 2.0 * k_err / K + j_err / J + (1.0 - omega) * k_err / den
    return CutoffReport("rho_radial_route", value, "quadrature", value * rel,
                        _inputs(model, kernel, omega, K=K))


def cutoff_rho_mixing(model: MixtureModel, kernel: Kernel, omega: float) -> CutoffReport:
    """``2 (d - 2) K (1 - omega) / E(1/W) / (omega rho'(0) + (1 - omega) K)`` on the mixing side.

    ``K = K2 E (1 + 2 S V)^(-d/2)`` and ``E(1/W)`` come from the derived
    mixing law of the tilted density, never from radial quadrature.
    """
    _check_omega(omega)
    if not kernel.supports_role("rho"):
        raise ValueError(f"{kernel.name} is not a rho kernel")
    lap = kernel.laplace_mixing
    if lap is None:
        raise MissingMixingError(f"{kernel.name} has no Laplace-mixing record")
    d = model.d
    inv_w, closed = _w_inverse_mean(model.mixing, lap, d)
    K = TiltedModel(model, kernel, "rho").normalizer_via_mixing()
    den = _rho_denominator(kernel, omega, K)
    value = 2.0 * (d - 2) * K * (1.0 - omega) / inv_w / den
    closed = closed and lap.is_degenerate and model.mixing.family in ("degenerate", "discrete")
    route = "closed_form" if closed else "quadrature"
    err = 0.0 if closed else _NESTED_RTOL * value
    return CutoffReport("rho_mixing_route", value, route, err,
                        _inputs(model, kernel, omega, K=K, E_inv_W=inv_w))


def cutoff_rho_balanced(model: MixtureModel, kernel: Kernel, omega: float) -> tuple[CutoffReport, ...]:
    """Both routes when a Laplace-mixing record exists, else only the radial one.

    Order: mixing route first, radial route second.
    """
    radial = cutoff_rho_radial(model, kernel, omega)
    if kernel.laplace_mixing is None:
        return (radial,)
    return cutoff_rho_mixing(model, kernel, omega), radial


# ---------------------------------------------------------------------------
# ell-balanced loss


def tilted_inverse_moment(model: MixtureModel, kernel: Kernel, omega: float) -> tuple[float, float]:
    """``(E*_{0,omega}(1/||X||^2), error)`` under the tilt ``l'((1 - omega) t)``.

    Also checks that ``E*(||X||^2)`` is finite; raises if either diverges.
    """
    _check_omega(omega)
    c = 1.0 - omega
    _tilted_ratio(model, kernel, c, 1.0)
    return _tilted_ratio(model, kernel, c, -1.0)


def tilted_inverse_moment_mixing(model: MixtureModel, kernel: Kernel, omega: float) -> tuple[float, bool]:
    """``E*(1/||X||^2)`` from the mixing side and whether the value is in closed form.

    For ``l(t) = t^beta`` the tilt ``t^(beta - 1)`` does not depend on
    ``omega`` and, conditional on ``V``, chi-square moments give
    ``E*(1/T) = E V^(beta-2) / (E V^(beta-1) (d + 2 beta - 4))``.
    Other kernels go through the derived mixing law: ``E(1/W) / (d - 2)``.
    """
    _check_omega(omega)
    d = model.d
    mixing = model.mixing
    if kernel.family == "pure_power":
        beta = kernel.param("beta")
        if d + 2.0 * beta - 4.0 <= 0:
            raise DivergentIntegralError("tilted inverse moment diverges: d + 2 beta <= 4")
        num, den = mixing.moment(beta - 2.0), mixing.moment(beta - 1.0)
        if not (math.isfinite(num) and math.isfinite(den)):
            raise DivergentIntegralError(f"required moments of V are infinite for {mixing.name}")
        return num / (den * (d + 2.0 * beta - 4.0)), _closed_family(mixing)
    lap = kernel.laplace_mixing
    if lap is None:
        raise MissingMixingError(f"{kernel.name} has no Laplace-mixing record")
    inv_w, closed = _w_inverse_mean(mixing, lap.scaled(1.0 - omega), d)
    return inv_w / (d - 2), closed and lap.is_degenerate


def cutoff_ell_balanced(model: MixtureModel, kernel: Kernel, omega: float, *,
                        mixing_route: bool = True) -> tuple[CutoffReport, ...]:
    """``2 / E*_{0,omega}(1/||X||^2)`` for ``delta_{a(1-omega), r}``.

    Reports the radial route first and, when available (and ``mixing_route``
    is set), the mixing route.  With the identity kernel this is the
    squared-error mixture bound.
    """
    inv, err = tilted_inverse_moment(model, kernel, omega)
    value = 2.0 / inv
    reports = [CutoffReport("ell_tilted", value, "quadrature", value * err / inv,
                            _inputs(model, kernel, omega, E_star_inv=inv))]
    if not mixing_route:
        return tuple(reports)
    try:
        m, closed = tilted_inverse_moment_mixing(model, kernel, omega)
    except MissingMixingError:
        return tuple(reports)
    v2 = 2.0 / m
    reports.append(CutoffReport("ell_tilted", v2, "closed_form" if closed else "quadrature",
                                0.0 if closed else _NESTED_RTOL * v2,
                                _inputs(model, kernel, omega, E_star_inv=m)))
    return tuple(reports)


@dataclass(frozen=True)
class InverseMomentComparison:
    """``E*(1/T)`` under the tilt against ``E_0(1/T)`` under the base model."""

    model: str
    kernel: str
    omega: float
    tilted: float
    base: float
    error: float

    @property
    def gap(self) -> float:
        return self.tilted - self.base

    @property
    def passed(self) -> bool:
        return self.gap >= -self.error

    @property
    def strict(self) -> bool:
        return self.gap > self.error


def tilted_inverse_moment_check(model: MixtureModel, kernel: Kernel, omega: float) -> InverseMomentComparison:
    """Both sides by radial quadrature; the tilted value can only be larger."""
    tilted, t_err = tilted_inverse_moment(model, kernel, omega)
    base, b_err = radial_integral(model, lambda t: 1.0 / t)
    # quadrature targets 1e-12 relative; keep that floor in the margin
    error = t_err + b_err + 1e-11 * (abs(tilted) + abs(base))
    return InverseMomentComparison(model.name, kernel.name, omega, tilted, base, error)
