"""One-dimensional reduction of spherical expectations.

For a spherically symmetric law with density ``f(||x||^2)`` on R^d,

    E h(||X||^2) = c_d * int_0^inf h(t) f(t) t^(d/2 - 1) dt,   c_d = pi^(d/2) / Gamma(d/2).

The integral is evaluated in ``s = log t`` with adaptive Gauss-Kronrod
(QUADPACK via :func:`scipy.integrate.quad`).  In log coordinates every
integrable power-law singularity at ``t = 0`` (including the ``t^(beta-1)``
tilt of a pure-power loss) becomes an exponentially decaying tail, so no
family-specific substitution is needed.

A "radial law" is any object exposing ``dim``, ``scale_hint`` and a
vectorised ``log_radial_density(t)``.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DivergentIntegralError

# half-width (in log t) of the finite central piece, and spacing of breakpoints
_HALF_WIDTH = 40.0
_BREAK_SPACING = 2.5
# tail probes for divergence: integrand must drop by at least one e-fold
# between _PROBE_NEAR and _PROBE_FAR log-units beyond the central piece
_PROBE_NEAR = 60.0
_PROBE_FAR = 120.0
_S_MAX = 700.0


def log_surface_factor(d: int) -> float:
    """log of pi^(d/2) / Gamma(d/2), the Jacobian of x -> t = ||x||^2."""
    return 0.5 * d * math.log(math.pi) - special.gammaln(0.5 * d)


def _log_abs_integrand(law, h, s: float, log_cd: float, log_h=None) -> float:
    t = math.exp(s)
    lf = float(law.log_radial_density(t))
    if lf == -math.inf:
        return -math.inf
    if log_h is not None:
        lh = float(log_h(t))
        if math.isnan(lh) or lh == math.inf:
            return math.inf
        return lh + lf + log_cd + 0.5 * law.dim * s
    hv = float(h(t))
    if hv == 0.0:
        return -math.inf
    if not math.isfinite(hv) or math.isnan(lf):
        return math.inf
    return math.log(abs(hv)) + lf + log_cd + 0.5 * law.dim * s


def _check_tail(law, h, s_near: float, s_far: float, log_cd: float, side: str, log_h=None) -> None:
    near = _log_abs_integrand(law, h, s_near, log_cd, log_h)
    far = _log_abs_integrand(law, h, s_far, log_cd, log_h)
    if far == -math.inf:
        return
    if not math.isfinite(far) or far > near - 1.0:
        raise DivergentIntegralError(
            f"radial integrand does not decay as t -> {'0' if side == 'lower' else 'infinity'}"
        )


def radial_integral(
    law,
    h: Callable[[float], float] | None = None,
    *,
    log_h: Callable[[float], float] | None = None,
    t_max: float | None = None,
    rtol: float = 1e-12,
) -> tuple[float, float]:
    """Return ``(value, abs_error)`` of ``E h(||X||^2)`` (optionally restricted to ``t <= t_max``).

    A positive integrand may be given as ``log_h`` instead of ``h``; the
    product with the density is then formed in log scale, which keeps
    integrands that blow up at ``t = 0`` finite deep in the lower tail.
    """
    if (h is None) == (log_h is None):
        raise TypeError("give exactly one of h and log_h")
    d = law.dim
    log_cd = log_surface_factor(d)
    s0 = math.log(d * law.scale_hint)

    def g(s: float) -> float:
        if s > _S_MAX or s < -_S_MAX:
            return 0.0
        t = math.exp(s)
        lf = float(law.log_radial_density(t))
        if lf == -math.inf:
            return 0.0
        if log_h is not None:
            return math.exp(float(log_h(t)) + lf + log_cd + 0.5 * d * s)
        hv = float(h(t))
        if hv == 0.0:
            return 0.0
        return hv * math.exp(lf + log_cd + 0.5 * d * s)

    s_lo = s0 - _HALF_WIDTH
    _check_tail(law, h, s_lo - _PROBE_NEAR, s_lo - _PROBE_FAR, log_cd, "lower", log_h)
    if t_max is None:
        s_hi = s0 + _HALF_WIDTH
        _check_tail(law, h, s_hi + _PROBE_NEAR, s_hi + _PROBE_FAR, log_cd, "upper", log_h)
    else:
        if t_max <= 0:
            return 0.0, 0.0
        s_hi = math.log(t_max)
        s_lo = min(s_lo, s_hi - 1.0)

    n_breaks = max(int((s_hi - s_lo) / _BREAK_SPACING), 1)
    points = np.linspace(s_lo, s_hi, n_breaks + 1)[1:-1]
    pieces = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        pieces.append(integrate.quad(g, -np.inf, s_lo, epsabs=0.0, epsrel=rtol, limit=400))
        pieces.append(
            integrate.quad(g, s_lo, s_hi, points=points, epsabs=0.0, epsrel=rtol, limit=2000)
        )
        if t_max is None:
            pieces.append(integrate.quad(g, s_hi, np.inf, epsabs=0.0, epsrel=rtol, limit=400))
    value = math.fsum(p[0] for p in pieces)
    error = math.fsum(p[1] for p in pieces)
    if not math.isfinite(value):
        raise DivergentIntegralError("radial integral is not finite")
    if caught and error > 1e-6 * max(abs(value), 1e-300):
        raise DivergentIntegralError(
            f"radial quadrature did not converge: {caught[0].message}"
        )
    return value, error


def expect_positive(fn, logpdf, center: float, *, rtol: float = 1e-12) -> float:
    """``int_0^inf fn(v) exp(logpdf(v)) dv`` computed in ``u = log v``."""
    u0 = math.log(center)

    def g(u: float) -> float:
        if u > _S_MAX or u < -_S_MAX:
            return 0.0
        v = math.exp(u)
        lp = float(logpdf(v))
        if lp == -math.inf:
            return 0.0
        fv = float(fn(v))
        if fv == 0.0:
            return 0.0
        return fv * math.exp(lp + u)

    lo, hi = u0 - _HALF_WIDTH, u0 + _HALF_WIDTH
    points = np.linspace(lo, hi, 33)[1:-1]
    parts = (
        integrate.quad(g, -np.inf, lo, epsabs=0.0, epsrel=rtol, limit=400)[0],
        integrate.quad(g, lo, hi, points=points, epsabs=0.0, epsrel=rtol, limit=2000)[0],
        integrate.quad(g, hi, np.inf, epsabs=0.0, epsrel=rtol, limit=400)[0],
    )
    return math.fsum(parts)
