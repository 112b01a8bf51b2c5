"""Target, Baranchik-type and balanced Bayes estimators of a location vector.

All estimators are vectorised: ``x`` may be a single ``d``-vector or an
``(n, d)`` array of observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.interpolate import PchipInterpolator

from .errors import DimensionError

_CHECK_GRID = np.geomspace(1e-3, 1e3, 400)


@dataclass(frozen=True)
class ShrinkFunction:
    """Bounded, nondecreasing ``r`` with ``r(t)/t`` nonincreasing.

    Families: ``constant_one``, ``rational`` (``r(t) = t/(t + c)``) and
    ``user``, a grid-defined function interpolated by a monotone cubic
    (PCHIP) and held constant beyond the last knot.
    """

    family: str
    c: float = 1.0
    knots: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    _interp: PchipInterpolator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family == "rational":
            if self.c <= 0:
                raise ValueError("rational shrink function needs c > 0")
        elif self.family == "user":
            t = np.asarray(self.knots, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.size < 2 or t.size != v.size or np.any(np.diff(t) <= 0):
                raise ValueError("user shrink function needs increasing knots and matching values")
            object.__setattr__(self, "knots", tuple(t))
            object.__setattr__(self, "values", tuple(v))
            object.__setattr__(self, "_interp", PchipInterpolator(t, v, extrapolate=True))
        elif self.family != "constant_one":
            raise ValueError(f"unknown shrink family {self.family!r}")

    @classmethod
    def constant_one(cls):
        return cls("constant_one")

    @classmethod
    def rational(cls, c: float):
        return cls("rational", c=float(c))

    @classmethod
    def from_grid(cls, knots, values):
        return cls("user", knots=tuple(knots), values=tuple(values))

    @property
    def name(self) -> str:
        if self.family == "rational":
            return f"rational(c={self.c:g})"
        return self.family

    def _clip(self, t):
        lo, hi = self.knots[0], self.knots[-1]
        return np.clip(t, lo, hi), (t < lo), (t > hi)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "constant_one":
            return np.ones_like(t)
        if self.family == "rational":
            return t / (t + self.c)
        tc, below, above = self._clip(t)
        out = self._interp(tc)
        # below the first knot interpolate linearly to r(0) = 0 when values[0] = 0
        return np.where(below, self.values[0] * t / self.knots[0], out)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "constant_one":
            return np.zeros_like(t)
        if self.family == "rational":
            return self.c / (t + self.c) ** 2
        tc, below, above = self._clip(t)
        out = self._interp.derivative(1)(tc)
        return np.where(above, 0.0, np.where(below, self.values[0] / self.knots[0], out))

    def deriv2(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "constant_one":
            return np.zeros_like(t)
        if self.family == "rational":
            return -2.0 * self.c / (t + self.c) ** 3
        tc, below, above = self._clip(t)
        out = self._interp.derivative(2)(tc)
        return np.where(above | below, 0.0, out)

    def ratio_at_zero(self) -> float:
        """``lim_{t -> 0} r(t)/t``."""
        if self.family == "constant_one":
            return math.inf
        if self.family == "rational":
            return 1.0 / self.c
        return self.values[0] / self.knots[0]


@dataclass(frozen=True)
class ShrinkReport:
    shrink: str
    checks: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok]


def check_shrink_conditions(r: ShrinkFunction, grid=None, *, tol: float = 1e-10, concave: bool = False) -> ShrinkReport:
    """Grid test of ``0 <= r <= 1``, ``r != 0``, ``r' >= 0``, ``(r(t)/t)' <= 0`` (optionally ``r'' <= 0``)."""
    t = np.asarray(_CHECK_GRID if grid is None else grid, dtype=float)
    v = r(t)
    checks = {
        "bounded": bool(np.all((v >= -tol) & (v <= 1.0 + tol))),
        "not_identically_zero": bool(np.any(v > tol)),
        "nondecreasing": bool(np.all(np.diff(v) >= -tol) and np.all(r.deriv(t) >= -tol)),
        "ratio_nonincreasing": bool(np.all(np.diff(v / t) <= tol * np.maximum(1.0, v[1:] / t[1:]))),
    }
    if concave:
        checks["concave"] = bool(np.all(r.deriv2(t) <= tol))
    return ShrinkReport(r.name, checks)


def _rows(x, d=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError("observation must be a nonempty vector")
    if d is not None and x.shape[-1] != d:
        raise DimensionError(f"expected dimension {d}, got {x.shape[-1]}")
    return x


def _shrink_factor(a, r: ShrinkFunction, q, scale=1.0):
    """``1 - a * scale * r(q/scale) / q`` with the value at ``q = 0`` set so that the estimate is 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = 1.0 - a * scale * r(q / scale) / q
    return np.where(q > 0, factor, 0.0)


class Estimator:
    """Common interface: ``estimate(x, s2=None)``."""

    family = "abstract"
    needs_s2 = False

    def estimate(self, x, s2=None):  # pragma: no cover - interface
        raise NotImplementedError

    def _check_s2(self, s2):
        if self.needs_s2 and s2 is None:
            raise ValueError(f"{self.family} requires a variance estimate s2")
        if not self.needs_s2 and s2 is not None:
            raise ValueError(f"{self.family} does not take s2")


@dataclass(frozen=True)
class TargetX(Estimator):
    family = "target_X"

    @property
    def name(self) -> str:
        return "X"

    def estimate(self, x, s2=None):
        self._check_s2(s2)
        return _rows(x).copy()


@dataclass(frozen=True)
class Baranchik(Estimator):
    """``(1 - a r(||x||^2)/||x||^2) x``; ``delta(0) = 0``."""

    a: float
    r: ShrinkFunction = field(default_factory=ShrinkFunction.constant_one)
    family = "baranchik"

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("shrinkage multiplier must be nonnegative")

    @property
    def name(self) -> str:
        return f"baranchik(a={self.a:.6g},r={self.r.name})"

    def scaled(self, factor: float) -> "Baranchik":
        return Baranchik(self.a * factor, self.r)

    def estimate(self, x, s2=None):
        self._check_s2(s2)
        x = _rows(x)
        q = np.sum(x * x, axis=-1)
        return _shrink_factor(self.a, self.r, q)[..., None] * x


def james_stein(a: float) -> Baranchik:
    return Baranchik(a, ShrinkFunction.constant_one())


@dataclass(frozen=True)
class UnknownVarianceBaranchik(Estimator):
    """``x - a (s2/(k+2)) r(||x||^2/s2) x/||x||^2`` with ``s2 ~ sigma^2 chi^2_k`` drawn independently."""

    a: float
    r: ShrinkFunction = field(default_factory=ShrinkFunction.constant_one)
    k: int = 1
    family = "unknown_variance_baranchik"
    needs_s2 = True

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("shrinkage multiplier must be nonnegative")
        if self.k < 1:
            raise ValueError("chi-square degrees of freedom must be >= 1")

    @property
    def name(self) -> str:
        return f"uv_baranchik(a={self.a:.6g},r={self.r.name},k={self.k})"

    def estimate(self, x, s2=None):
        self._check_s2(s2)
        x = _rows(x)
        s2 = np.asarray(s2, dtype=float)
        if np.any(s2 <= 0):
            raise ValueError("s2 must be positive")
        q = np.sum(x * x, axis=-1)
        scale = s2 / (self.k + 2.0)
        # r is evaluated at ||x||^2 / s2, i.e. after the (k+2) factor is removed
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = 1.0 - self.a * scale * self.r(q / s2) / q
        factor = np.where(q > 0, factor, 0.0)
        return factor[..., None] * x


@dataclass(frozen=True)
class NormalConjugateBayes(Estimator):
    """Posterior mean under ``theta ~ N(m0, v0 I)``, ``X | theta ~ N(theta, sigma2 I)``."""

    m0: tuple[float, ...]
    v0: float
    sigma2: float = 1.0
    family = "normal_conjugate_bayes"

    def __post_init__(self):
        if not self.v0 > 0 or not self.sigma2 > 0:
            raise ValueError("prior and sampling variances must be positive")
        object.__setattr__(self, "m0", tuple(float(m) for m in np.atleast_1d(self.m0)))

    @property
    def name(self) -> str:
        return f"conjugate_bayes(v0={self.v0:g},sigma2={self.sigma2:g})"

    @property
    def posterior_variance(self) -> float:
        if math.isinf(self.v0):
            return self.sigma2
        return self.v0 * self.sigma2 / (self.v0 + self.sigma2)

    def prior_mean(self, d: int) -> np.ndarray:
        m = np.asarray(self.m0)
        if m.size == 1:
            return np.full(d, m[0])
        if m.size != d:
            raise DimensionError("prior mean dimension mismatch")
        return m

    def estimate(self, x, s2=None):
        self._check_s2(s2)
        x = _rows(x)
        m = self.prior_mean(x.shape[-1])
        if math.isinf(self.v0):
            return x.copy()
        return (self.v0 * x + self.sigma2 * m) / (self.v0 + self.sigma2)


@dataclass(frozen=True)
class BayesBalanced(Estimator):
    """Bayes rule under balanced squared-error loss with target ``X``."""

    omega: float
    inner: Estimator
    family = "bayes_balanced"

    def __post_init__(self):
        if not (0.0 <= self.omega < 1.0):
            raise ValueError("omega must lie in [0, 1)")

    @property
    def name(self) -> str:
        return f"bayes_balanced(omega={self.omega:g},{self.inner.name})"

    def estimate(self, x, s2=None):
        self._check_s2(s2)
        x = _rows(x)
        return bayes_combine(self.omega, x, self.inner.estimate(x))


def estimate(est: Estimator, x, s2=None):
    return est.estimate(x, s2)


def bayes_combine(omega: float, target_value, unbalanced_bayes_value):
    """``omega * target + (1 - omega) * unbalanced Bayes``."""
    if not (0.0 <= omega < 1.0):
        raise ValueError("omega must lie in [0, 1)")
    t = np.asarray(target_value, dtype=float)
    b = np.asarray(unbalanced_bayes_value, dtype=float)
    if t.shape != b.shape:
        raise DimensionError("target and Bayes values must share a shape")
    return omega * t + (1.0 - omega) * b


def gradient_log_marginal(prior: NormalConjugateBayes, x, sigma2: float | None = None):
    """``grad m(x) / m(x)`` for the marginal ``N(m0, (sigma2 + v0) I)``."""
    sigma2 = prior.sigma2 if sigma2 is None else sigma2
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    x = _rows(x)
    if math.isinf(prior.v0):
        return np.zeros_like(x)
    return -(x - prior.prior_mean(x.shape[-1])) / (sigma2 + prior.v0)


@dataclass(frozen=True)
class ArgminReport:
    argmin: np.ndarray
    candidate: np.ndarray
    max_abs_gap: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_abs_gap <= self.tol


def posterior_expected_loss(omega: float, prior: NormalConjugateBayes, x, delta, nodes: int = 40) -> float:
    """Posterior ``E[omega|delta - x|^2 + (1 - omega)|delta - theta|^2 | x]`` by Gauss-Hermite quadrature.

    The loss separates over coordinates, so each coordinate is integrated
    against its one-dimensional normal posterior.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    mu = prior.estimate(x)
    sd = math.sqrt(prior.posterior_variance)
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    theta = mu[:, None] + sd * z[None, :]
    per_coord = omega * (delta - x) ** 2 + (1.0 - omega) * ((delta[:, None] - theta) ** 2 @ w)
    return float(np.sum(per_coord))


def posterior_loss_argmin_check(
    omega: float, prior: NormalConjugateBayes, x, candidate, tol: float = 1e-6
) -> ArgminReport:
    """Numerically minimise the posterior expected balanced loss and compare with ``candidate``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    candidate = np.atleast_1d(np.asarray(candidate, dtype=float))
    if candidate.shape != x.shape:
        raise DimensionError("candidate must match x")
    best = np.empty_like(x)
    for i in range(x.size):
        def objective(v, i=i):
            trial = candidate.copy()
            trial[i] = v
            return posterior_expected_loss(omega, prior, x, trial)

        lo = min(x[i], candidate[i]) - 10.0 - abs(x[i])
        hi = max(x[i], candidate[i]) + 10.0 + abs(x[i])
        res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        best[i] = res.x
    gap = float(np.max(np.abs(best - candidate)))
    return ArgminReport(best, candidate, gap, tol)
