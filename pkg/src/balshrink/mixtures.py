"""Scale mixtures of normals and their kernel-tilted versions.

``X | V ~ N_d(theta, V I_d)`` with ``V`` drawn from a mixing distribution.
The radial density ``f(t)`` (density of ``X`` at ``||x - theta||^2 = t``) is
available in closed form for every built-in mixing family.

Tilting ``f`` by a kernel derivative ``k'(c t)`` whose Laplace mixing is
``k'(u) = K2 E exp(-u S)`` gives again a scale mixture.  Writing
``exp(-c t S) * (2 pi V)^(-d/2) exp(-t / 2V)`` as a normal density in ``t``
with variance ``W = V / (1 + 2 c S V)`` leaves the factor
``(1 + 2 c S V)^(-d/2)``, so the mixing law of ``W`` is the law of
``V / (1 + 2 c S V)`` under ``(V, S)`` reweighted by that factor.  When ``V``
is degenerate the weight is constant and ``1/W = 1/V + 2 c S`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from scipy import special

from .errors import DimensionError, DivergentIntegralError, MissingMixingError
from .kernels import Kernel, LaplaceMixing
from .radial import expect_positive, radial_integral
from .rng import DEFAULT_CHUNK, chunk_rng, chunk_sizes

LOG_2PI = math.log(2.0 * math.pi)


def _log_kve(nu, z):
    """log of the exponentially scaled Bessel K; asymptotic series for large z."""
    z = np.asarray(z, dtype=float)
    big = z > 1e4
    zs = np.where(big, 1.0, z)
    with np.errstate(divide="ignore"):
        small = np.log(special.kve(nu, zs))
    zb = np.where(big, z, 1e4)
    mu = 4.0 * nu * nu
    series = 1.0 + (mu - 1.0) / (8.0 * zb) + (mu - 1.0) * (mu - 9.0) / (2.0 * (8.0 * zb) ** 2)
    asym = 0.5 * np.log(np.pi / (2.0 * zb)) + np.log(series)
    return np.where(big, asym, small)


def _normal_log_radial(t, w, d):
    return -0.5 * d * (LOG_2PI + np.log(w)) - t / (2.0 * w)


@dataclass(frozen=True)
class MixingDistribution:
    """Law of the variance ``V`` in ``X | V ~ N_d(theta, V I_d)``."""

    family: Literal["degenerate", "inverse_gamma", "exponential", "discrete"]
    params: tuple[float, ...] = ()
    points: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        f = self.family
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if f in ("degenerate", "exponential"):
            if len(self.params) != 1 or self.params[0] <= 0:
                raise ValueError(f"{f} mixing needs one positive parameter")
        elif f == "inverse_gamma":
            if len(self.params) != 2 or min(self.params) <= 0:
                raise ValueError("inverse_gamma mixing needs positive shape and scale")
        elif f == "discrete":
            pts = tuple(float(p) for p in self.points)
            wts = tuple(float(w) for w in self.weights)
            if not pts or len(pts) != len(wts):
                raise ValueError("discrete mixing needs matching points and weights")
            if min(pts) <= 0 or min(wts) < 0:
                raise ValueError("discrete mixing needs positive points, nonnegative weights")
            if abs(math.fsum(wts) - 1.0) > 1e-12:
                raise ValueError("discrete weights must sum to 1")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "weights", wts)
        else:
            raise ValueError(f"unknown mixing family {f!r}")

    @classmethod
    def degenerate(cls, sigma2: float = 1.0):
        return cls("degenerate", (sigma2,))

    @classmethod
    def inverse_gamma(cls, shape: float, scale: float):
        return cls("inverse_gamma", (shape, scale))

    @classmethod
    def student(cls, nu: float):
        return cls.inverse_gamma(0.5 * nu, 0.5 * nu)

    @classmethod
    def exponential(cls, rate: float = 1.0):
        return cls("exponential", (rate,))

    @classmethod
    def discrete(cls, points, weights):
        return cls("discrete", (), tuple(points), tuple(weights))

    @property
    def name(self) -> str:
        f = self.family
        if f == "degenerate":
            return f"normal(sigma2={self.params[0]:g})"
        if f == "inverse_gamma":
            a, b = self.params
            if a == b:
                return f"student(nu={2 * a:g})"
            return f"inverse_gamma(shape={a:g},scale={b:g})"
        if f == "exponential":
            return f"exponential(rate={self.params[0]:g})"
        pts = "/".join(f"{p:g}" for p in self.points)
        wts = "/".join(f"{w:g}" for w in self.weights)
        return f"discrete(points={pts};weights={wts})"

    @property
    def scale_hint(self) -> float:
        f = self.family
        if f == "degenerate":
            return self.params[0]
        if f == "inverse_gamma":
            a, b = self.params
            return b / (a + 1.0)
        if f == "exponential":
            return 1.0 / self.params[0]
        return float(np.dot(self.points, self.weights))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        f = self.family
        if f == "degenerate":
            return np.full(n, self.params[0])
        if f == "inverse_gamma":
            a, b = self.params
            return b / rng.gamma(a, 1.0, size=n)
        if f == "exponential":
            return rng.exponential(1.0 / self.params[0], size=n)
        return rng.choice(np.asarray(self.points), size=n, p=np.asarray(self.weights))

    def moment(self, p: float) -> float:
        """``E V^p`` (``inf`` when it diverges)."""
        f = self.family
        if f == "degenerate":
            return self.params[0] ** p
        if f == "inverse_gamma":
            a, b = self.params
            if p >= a:
                return math.inf
            return math.exp(p * math.log(b) + special.gammaln(a - p) - special.gammaln(a))
        if f == "exponential":
            lam = self.params[0]
            if p <= -1:
                return math.inf
            return math.exp(special.gammaln(1.0 + p) - p * math.log(lam))
        return math.fsum(w * v**p for v, w in zip(self.points, self.weights))

    @property
    def mean(self) -> float:
        return self.moment(1.0)

    @property
    def mean_inv(self) -> float:
        return self.moment(-1.0)

    def logpdf(self, v: float) -> float:
        f = self.family
        if f == "inverse_gamma":
            a, b = self.params
            return a * math.log(b) - special.gammaln(a) - (a + 1.0) * math.log(v) - b / v
        if f == "exponential":
            lam = self.params[0]
            return math.log(lam) - lam * v
        raise ValueError(f"{f} mixing has no density")

    def expect(self, fn) -> float:
        """``E fn(V)``."""
        f = self.family
        if f == "degenerate":
            return float(fn(self.params[0]))
        if f == "discrete":
            return math.fsum(w * float(fn(v)) for v, w in zip(self.points, self.weights))
        return expect_positive(fn, self.logpdf, self.scale_hint)

    def log_radial_density(self, t, d: int):
        t = np.asarray(t, dtype=float)
        f = self.family
        if f == "degenerate":
            return _normal_log_radial(t, self.params[0], d)
        if f == "inverse_gamma":
            a, b = self.params
            c = (
                -0.5 * d * LOG_2PI
                + a * math.log(b)
                + special.gammaln(a + 0.5 * d)
                - special.gammaln(a)
            )
            return c - (a + 0.5 * d) * np.log(b + 0.5 * t)
        if f == "exponential":
            # int (2 pi v)^(-d/2) exp(-t/2v) lam exp(-lam v) dv
            #   = 2 lam (2 pi)^(-d/2) (t / 2 lam)^((1 - d/2)/2) K_{d/2-1}(sqrt(2 lam t))
            lam = self.params[0]
            nu = 0.5 * d - 1.0
            with np.errstate(divide="ignore"):
                z = np.sqrt(2.0 * lam * t)
                return (
                    math.log(2.0 * lam)
                    - 0.5 * d * LOG_2PI
                    + 0.5 * (1.0 - 0.5 * d) * np.log(t / (2.0 * lam))
                    + _log_kve(nu, z)
                    - z
                )
        # log sum_j w_j phi(t; v_j), shifted by the largest component
        logw = np.log(np.asarray(self.weights)).reshape((-1,) + (1,) * t.ndim)
        comps = np.stack([_normal_log_radial(t, v, d) for v in self.points]) + logw
        top = np.max(comps, axis=0)
        return top + np.log(np.sum(np.exp(comps - top), axis=0))


@dataclass(frozen=True)
class HarmonicTiltMixing:
    """Mixing law of ``W = V / (1 + 2 S V)`` under ``(V, S)`` reweighted by ``(1 + 2 S V)^(-d/2)``.

    ``rate`` is the Laplace mixing of the tilt, already scaled for the
    argument of the kernel derivative.
    """

    base: MixingDistribution
    rate: LaplaceMixing
    d: int
    family: str = field(default="harmonic_tilt", init=False)

    @property
    def name(self) -> str:
        return f"harmonic_tilt[{self.base.name}]"

    @property
    def scale_hint(self) -> float:
        return self.base.scale_hint

    def _joint(self, fn_vs) -> float:
        half_d = 0.5 * self.d

        def integrand(v, s):
            weight = (1.0 + 2.0 * s * v) ** (-half_d)
            return 0.0 if weight == 0.0 else fn_vs(v, s) * weight

        return self.base.expect(lambda v: self.rate.expect(lambda s: integrand(v, s)))

    @cached_property
    def normalizer(self) -> float:
        """``E (1 + 2 S V)^(-d/2)``: the tilt normaliser divided by the kernel weight."""
        return self._joint(lambda v, s: 1.0)

    def expect(self, fn) -> float:
        return self._joint(lambda v, s: fn(1.0 / (1.0 / v + 2.0 * s))) / self.normalizer

    def moment(self, p: float) -> float:
        # W ~ V as V -> 0 and the weight tends to 1 there, so negative
        # moments diverge exactly when those of V do
        if p < 0 and self.base.moment(p) == math.inf:
            return math.inf
        return self.expect(lambda w: w**p)

    @property
    def mean_inv(self) -> float:
        return self.moment(-1.0)

    @property
    def mean(self) -> float:
        return self.expect(lambda w: w)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = max(2 * (n - filled), 64)
            v = self.base.sample(rng, m)
            s = self.rate.sample_rate(rng, m)
            denom = 1.0 + 2.0 * s * v
            keep = rng.random(m) < denom ** (-0.5 * self.d)
            w = (v / denom)[keep][: n - filled]
            out[filled : filled + w.size] = w
            filled += w.size
        return out

    def log_radial_density(self, t, d: int | None = None):
        d = self.d if d is None else d
        vals = np.vectorize(
            lambda tt: self.expect(lambda w: math.exp(float(_normal_log_radial(tt, w, d))))
        )(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore"):
            return np.log(vals)


def derived_mixing(base: MixingDistribution, rate: LaplaceMixing, d: int):
    """Mixing law of the tilted model, in the simplest exact representation."""
    if rate.is_degenerate:
        s = rate.rate
        if s == 0.0:
            return base
        if base.family == "degenerate":
            v = base.params[0]
            return MixingDistribution.degenerate(v / (1.0 + 2.0 * s * v))
        if base.family == "discrete":
            pts = np.asarray(base.points)
            w = np.asarray(base.weights) * (1.0 + 2.0 * s * pts) ** (-0.5 * d)
            return MixingDistribution.discrete(pts / (1.0 + 2.0 * s * pts), w / w.sum())
    return HarmonicTiltMixing(base, rate, d)


@dataclass(frozen=True)
class MixtureModel:
    d: int
    mixing: MixingDistribution

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise DimensionError("scale-mixture models require dimension d >= 3")

    @classmethod
    def normal(cls, d: int, sigma2: float = 1.0):
        return cls(d, MixingDistribution.degenerate(sigma2))

    @classmethod
    def student(cls, d: int, nu: float):
        return cls(d, MixingDistribution.student(nu))

    @classmethod
    def exponential(cls, d: int, rate: float = 1.0):
        return cls(d, MixingDistribution.exponential(rate))

    @classmethod
    def discrete(cls, d: int, points, weights):
        return cls(d, MixingDistribution.discrete(points, weights))

    @property
    def dim(self) -> int:
        return self.d

    @property
    def name(self) -> str:
        return f"{self.mixing.name}[d={self.d}]"

    @property
    def scale_hint(self) -> float:
        return self.mixing.scale_hint

    def log_radial_density(self, t):
        return self.mixing.log_radial_density(t, self.d)

    def radial_density(self, t):
        return np.exp(self.log_radial_density(t))


@dataclass(frozen=True)
class TiltedModel:
    """Base model reweighted by ``k'(c ||x - theta||^2)``.

    ``mode="rho"`` uses ``c = 1`` and requires ``k'(0) < inf``; ``mode="ell"``
    uses ``c = 1 - omega``.
    """

    base: MixtureModel
    kernel: Kernel
    mode: Literal["rho", "ell"] = "rho"
    omega: float = 0.0

    def __post_init__(self):
        if self.mode not in ("rho", "ell"):
            raise ValueError("mode must be 'rho' or 'ell'")
        if not (0.0 <= self.omega < 1.0):
            raise ValueError("omega must lie in [0, 1)")
        if self.mode == "rho" and not self.kernel.supports_role("rho"):
            raise ValueError(f"{self.kernel.name} cannot tilt in rho mode (infinite k'(0))")

    @property
    def dim(self) -> int:
        return self.base.d

    @property
    def scale(self) -> float:
        return 1.0 if self.mode == "rho" else 1.0 - self.omega

    @property
    def scale_hint(self) -> float:
        return self.base.scale_hint

    @property
    def name(self) -> str:
        return f"tilt[{self.mode},{self.kernel.name},omega={self.omega:g}]({self.base.name})"

    def tilt(self, t):
        return self.kernel.deriv(self.scale * np.asarray(t, dtype=float))

    @cached_property
    def _normalizer(self) -> tuple[float, float]:
        c = self.scale
        k = self.kernel
        return radial_integral(self.base, lambda t: float(k.deriv(c * t)))

    @property
    def normalizer(self) -> float:
        return self._normalizer[0]

    @property
    def normalizer_error(self) -> float:
        return self._normalizer[1]

    def log_radial_density(self, t):
        t = np.asarray(t, dtype=float)
        return (
            self.kernel.log_deriv(self.scale * t)
            + self.base.log_radial_density(t)
            - math.log(self.normalizer)
        )

    def radial_density(self, t):
        return np.exp(self.log_radial_density(t))

    @property
    def laplace_mixing(self) -> LaplaceMixing | None:
        lap = self.kernel.laplace_mixing
        return None if lap is None else lap.scaled(self.scale)

    @cached_property
    def derived_mixing(self):
        lap = self.laplace_mixing
        if lap is None:
            raise MissingMixingError(f"{self.kernel.name} has no Laplace-mixing record")
        return derived_mixing(self.base.mixing, lap, self.dim)

    def normalizer_via_mixing(self) -> float:
        """Normaliser computed on the mixing side: ``K2 E (1 + 2 c S V)^(-d/2)``."""
        lap = self.laplace_mixing
        if lap is None:
            raise MissingMixingError(f"{self.kernel.name} has no Laplace-mixing record")
        return lap.weight * HarmonicTiltMixing(self.base.mixing, lap, self.dim).normalizer

    def density_via_mixing(self, t):
        """Radial density as a normal scale mixture over the derived ``W``."""
        w_law = self.derived_mixing
        return np.exp(np.asarray(w_law.log_radial_density(t, self.dim), dtype=float))


def _check_theta(theta, d):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (d,):
        raise DimensionError(f"theta must have shape ({d},)")
    return theta


def _normal_rows(rng, d, scales_sq, theta):
    z = rng.standard_normal((scales_sq.size, d))
    return theta + np.sqrt(scales_sq)[:, None] * z


def sample_chunk(model: MixtureModel, theta, rng: np.random.Generator, n: int) -> np.ndarray:
    """One chunk of draws: ``V`` first, then the normal."""
    v = model.mixing.sample(rng, n)
    return _normal_rows(rng, model.d, v, theta)


def sample(
    model: MixtureModel, theta, n: int, seed, chunk_size: int = DEFAULT_CHUNK
) -> np.ndarray:
    """``n`` draws from ``model`` centred at ``theta``.

    Deterministic in ``(seed, n, chunk_size)``.
    """
    theta = _check_theta(theta, model.d)
    sizes = chunk_sizes(n, chunk_size)
    return np.concatenate(
        [sample_chunk(model, theta, chunk_rng(seed, i), m) for i, m in enumerate(sizes)]
    )


def tilted_normalizer(tilted: TiltedModel) -> float:
    """``E_0 k'(c ||X||^2)`` by radial quadrature."""
    k = tilted.normalizer
    if not (math.isfinite(k) and k > 0):
        raise DivergentIntegralError("tilt is not normalisable")
    return k


def derived_mixing_W(tilted: TiltedModel):
    return tilted.derived_mixing


def _rejection_chunk(tilted, theta, rng, n):
    bound = tilted.kernel.deriv0
    out = np.empty((n, tilted.dim))
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 64)
        x = sample_chunk(tilted.base, theta, rng, m)
        t = np.sum((x - theta) ** 2, axis=1)
        keep = rng.random(m) < tilted.tilt(t) / bound
        acc = x[keep][: n - filled]
        out[filled : filled + len(acc)] = acc
        filled += len(acc)
    return out


def sample_tilted(
    tilted: TiltedModel,
    theta,
    n: int,
    seed,
    method: Literal["auto", "mixture", "rejection"] = "auto",
    chunk_size: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """Draws from the tilted law centred at ``theta``.

    ``mixture`` samples ``W`` from the derived mixing law then the normal;
    ``rejection`` thins base draws with probability ``k'(c t) / k'(0)``.
    """
    theta = _check_theta(theta, tilted.dim)
    if method == "auto":
        method = "mixture" if tilted.laplace_mixing is not None else "rejection"
    if method == "rejection" and not math.isfinite(tilted.kernel.deriv0):
        raise ValueError("no finite rejection envelope: kernel derivative is unbounded at 0")
    if method == "mixture":
        w_law = tilted.derived_mixing

        def draw(rng, m):
            return _normal_rows(rng, tilted.dim, w_law.sample(rng, m), theta)

    elif method == "rejection":

        def draw(rng, m):
            return _rejection_chunk(tilted, theta, rng, m)

    else:
        raise ValueError(f"unknown sampling method {method!r}")
    sizes = chunk_sizes(n, chunk_size)
    return np.concatenate([draw(chunk_rng(seed, i), m) for i, m in enumerate(sizes)])


def builtin_models(d: int) -> tuple[MixtureModel, ...]:
    return (
        MixtureModel.normal(d, 1.0),
        MixtureModel.student(d, 6.0),
        MixtureModel.exponential(d, 1.0),
        MixtureModel.discrete(d, (0.5, 2.0), (0.5, 0.5)),
    )
