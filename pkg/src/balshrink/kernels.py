"""Concave loss kernels and the three balanced loss families.

A kernel ``k`` is applied to squared distances.  In the ``rho`` role it is
used as ``omega*k(|d - d0|^2) + (1-omega)*k(|d - theta|^2)``; in the ``ell``
role as ``k(omega*|d - d0|^2 + (1-omega)*|d - theta|^2)``.

Kernels whose derivative is a Laplace transform ``k'(t) = K2 * E exp(-t S)``
carry a :class:`LaplaceMixing` record; ``S = 1/(2 tau)`` is the rate
corresponding to the variance ``tau`` of the normal component it adds to a
tilted scale mixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import special

from .errors import DimensionError
from .finite_diff import DEFAULT_CM_GRID, alternating_differences
from .radial import expect_positive

Role = Literal["rho", "ell"]

_PARAMS = {
    "identity": (),
    "reflected_normal": ("alpha",),
    "log1p": (),
    "power_shift": ("gamma", "beta"),
    "bounded_rational": ("r",),
    "pure_power": ("beta",),
}


@dataclass(frozen=True)
class LaplaceMixing:
    """Representation ``k'(t) = weight * E exp(-t S)`` with ``S = 1/(2 tau)``.

    ``kind`` is ``"degenerate"`` (``S`` fixed at ``rate``; ``rate = 0`` means
    ``tau = inf`` and a constant derivative) or ``"gamma"`` (``S`` gamma with
    ``shape`` and ``scale``).
    """

    kind: Literal["degenerate", "gamma"]
    weight: float
    rate: float = 0.0
    shape: float = 1.0
    scale: float = 1.0

    @property
    def tau0(self) -> float:
        if self.kind != "degenerate":
            raise ValueError("tau0 is defined only for degenerate mixing")
        return math.inf if self.rate == 0.0 else 1.0 / (2.0 * self.rate)

    @property
    def is_degenerate(self) -> bool:
        return self.kind == "degenerate"

    def scaled(self, c: float) -> "LaplaceMixing":
        """Mixing record of ``t -> k'(c t)``."""
        if c <= 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "degenerate":
            return LaplaceMixing("degenerate", self.weight, rate=self.rate * c)
        return LaplaceMixing("gamma", self.weight, shape=self.shape, scale=self.scale * c)

    def laplace(self, t):
        """Closed-form transform."""
        t = np.asarray(t, dtype=float)
        if self.kind == "degenerate":
            return self.weight * np.exp(-t * self.rate)
        return self.weight * (1.0 + self.scale * t) ** (-self.shape)

    def expect(self, fn) -> float:
        """``E fn(S)`` by quadrature against the law of ``S``."""
        if self.kind == "degenerate":
            return float(fn(self.rate))
        a, b = self.shape, self.scale
        log_norm = -special.gammaln(a) - a * math.log(b)
        return expect_positive(
            fn, lambda v: log_norm + (a - 1.0) * math.log(v) - v / b, a * b
        )

    def reconstruct(self, t: float) -> float:
        """``k'(t)`` rebuilt by integrating ``exp(-t S)`` over the mixing law."""
        return self.weight * self.expect(lambda s: math.exp(-t * s))

    def sample_rate(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "degenerate":
            return np.full(n, self.rate)
        return rng.gamma(self.shape, self.scale, size=n)


@dataclass(frozen=True)
class Kernel:
    family: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in _PARAMS:
            raise ValueError(f"unknown kernel family {self.family!r}")
        names = _PARAMS[self.family]
        if len(self.params) != len(names):
            raise ValueError(f"{self.family} expects parameters {names}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if any(p <= 0 for p in self.params):
            raise ValueError("kernel parameters must be positive")
        if self.family in ("power_shift", "pure_power") and not self.param("beta") < 1:
            raise ValueError("beta must lie in (0, 1)")

    # constructors -------------------------------------------------------

    @classmethod
    def identity(cls) -> "Kernel":
        return cls("identity")

    @classmethod
    def reflected_normal(cls, alpha: float) -> "Kernel":
        return cls("reflected_normal", (alpha,))

    @classmethod
    def log1p(cls) -> "Kernel":
        return cls("log1p")

    @classmethod
    def power_shift(cls, gamma: float, beta: float) -> "Kernel":
        return cls("power_shift", (gamma, beta))

    @classmethod
    def bounded_rational(cls, r: float) -> "Kernel":
        return cls("bounded_rational", (r,))

    @classmethod
    def pure_power(cls, beta: float) -> "Kernel":
        return cls("pure_power", (beta,))

    @classmethod
    def from_params(cls, family: str, **params: float) -> "Kernel":
        names = _PARAMS.get(family)
        if names is None:
            raise ValueError(f"unknown kernel family {family!r}")
        missing = [n for n in names if n not in params]
        extra = [n for n in params if n not in names]
        if missing or extra:
            raise ValueError(f"{family}: missing {missing}, unexpected {extra}")
        return cls(family, tuple(params[n] for n in names))

    def param(self, name: str) -> float:
        return self.params[_PARAMS[self.family].index(name)]

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(zip(_PARAMS[self.family], self.params))

    @property
    def name(self) -> str:
        if not self.params:
            return self.family
        inner = ",".join(f"{k}={v:g}" for k, v in self.param_dict.items())
        return f"{self.family}({inner})"

    # evaluation ---------------------------------------------------------

    def value(self, t):
        t = np.asarray(t, dtype=float)
        f = self.family
        if f == "identity":
            return t.copy()
        if f == "reflected_normal":
            return -np.expm1(-t / self.params[0])
        if f == "log1p":
            return np.log1p(t)
        if f == "power_shift":
            g, b = self.params
            # shifted by -1 so that k(0) = 0
            return np.expm1(b * np.log1p(t / g))
        if f == "bounded_rational":
            r = self.params[0]
            return r * r * t / (r * t + 1.0)
        b = self.params[0]
        return t**b

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        f = self.family
        if f == "identity":
            return np.ones_like(t)
        if f == "reflected_normal":
            a = self.params[0]
            return np.exp(-t / a) / a
        if f == "log1p":
            return 1.0 / (1.0 + t)
        if f == "power_shift":
            g, b = self.params
            return (b / g) * (1.0 + t / g) ** (b - 1.0)
        if f == "bounded_rational":
            r = self.params[0]
            return (r / (r * t + 1.0)) ** 2
        b = self.params[0]
        with np.errstate(divide="ignore"):
            return b * t ** (b - 1.0)

    def log_deriv(self, t):
        t = np.asarray(t, dtype=float)
        f = self.family
        if f == "identity":
            return np.zeros_like(t)
        if f == "reflected_normal":
            a = self.params[0]
            return -t / a - math.log(a)
        if f == "log1p":
            return -np.log1p(t)
        if f == "power_shift":
            g, b = self.params
            return math.log(b / g) + (b - 1.0) * np.log1p(t / g)
        if f == "bounded_rational":
            r = self.params[0]
            return 2.0 * math.log(r) - 2.0 * np.log1p(r * t)
        b = self.params[0]
        with np.errstate(divide="ignore"):
            return math.log(b) + (b - 1.0) * np.log(t)

    @property
    def deriv0(self) -> float:
        """``k'(0)``; ``inf`` for the pure-power family."""
        if self.family == "pure_power":
            return math.inf
        return float(self.deriv(0.0))

    @property
    def cm_certified(self) -> bool:
        # every built-in family has a completely monotone derivative analytically
        return True

    @property
    def laplace_mixing(self) -> LaplaceMixing | None:
        f = self.family
        if f == "identity":
            return LaplaceMixing("degenerate", 1.0, rate=0.0)
        if f == "reflected_normal":
            a = self.params[0]
            return LaplaceMixing("degenerate", 1.0 / a, rate=1.0 / a)
        if f == "log1p":
            return LaplaceMixing("gamma", 1.0, shape=1.0, scale=1.0)
        if f == "power_shift":
            g, b = self.params
            return LaplaceMixing("gamma", b / g, shape=1.0 - b, scale=1.0 / g)
        if f == "bounded_rational":
            r = self.params[0]
            return LaplaceMixing("gamma", r * r, shape=2.0, scale=r)
        return None

    def supports_role(self, role: Role) -> bool:
        if role == "rho":
            return math.isfinite(self.deriv0) and self.deriv0 > 0
        return True


LOSS_FAMILIES = ("balanced_squared", "rho_balanced", "ell_balanced")


@dataclass(frozen=True)
class LossSpec:
    family: str
    omega: float
    kernel: Kernel = field(default_factory=Kernel.identity)
    d: int | None = None

    def __post_init__(self):
        if self.family not in LOSS_FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if not (0.0 <= self.omega < 1.0):
            raise ValueError("omega must lie in [0, 1)")
        if self.family == "rho_balanced" and not self.kernel.supports_role("rho"):
            raise ValueError(f"{self.kernel.name} has infinite derivative at 0; not a rho kernel")
        if self.family == "balanced_squared" and self.kernel.family != "identity":
            raise ValueError("balanced_squared takes no kernel")
        if self.d is not None and self.d < 1:
            raise DimensionError("dimension must be positive")

    @property
    def name(self) -> str:
        if self.family == "balanced_squared":
            return f"balanced_squared(omega={self.omega:g})"
        return f"{self.family}[{self.kernel.name}](omega={self.omega:g})"


def _as_rows(v, d):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if d is not None and v.shape[-1] != d:
        raise DimensionError(f"expected dimension {d}, got {v.shape[-1]}")
    return v


def _squared_distances(spec: LossSpec, estimate, target_value, theta):
    est = _as_rows(estimate, spec.d)
    tgt = _as_rows(target_value, spec.d)
    th = _as_rows(theta, spec.d)
    if not (est.shape[-1] == tgt.shape[-1] == th.shape[-1]):
        raise DimensionError("estimate, target and theta must share a dimension")
    q_target = np.sum((est - tgt) ** 2, axis=-1)
    q_theta = np.sum((est - th) ** 2, axis=-1)
    return q_target, q_theta


def combine_loss(spec: LossSpec, q_target, q_theta):
    """Loss from precomputed squared distances to the target and to theta."""
    w = spec.omega
    if spec.family == "balanced_squared":
        return w * q_target + (1.0 - w) * q_theta
    k = spec.kernel
    if spec.family == "rho_balanced":
        return w * k.value(q_target) + (1.0 - w) * k.value(q_theta)
    return k.value(w * q_target + (1.0 - w) * q_theta)


def eval_loss(spec: LossSpec, estimate, target_value, theta):
    """Balanced loss of ``estimate`` given the target estimate and the true ``theta``.

    Inputs broadcast over leading axes; the last axis is the coordinate axis.
    Returns a scalar for 1-d inputs.
    """
    q_target, q_theta = _squared_distances(spec, estimate, target_value, theta)
    out = combine_loss(spec, q_target, q_theta)
    return float(out) if np.ndim(out) == 0 else out


def loss_difference_delta(spec: LossSpec, g, delta0_value, theta):
    """``L(theta, d0 + (1 - omega) g) - L(theta, d0)`` for the loss ``spec``."""
    g = _as_rows(g, spec.d)
    d0 = _as_rows(delta0_value, spec.d)
    moved = d0 + (1.0 - spec.omega) * g
    # for balanced_squared the target term of the unmoved estimate is zero
    return eval_loss(spec, moved, d0, theta) - eval_loss(spec, d0, d0, theta)


@dataclass(frozen=True)
class KernelReport:
    kernel: str
    role: str
    checks: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok]


def validate_kernel(kernel: Kernel, role: Role, grid=None, *, tol: float = 1e-10) -> KernelReport:
    """Numerical certification of the conditions a kernel must meet in ``role``.

    Monotonicity and midpoint concavity use 256 points spread over ``grid``'s
    range; complete monotonicity of ``k'`` is tested by alternation of finite
    differences up to order 6.
    """
    grid = np.asarray(DEFAULT_CM_GRID if grid is None else grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("grid must be nonempty and positive")
    checks: dict[str, bool] = {}
    lo, hi = float(grid.min()), float(grid.max())
    t = np.concatenate([[0.0], np.geomspace(lo, hi, 255)])
    k = kernel.value(t)
    scale = np.maximum(1.0, np.abs(k))
    checks["nonnegative"] = bool(np.all(k >= -tol * scale))
    checks["nondecreasing"] = bool(np.all(np.diff(k) >= -tol * scale[1:]))
    mid = kernel.value(0.5 * (t[:-1] + t[1:]))
    checks["concave"] = bool(np.all(mid - 0.5 * (k[:-1] + k[1:]) >= -tol * scale[1:]))
    # log scale so that underflow of a positive derivative is not a failure
    log_dk = kernel.log_deriv(grid)
    checks["positive_derivative"] = bool(np.all(np.isfinite(log_dk) | (kernel.deriv(grid) > 0)))
    cm = alternating_differences(kernel.deriv, grid, max_order=6)
    checks["derivative_completely_monotone"] = cm.passed
    if role == "rho":
        checks["zero_at_origin"] = abs(float(kernel.value(0.0))) <= tol
        d0 = kernel.deriv0
        checks["finite_positive_derivative_at_origin"] = math.isfinite(d0) and d0 > 0
    mixing = kernel.laplace_mixing
    if mixing is not None:
        probe = np.geomspace(1e-3, 1e2, 12)
        exact = kernel.deriv(probe)
        rebuilt = np.array([mixing.reconstruct(float(s)) for s in probe])
        checks["laplace_mixing_reconstruction"] = bool(
            np.all(np.abs(rebuilt - exact) <= 1e-8 * np.abs(exact))
        )
    return KernelReport(kernel=kernel.name, role=role, checks=checks)


BUILTIN_KERNELS = (
    Kernel.identity(),
    Kernel.reflected_normal(1.0),
    Kernel.reflected_normal(2.0),
    Kernel.reflected_normal(4.0),
    Kernel.log1p(),
    Kernel.power_shift(1.0, 0.5),
    Kernel.bounded_rational(1.0),
    Kernel.pure_power(0.25),
    Kernel.pure_power(0.5),
    Kernel.pure_power(0.75),
)
