"""Numerical certificates for the structural facts the dominance results rest on.

* complete monotonicity of kernel derivatives and radial densities;
* superharmonicity of ``g0(x) = r(||x||^2)/||x||^2`` (closed-form radial
  Laplacian, cross-checked against a finite-difference Laplacian in R^d);
* monotonicity in the radius of sphere means ``E g(alpha Z + theta)``;
* the Poisson series for ``E 1/||alpha Z + theta||^2``;
* stochastic ordering of a tilted mixing variance below the base one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from .errors import DimensionError
from .estimators import ShrinkFunction, check_shrink_conditions
from .finite_diff import AlternationReport, alternating_differences
from .kernels import BUILTIN_KERNELS, Kernel
from .mixtures import MixtureModel, TiltedModel, builtin_models
from .risk import RunningMoments, merge_moments
from .rng import chunk_rng, chunk_sizes, task_seed

# ---------------------------------------------------------------------------
# complete monotonicity


def cm_check(fn: Callable, orders: int = 6, grid=None, *, rel_step: float = 1e-2,
             tol: float = 1e-9) -> AlternationReport:
    """Sign alternation of forward differences of ``fn`` up to ``orders``."""
    return alternating_differences(fn, grid, max_order=orders, rel_step=rel_step, tol=tol)


# ---------------------------------------------------------------------------
# Laplacian of g0


def laplacian_shrink_ratio(r: ShrinkFunction, t, d: int, *, allow_low_dim: bool = False):
    """Laplacian of ``g0(x) = r(||x||^2)/||x||^2`` at ``||x||^2 = t``.

    For ``h(||x||^2)`` the Laplacian is ``2 d h'(t) + 4 t h''(t)``; with
    ``h = r(t)/t`` this is ``2 (d - 4) (t r' - r)/t^2 + 4 r''``.
    ``g0`` can only be superharmonic for ``d >= 4``; smaller ``d`` raises
    unless ``allow_low_dim`` is set.
    """
    if int(d) != d or d < 1:
        raise DimensionError("dimension must be a positive integer")
    if d < 4 and not allow_low_dim:
        raise DimensionError("g0 is superharmonic only for d >= 4")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    return 2.0 * (d - 4) * (t * r.deriv(t) - r(t)) / t**2 + 4.0 * r.deriv2(t)


def fd_laplacian(fn: Callable[[np.ndarray], float], x, rel_step: float = 1e-3) -> float:
    """Second-order central-difference Laplacian of a function on R^d."""
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    h = rel_step * (norm if norm > 0 else 1.0)
    f0 = fn(x)
    total = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        total += fn(x + e) - 2.0 * f0 + fn(x - e)
    return total / (h * h)


def g0_function(r: ShrinkFunction) -> Callable[[np.ndarray], float]:
    def g0(x):
        q = float(np.dot(x, x))
        return float(r(q)) / q
    return g0


@dataclass(frozen=True)
class LaplacianReport:
    shrink: str
    d: int
    max_laplacian: float
    max_cross_check_error: float
    dimension_ok: bool

    @property
    def superharmonic(self) -> bool:
        return self.dimension_ok and self.max_laplacian <= 0.0

    @property
    def cross_check_passed(self) -> bool:
        return self.max_cross_check_error <= 1e-4


def superharmonic_check(r: ShrinkFunction, d: int, grid=None, *, n_points: int = 8,
                        seed: int = 0) -> LaplacianReport:
    """Closed-form Laplacian on a ``t`` grid plus a finite-difference cross-check.

    The cross-check evaluates the full ``d``-dimensional Laplacian at
    ``n_points`` random points with ``||x||^2`` on the grid and reports the
    largest relative discrepancy (scaled by ``max(|closed|, g0/t)``).
    """
    t = np.asarray(np.geomspace(1e-2, 1e2, 60) if grid is None else grid, dtype=float)
    lap = laplacian_shrink_ratio(r, t, d, allow_low_dim=True)
    rng = np.random.default_rng(task_seed(seed, "laplacian", d))
    g0 = g0_function(r)
    worst = 0.0
    for tt in rng.choice(t, size=min(n_points, t.size), replace=False):
        u = rng.standard_normal(d)
        x = math.sqrt(tt) * u / np.linalg.norm(u)
        closed = float(laplacian_shrink_ratio(r, tt, d, allow_low_dim=True))
        numeric = fd_laplacian(g0, x)
        scale = max(abs(closed), float(r(tt)) / tt**2)
        worst = max(worst, abs(numeric - closed) / scale)
    return LaplacianReport(r.name, d, float(np.max(lap)), worst, d >= 4)


# ---------------------------------------------------------------------------
# sphere means


@dataclass(frozen=True)
class SphereMeanReport:
    alphas: tuple[float, ...]
    means: tuple[float, ...]
    step_diffs: tuple[float, ...]
    step_ses: tuple[float, ...]

    @property
    def nonincreasing(self) -> bool:
        """No step is an increase at 3 standard errors."""
        return all(diff <= 3.0 * se for diff, se in zip(self.step_diffs, self.step_ses))

    @property
    def increase_detected(self) -> bool:
        return any(diff > 3.0 * se for diff, se in zip(self.step_diffs, self.step_ses))


def sphere_mean_monotonicity(g: Callable[[np.ndarray], np.ndarray], theta, alphas,
                             n: int = 200_000, seed: int = 0) -> SphereMeanReport:
    """``E g(alpha Z + theta)`` over increasing ``alphas`` with shared ``Z`` draws.

    ``g`` is vectorised over rows.  Consecutive differences are paired on
    the same ``Z`` so their standard errors are small.
    """
    alphas = tuple(float(a) for a in alphas)
    if any(b <= a for a, b in zip(alphas, alphas[1:])) or alphas[0] <= 0:
        raise ValueError("alphas must be positive and increasing")
    theta = np.asarray(theta, dtype=float)
    z = chunk_rng(task_seed(seed, "sphere-mean"), 0).standard_normal((n, theta.size))
    vals = [np.asarray(g(a * z + theta), dtype=float) for a in alphas]
    means = tuple(float(np.mean(v)) for v in vals)
    diffs, ses = [], []
    for lo, hi in zip(vals, vals[1:]):
        step = hi - lo
        diffs.append(float(np.mean(step)))
        ses.append(float(np.std(step, ddof=1) / math.sqrt(n)))
    return SphereMeanReport(alphas, means, tuple(diffs), tuple(ses))


def g0_rows(r: ShrinkFunction) -> Callable[[np.ndarray], np.ndarray]:
    def g(x):
        q = np.sum(x * x, axis=-1)
        return r(q) / q
    return g


# ---------------------------------------------------------------------------
# inverse moment of a noncentral chi-square


def _poisson_weights(lam: float, kmax: int) -> np.ndarray:
    """Poisson(lam) probabilities for ``k = 0..kmax``, normalised to sum to one.

    Built by the ratio recurrence outward from the mode: evaluating
    ``k log(lam) - lam - log k!`` directly loses about ``lam * eps`` in each
    log-weight through cancellation, which is visible in the series at
    large ``lam``.
    """
    mode = min(int(lam), kmax)
    up = np.cumprod(lam / np.arange(mode + 1, kmax + 1))
    down = np.cumprod(np.arange(mode, 0, -1) / lam)[::-1]
    rel = np.concatenate([down, [1.0], up])
    return rel / math.fsum(rel)


def inverse_noncentral_moment(d: int, alpha: float, theta_norm: float, terms: int | None = None,
                              *, tail: float = 1e-18) -> float:
    """``E 1/||alpha Z + theta||^2`` for ``Z ~ N_d(0, I)``.

    With ``lambda = ||theta||^2 / (2 alpha^2)`` and ``K ~ Poisson(lambda)``,
    ``E(1/T) = (2/||theta||^2) E U(K)`` where ``U(k) = k/(d + 2k - 4)`` for
    ``k >= 1`` and ``U(0) = 0``.  The series stops once the Poisson upper
    tail mass is below ``tail`` (or after ``terms`` terms).  At ``theta = 0``
    the value is ``1/(alpha^2 (d - 2))``.
    """
    if int(d) != d or d < 3:
        raise DimensionError("E(1/T) is finite only for d >= 3")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if theta_norm < 0:
        raise ValueError("theta_norm must be nonnegative")
    if theta_norm == 0.0:
        return 1.0 / (alpha * alpha * (d - 2))
    lam = theta_norm**2 / (2.0 * alpha * alpha)
    # first k whose upper tail is below ``tail``; poisson.isf is unreliable below ~1e-16
    ks = np.arange(int(lam + 25.0 * math.sqrt(lam) + 60.0))
    below = np.nonzero(stats.poisson.logsf(ks, lam) < math.log(tail))[0]
    kmax = int(below[0]) + 1 if below.size else int(ks[-1])
    weights = _poisson_weights(lam, kmax)
    if terms is not None:
        weights = weights[: int(terms) + 1]
    k = np.arange(1, weights.size)
    return 2.0 / theta_norm**2 * math.fsum(weights[1:] * k / (d + 2.0 * k - 4.0))


def inverse_noncentral_moment_hyp1f1(d: int, alpha: float, theta_norm: float) -> float:
    """``E(1/T) = e^(-lambda) 1F1(d/2 - 1; d/2; lambda) / (alpha^2 (d - 2))`` (independent check)."""
    lam = theta_norm**2 / (2.0 * alpha * alpha)
    # Kummer transformation keeps the evaluation free of overflow for large lambda
    return float(special.hyp1f1(1.0, 0.5 * d, -lam)) / (alpha * alpha * (d - 2))


def inverse_noncentral_moment_mc(d: int, alpha: float, theta_norm: float, n: int,
                                 seed: int = 0, chunk_size: int = 2**20) -> tuple[float, float]:
    """Monte Carlo ``(mean, std_err)`` of ``1/T`` with ``T = (alpha Z_1 + ||theta||)^2 + alpha^2 chi^2_{d-1}``.

    The variance of ``1/T`` is finite only for ``d >= 5``.
    """
    if d < 5:
        raise DimensionError("1/T has infinite variance for d <= 4")
    seq = task_seed(seed, "inverse-moment", 0)
    parts = []
    for c, m in enumerate(chunk_sizes(n, chunk_size)):
        rng = chunk_rng(seq, c)
        z1 = rng.standard_normal(m)
        rest = rng.chisquare(d - 1, size=m)
        parts.append(RunningMoments.of(1.0 / ((alpha * z1 + theta_norm) ** 2 + alpha * alpha * rest)))
    total = merge_moments(parts)
    var = total.m2 / (total.n - 1)
    return total.mean, math.sqrt(var / total.n)


# ---------------------------------------------------------------------------
# stochastic ordering of W below V


@dataclass(frozen=True)
class OrderingReport:
    model: str
    kernel: str
    n: int
    worst_slack: float

    @property
    def passed(self) -> bool:
        return self.worst_slack >= 0.0


def mixing_cdf_ordering(model: MixtureModel, kernel: Kernel, n: int = 10**6, seed: int = 0,
                        n_grid: int = 100) -> OrderingReport:
    """Empirical ``CDF_W >= CDF_V`` on ``n_grid`` points (binomial slack ``4 sqrt(p(1-p)/n)``).

    ``V`` is the base mixing variance and ``W`` that of the model tilted by
    ``kernel'`` in the rho role.
    """
    tilted = TiltedModel(model, kernel, "rho")
    w_law = tilted.derived_mixing
    seq = task_seed(seed, f"cdf-ordering:{model.name}:{kernel.name}")
    v = np.sort(model.mixing.sample(chunk_rng(seq, 0), n))
    w = np.sort(w_law.sample(chunk_rng(seq, 1), n))
    pooled = np.concatenate([v, w])
    grid = np.quantile(pooled, np.linspace(0.005, 0.995, n_grid))
    cdf_v = np.searchsorted(v, grid, side="right") / n
    cdf_w = np.searchsorted(w, grid, side="right") / n
    p = 0.5 * (cdf_v + cdf_w)
    slack = 4.0 * np.sqrt(p * (1.0 - p) / n)
    # for a degenerate V both CDFs are steps; slack keeps the ties admissible
    worst = float(np.min(cdf_w - cdf_v + slack + 1e-15))
    return OrderingReport(model.name, kernel.name, n, worst)


# ---------------------------------------------------------------------------
# suite


@dataclass(frozen=True)
class DiagnosticResult:
    check: str
    subject: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class SuiteReport:
    results: tuple[DiagnosticResult, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def table(self) -> str:
        width = max(len(r.check) for r in self.results)
        lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.check:<{width}}  {r.subject}  {r.detail}".rstrip()
                 for r in self.results]
        return "\n".join(lines)


SUITE_SHRINKS = (ShrinkFunction.constant_one(), ShrinkFunction.rational(1.0),
                 ShrinkFunction.rational(4.0), ShrinkFunction.rational(10.0))


def run_suite(seed: int = 0, *, dims=(3, 4, 5, 6, 10), sphere_n: int = 200_000) -> SuiteReport:
    """Diagnostics on every built-in kernel, model and shrink function."""
    out: list[DiagnosticResult] = []
    for k in BUILTIN_KERNELS:
        rep = cm_check(k.deriv)
        out.append(DiagnosticResult("cm_kernel_derivative", k.name, rep.passed,
                                    f"worst={min(rep.worst.values()):.2e}"))
    cm_models = builtin_models(5) + builtin_models(3)
    for m in cm_models:
        rep = cm_check(m.radial_density, grid=np.logspace(-2, 2, 48))
        out.append(DiagnosticResult("cm_radial_density", m.name, rep.passed))
    base = MixtureModel.student(5, 6.0)
    for k in (Kernel.reflected_normal(2.0), Kernel.log1p(), Kernel.pure_power(0.5)):
        c = 0.5

        def product(t, k=k, c=c):
            return k.deriv(c * t) * base.radial_density(t)

        rep = cm_check(product, grid=np.logspace(-2, 2, 48))
        out.append(DiagnosticResult("cm_tilted_density", f"{k.name}*{base.name}", rep.passed))
    for r in SUITE_SHRINKS:
        cond = check_shrink_conditions(r, concave=True)
        out.append(DiagnosticResult("shrink_conditions", r.name, cond.passed,
                                    ",".join(cond.failures)))
        for d in dims:
            rep = superharmonic_check(r, d, seed=seed)
            if d >= 4:
                ok = rep.superharmonic and rep.cross_check_passed
                detail = f"max_lap={rep.max_laplacian:.3e} fd_err={rep.max_cross_check_error:.1e}"
            else:
                # below d = 4 the check must refuse the dimension
                ok = (not rep.superharmonic) and rep.cross_check_passed
                detail = "flagged: d < 4"
            out.append(DiagnosticResult("laplacian_g0", f"{r.name},d={d}", ok, detail))
    for r in SUITE_SHRINKS[1:]:
        theta = np.zeros(5)
        theta[0] = 2.0
        rep = sphere_mean_monotonicity(g0_rows(r), theta, (0.5, 1.0, 2.0, 4.0), n=sphere_n, seed=seed)
        out.append(DiagnosticResult("sphere_mean_monotone", f"g0[{r.name}],d=5", rep.nonincreasing,
                                    "means=" + "/".join(f"{v:.4f}" for v in rep.means)))
    for d in (3, 4, 5, 10):
        vals = [inverse_noncentral_moment(d, a, 2.0) for a in (0.5, 1.0, 2.0, 4.0)]
        decreasing = all(b < a for a, b in zip(vals, vals[1:]))
        central = abs(inverse_noncentral_moment(d, 1.0, 0.0) - 1.0 / (d - 2)) <= 1e-12
        # 1/||x||^2 is subharmonic in R^3, so E(1/T) first rises with alpha there
        ok = central and (decreasing if d >= 4 else not decreasing)
        detail = "" if d >= 4 else "flagged: d = 3 not monotone"
        out.append(DiagnosticResult("inverse_moment_decreasing_in_alpha", f"d={d}", ok, detail))
    return SuiteReport(tuple(out))


__all__ = [
    "cm_check", "laplacian_shrink_ratio", "fd_laplacian", "superharmonic_check",
    "sphere_mean_monotonicity", "inverse_noncentral_moment", "inverse_noncentral_moment_mc",
    "inverse_noncentral_moment_hyp1f1", "mixing_cdf_ordering", "run_suite",
]
