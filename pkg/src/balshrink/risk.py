"""Paired Monte Carlo risk estimation and dominance scans.

Replicates are generated in chunks; chunk ``c`` of grid point ``i`` draws
from the stream ``(seed, task, i, c)`` (see :mod:`balshrink.rng`).  Every
estimator compared at a grid point sees the same draws (common random
numbers), and per-chunk summaries are merged in chunk order, so results do
not depend on the number of worker threads.

The worker count is read from ``BALSHRINK_THREADS`` (default 1).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError
from .estimators import Estimator, TargetX, UnknownVarianceBaranchik, ShrinkFunction
from .kernels import LossSpec, eval_loss
from .mixtures import MixtureModel, sample_chunk
from .rng import DEFAULT_CHUNK, chunk_rng, chunk_sizes, task_seed

VERDICT_SE = 3.0
THREADS_ENV = "BALSHRINK_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RunningMoments:
    """Count, mean and centred sum of squares of a batch."""

    n: int
    mean: float
    m2: float

    @classmethod
    def of(cls, x: np.ndarray) -> "RunningMoments":
        mean = float(np.mean(x))
        return cls(int(x.size), mean, float(np.sum((x - mean) ** 2)))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return RunningMoments(n, mean, m2)


def merge_moments(parts: Sequence[RunningMoments]) -> RunningMoments:
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


@dataclass(frozen=True)
class RiskEstimate:
    """Mean (risk or risk difference) with its standard error ``sd / sqrt(n)``."""

    mean: float
    std_err: float
    n: int
    seed: int
    loss: str
    estimator: str
    theta_norm: float

    @property
    def verdict(self) -> str:
        """``dominates`` / ``violated`` / ``inconclusive`` for a difference at 3 SE."""
        return verdict(self.mean, self.std_err)


def verdict(diff: float, se: float, k: float = VERDICT_SE) -> str:
    if diff + k * se < 0:
        return "dominates"
    if diff - k * se > 0:
        return "violated"
    return "inconclusive"


def _run_chunks(seed_seq, n: int, chunk_size: int, fn: Callable[[np.random.Generator, int], np.ndarray]) -> RunningMoments:
    sizes = chunk_sizes(n, chunk_size)

    def one(c: int) -> RunningMoments:
        return RunningMoments.of(fn(chunk_rng(seed_seq, c), sizes[c]))

    workers = worker_count()
    if workers == 1 or len(sizes) == 1:
        parts = [one(c) for c in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    return merge_moments(parts)


def _estimate(m: RunningMoments, seed: int, loss: LossSpec, name: str, theta) -> RiskEstimate:
    if m.n < 2:
        raise ValueError("need at least two replicates")
    sd = math.sqrt(max(m.m2, 0.0) / (m.n - 1))
    return RiskEstimate(m.mean, sd / math.sqrt(m.n), m.n, seed, loss.name, name,
                        float(np.linalg.norm(theta)))


def _check(model: MixtureModel, loss: LossSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.d,):
        raise DimensionError(f"theta must have shape ({model.d},)")
    if loss.d is not None and loss.d != model.d:
        raise DimensionError("loss and model dimensions differ")
    return theta


def _seed_sequence(seed, task: str, index: int):
    if isinstance(seed, np.random.SeedSequence):
        return seed, int(seed.entropy)
    return task_seed(int(seed), task, index), int(seed)


def paired_loss_draws(model: MixtureModel, loss: LossSpec, est_a: Estimator, est_b: Estimator,
                      theta, rng: np.random.Generator, n: int) -> np.ndarray:
    """Per-draw ``L(theta, est_a(X)) - L(theta, est_b(X))`` on one batch of draws."""
    x = sample_chunk(model, theta, rng, n)
    return eval_loss(loss, est_a.estimate(x), x, theta) - eval_loss(loss, est_b.estimate(x), x, theta)


def mc_risk(model: MixtureModel, loss: LossSpec, est: Estimator, theta, n: int, seed,
            *, task: str = "risk", index: int = 0, chunk_size: int = DEFAULT_CHUNK) -> RiskEstimate:
    """Monte Carlo frequentist risk of ``est`` at ``theta`` (target estimator ``X``)."""
    theta = _check(model, loss, theta)
    if n < 2:
        raise ValueError("need at least two replicates")
    seq, master = _seed_sequence(seed, task, index)

    def chunk(rng, m):
        x = sample_chunk(model, theta, rng, m)
        return eval_loss(loss, est.estimate(x), x, theta)

    return _estimate(_run_chunks(seq, n, chunk_size, chunk), master, loss, est.name, theta)


def mc_risk_difference(model: MixtureModel, loss: LossSpec, est_a: Estimator, est_b: Estimator,
                       theta, n: int, seed, *, task: str = "risk", index: int = 0,
                       chunk_size: int = DEFAULT_CHUNK) -> RiskEstimate:
    """``R(est_a) - R(est_b)`` on common draws, with the paired standard error."""
    theta = _check(model, loss, theta)
    if n < 2:
        raise ValueError("need at least two replicates")
    seq, master = _seed_sequence(seed, task, index)

    def chunk(rng, m):
        return paired_loss_draws(model, loss, est_a, est_b, theta, rng, m)

    name = f"{est_a.name} - {est_b.name}"
    return _estimate(_run_chunks(seq, n, chunk_size, chunk), master, loss, name, theta)


def default_grid(d: int) -> tuple[float, ...]:
    """``{0, 0.5, 1, 2, 4, 8} * sqrt(d)``."""
    return tuple(c * math.sqrt(d) for c in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0))


@dataclass(frozen=True)
class DominanceScan:
    """Paired risk differences ``R(estimator) - R(reference)`` along ``theta = ||theta|| e_1``."""

    model: str
    loss: str
    loss_family: str
    omega: float
    estimator: str
    reference: str
    grid: tuple[float, ...]
    estimates: tuple[RiskEstimate, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")

    @property
    def verdicts(self) -> tuple[str, ...]:
        return tuple(e.verdict for e in self.estimates)

    @property
    def all_dominate(self) -> bool:
        return all(v == "dominates" for v in self.verdicts)

    @property
    def none_violated(self) -> bool:
        return all(v != "violated" for v in self.verdicts)

    def rows(self) -> list[dict]:
        return [
            {
                "theta_norm": e.theta_norm,
                "estimator": self.estimator,
                "loss_family": self.loss_family,
                "omega": self.omega,
                "risk_diff": e.mean,
                "std_err": e.std_err,
                "n": e.n,
                "verdict": e.verdict,
            }
            for e in self.estimates
        ]


def _check_grid(grid) -> tuple[float, ...]:
    grid = tuple(float(g) for g in grid)
    if not grid or any(g < 0 for g in grid):
        raise ValueError("grid must be a nonempty list of nonnegative norms")
    return grid


def dominance_scan(model: MixtureModel, loss: LossSpec, est: Estimator, grid=None, n: int = 10**6,
                   seed: int = 0, *, reference: Estimator | None = None, task: str = "dominance",
                   chunk_size: int = DEFAULT_CHUNK) -> DominanceScan:
    """Paired comparison against ``X`` (or ``reference``) at every grid norm."""
    reference = TargetX() if reference is None else reference
    grid = _check_grid(default_grid(model.d) if grid is None else grid)
    estimates = []
    for i, norm in enumerate(grid):
        theta = np.zeros(model.d)
        theta[0] = norm
        estimates.append(mc_risk_difference(model, loss, est, reference, theta, n, seed,
                                            task=task, index=i, chunk_size=chunk_size))
    return DominanceScan(model.name, loss.name, loss.family, loss.omega, est.name,
                         reference.name, grid, tuple(estimates))


def unknown_variance_scan(d: int, k: int, omega: float, a: float, r: ShrinkFunction | None = None,
                          grid=None, n: int = 10**6, seed: int = 0, *, sigma2: float = 1.0,
                          task: str = "uv-dominance", chunk_size: int = DEFAULT_CHUNK) -> DominanceScan:
    """Scan of ``X - (1 - omega) a (S^2/(k+2)) r(||X||^2/S^2) X/||X||^2`` against ``X``.

    ``X ~ N_d(theta, sigma2 I)``; within each chunk ``X`` is drawn first and
    then ``S^2 = sigma2 * chi^2_k`` from the same stream, so ``S^2`` is
    independent of ``X``.  Loss is balanced squared error.
    """
    if int(k) != k or k < 1:
        raise ValueError("chi-square degrees of freedom must be >= 1")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    model = MixtureModel.normal(d, sigma2)
    loss = LossSpec("balanced_squared", omega, d=d)
    r = ShrinkFunction.constant_one() if r is None else r
    est = UnknownVarianceBaranchik((1.0 - omega) * a, r, int(k))
    grid = _check_grid(default_grid(d) if grid is None else grid)
    estimates = []
    for i, norm in enumerate(grid):
        theta = np.zeros(d)
        theta[0] = norm
        seq, master = _seed_sequence(seed, task, i)

        def chunk(rng, m, theta=theta):
            x = sample_chunk(model, theta, rng, m)
            s2 = sigma2 * rng.chisquare(k, size=m)
            return eval_loss(loss, est.estimate(x, s2), x, theta) - eval_loss(loss, x, x, theta)

        m = _run_chunks(seq, n, chunk_size, chunk)
        estimates.append(_estimate(m, master, loss, est.name, theta))
    return DominanceScan(model.name, loss.name, loss.family, omega, est.name, "X",
                         grid, tuple(estimates))
