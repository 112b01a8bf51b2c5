"""Finite-difference sign tests shared by kernel validation and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

DEFAULT_CM_GRID = np.logspace(-3, 3, 64)


@dataclass(frozen=True)
class AlternationReport:
    """Per-order outcome of ``(-1)^n Delta_h^n f(t) >= 0`` on a grid."""

    orders: dict[int, bool] = field(default_factory=dict)
    worst: dict[int, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.orders.values())

    @property
    def first_failure(self) -> int | None:
        bad = [n for n, ok in sorted(self.orders.items()) if not ok]
        return bad[0] if bad else None


def alternating_differences(
    fn,
    grid=None,
    max_order: int = 6,
    rel_step: float = 1e-2,
    tol: float = 1e-9,
    min_order: int = 0,
) -> AlternationReport:
    """Check that forward differences of ``fn`` alternate in sign.

    The step is ``h = rel_step * t`` at each grid point.  The signed difference
    is normalised by ``sum_j C(n, j) |f(t + j h)|`` before comparing with
    ``-tol`` so the test is scale free.
    """
    t = np.asarray(DEFAULT_CM_GRID if grid is None else grid, dtype=float)
    if t.size == 0 or np.any(t <= 0):
        raise ValueError("grid must be nonempty and positive")
    h = rel_step * t
    j = np.arange(max_order + 1)
    pts = t[:, None] + j[None, :] * h[:, None]
    with np.errstate(over="ignore", under="ignore"):
        vals = np.asarray(fn(pts), dtype=float).reshape(pts.shape)
    orders, worst = {}, {}
    for n in range(min_order, max_order + 1):
        coeff = np.array([(-1.0) ** (n - k) * comb(n, k) for k in range(n + 1)])
        diff = vals[:, : n + 1] @ coeff
        scale = np.abs(vals[:, : n + 1]) @ np.abs(coeff)
        with np.errstate(invalid="ignore", divide="ignore"):
            signed = np.where(scale > 0, (-1.0) ** n * diff / scale, 0.0)
        ok = bool(np.all(np.isfinite(signed)) and np.all(signed >= -tol))
        orders[n] = ok
        worst[n] = float(np.nanmin(signed)) if signed.size else 0.0
    return AlternationReport(orders=orders, worst=worst)
