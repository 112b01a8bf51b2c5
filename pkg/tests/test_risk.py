import math

import numpy as np
import pytest

from balshrink.errors import DimensionError
from balshrink.estimators import Baranchik, ShrinkFunction, TargetX, james_stein
from balshrink.kernels import Kernel, LossSpec
from balshrink.mixtures import MixtureModel, sample_chunk
from balshrink.rng import chunk_rng, task_seed
from balshrink.risk import (
    DominanceScan,
    default_grid,
    dominance_scan,
    mc_risk,
    mc_risk_difference,
    paired_loss_draws,
    unknown_variance_scan,
    verdict,
    worker_count,
)

N = 40_000


def squared(omega, d=5):
    return LossSpec("balanced_squared", omega, d=d)


class TestVerdict:
    @pytest.mark.parametrize("diff, se, expected", [(-1.0, 0.1, "dominates"), (1.0, 0.1, "violated"),
                                                    (-0.2, 0.1, "inconclusive"), (0.0, 0.0, "inconclusive")])
    def test_thresholds(self, diff, se, expected):
        assert verdict(diff, se) == expected

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("BALSHRINK_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("BALSHRINK_THREADS", "zero")
        assert worker_count() == 1


class TestMcRisk:
    @pytest.mark.parametrize("omega", [0.0, 0.4])
    def test_target_risk(self, omega):
        est = mc_risk(MixtureModel.normal(5), squared(omega), TargetX(), np.zeros(5), N, seed=1)
        assert abs(est.mean - (1 - omega) * 5) < 3 * est.std_err
        assert est.n == N and est.seed == 1

    def test_james_stein_at_origin(self):
        est = mc_risk(MixtureModel.normal(5), squared(0.0), james_stein(3.0), np.zeros(5), N, seed=2)
        assert abs(est.mean - 2.0) < 3 * est.std_err
        assert est.mean + 3 * est.std_err < 5.0

    @pytest.mark.parametrize("loss", [
        LossSpec("rho_balanced", 0.3, Kernel.reflected_normal(2.0)),
        LossSpec("ell_balanced", 0.3, Kernel.log1p()),
        LossSpec("balanced_squared", 0.3),
    ], ids=lambda s: s.family)
    def test_target_constant_risk(self, loss):
        model = MixtureModel.student(4, 6.0)
        values = []
        for i, norm in enumerate(default_grid(4)):
            theta = np.array([norm, 0, 0, 0])
            values.append(mc_risk(model, loss, TargetX(), theta, N, seed=3, index=i))
        means = np.array([v.mean for v in values])
        ses = np.array([v.std_err for v in values])
        pooled = np.average(means, weights=1 / ses**2)
        assert np.all(np.abs(means - pooled) < 3 * np.sqrt(ses**2 + 1 / np.sum(1 / ses**2)))

    def test_standard_error_definition(self):
        model, loss = MixtureModel.normal(3), squared(0.0, 3)
        est = mc_risk(model, loss, TargetX(), np.zeros(3), 1000, seed=0, chunk_size=1000)
        x = sample_chunk(model, np.zeros(3), chunk_rng(task_seed(0, "risk", 0), 0), 1000)
        losses = np.sum(x * x, axis=1)
        assert est.mean == pytest.approx(np.mean(losses), rel=1e-12)
        assert est.std_err == pytest.approx(np.std(losses, ddof=1) / math.sqrt(1000), rel=1e-10)

    def test_guards(self):
        with pytest.raises(ValueError):
            mc_risk(MixtureModel.normal(3), squared(0.0, 3), TargetX(), np.zeros(3), 1, seed=0)
        with pytest.raises(DimensionError):
            mc_risk(MixtureModel.normal(3), squared(0.0, 3), TargetX(), np.zeros(4), 10, seed=0)
        with pytest.raises(DimensionError):
            mc_risk(MixtureModel.normal(3), squared(0.0, 4), TargetX(), np.zeros(3), 10, seed=0)


class TestDifference:
    def test_identical_estimators(self):
        est = james_stein(2.0)
        diff = mc_risk_difference(MixtureModel.normal(4), squared(0.2, 4), est, est, np.ones(4), N, seed=5)
        assert diff.mean == 0.0 and diff.std_err == 0.0

    @pytest.mark.parametrize("omega", [0.1, 0.5, 0.9])
    def test_per_draw_scaling_identity(self, omega):
        model, theta = MixtureModel.student(5, 6.0), np.array([1.0, -2.0, 0.0, 0.5, 3.0])
        a = 4.0
        moved = paired_loss_draws(model, squared(omega), Baranchik((1 - omega) * a), TargetX(), theta,
                                  np.random.default_rng(9), 5000)
        base = paired_loss_draws(model, squared(0.0), Baranchik(a), TargetX(), theta,
                                 np.random.default_rng(9), 5000)
        np.testing.assert_allclose(moved, (1 - omega) ** 2 * base, atol=1e-12)

    def test_pairing_shrinks_error(self):
        model, loss, theta = MixtureModel.normal(5), squared(0.0), np.zeros(5)
        diff = mc_risk_difference(model, loss, james_stein(1.5), TargetX(), theta, N, seed=6)
        single = mc_risk(model, loss, TargetX(), theta, N, seed=6)
        assert diff.std_err < single.std_err

    def test_reproducible(self):
        args = (MixtureModel.discrete(4, (0.5, 2.0), (0.5, 0.5)), squared(0.3, 4), james_stein(1.0),
                TargetX(), np.ones(4), 50_000)
        a = mc_risk_difference(*args, seed=11)
        b = mc_risk_difference(*args, seed=11)
        c = mc_risk_difference(*args, seed=12)
        assert (a.mean, a.std_err) == (b.mean, b.std_err)
        assert a.mean != c.mean

    def test_thread_count_does_not_change_results(self, monkeypatch):
        args = (MixtureModel.student(4, 6.0), squared(0.3, 4), james_stein(1.0), TargetX(), np.ones(4), 100_000)
        monkeypatch.setenv("BALSHRINK_THREADS", "1")
        serial = mc_risk_difference(*args, seed=4, chunk_size=4096)
        monkeypatch.setenv("BALSHRINK_THREADS", "4")
        threaded = mc_risk_difference(*args, seed=4, chunk_size=4096)
        assert (serial.mean, serial.std_err) == (threaded.mean, threaded.std_err)

    def test_direction_irrelevant(self):
        model, loss = MixtureModel.normal(3), squared(0.0, 3)
        est = james_stein(1.0)
        e1 = mc_risk_difference(model, loss, est, TargetX(), np.array([2.0, 0, 0]), 200_000, seed=1)
        e2 = mc_risk_difference(model, loss, est, TargetX(), np.array([0, 0, 2.0]), 200_000, seed=2)
        assert abs(e1.mean - e2.mean) < 3 * math.hypot(e1.std_err, e2.std_err)


class TestScans:
    def test_default_grid(self):
        assert default_grid(4) == (0.0, 1.0, 2.0, 4.0, 8.0, 16.0)

    def test_zero_multiplier(self):
        scan = dominance_scan(MixtureModel.normal(4), squared(0.3, 4), Baranchik(0.0), n=1000, seed=0)
        assert all(e.mean == 0.0 and e.std_err == 0.0 for e in scan.estimates)
        assert all(v == "inconclusive" for v in scan.verdicts)

    def test_half_cutoff_dominates(self):
        d, omega = 5, 0.4
        a = 0.5 * 2 * (d - 2) * (1 - omega)
        scan = dominance_scan(MixtureModel.normal(d), squared(omega), james_stein(a), n=200_000, seed=1)
        assert scan.all_dominate

    def test_over_shrinkage_violates(self):
        d = 5
        scan = dominance_scan(MixtureModel.normal(d), squared(0.0), james_stein(2.5 * 2 * (d - 2)),
                              n=50_000, seed=2)
        assert not scan.none_violated
        assert scan.verdicts[0] == "violated"

    def test_rows_columns(self):
        scan = dominance_scan(MixtureModel.normal(3), squared(0.0, 3), james_stein(0.5), grid=[0.0, 1.0],
                              n=1000, seed=0)
        rows = scan.rows()
        assert len(rows) == 2
        assert list(rows[0]) == ["theta_norm", "estimator", "loss_family", "omega", "risk_diff",
                                 "std_err", "n", "verdict"]

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            DominanceScan("m", "l", "f", 0.0, "e", "X", (1.0, 1.0), ())
        with pytest.raises(ValueError):
            dominance_scan(MixtureModel.normal(3), squared(0.0, 3), james_stein(0.5), grid=[-1.0], n=10)

    def test_unknown_variance_zero(self):
        scan = unknown_variance_scan(5, 4, 0.3, 0.0, n=1000, seed=0)
        assert all(e.mean == 0.0 for e in scan.estimates)

    @pytest.mark.parametrize("sigma2", [1.0, 4.0])
    def test_unknown_variance_james_stein(self, sigma2):
        scan = unknown_variance_scan(5, 4, 0.3, 3.0, n=200_000, seed=3, sigma2=sigma2)
        assert scan.all_dominate

    def test_unknown_variance_guards(self):
        with pytest.raises(ValueError):
            unknown_variance_scan(5, 0, 0.3, 1.0, n=10)
        with pytest.raises(ValueError):
            unknown_variance_scan(5, 2, 0.3, 1.0, n=10, sigma2=0.0)
