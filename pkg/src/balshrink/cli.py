"""Command-line runner: ``balshrink SUBCOMMAND [CONFIG] [--seed S] [--out DIR] [--n N]``.

Each run writes ``<out>/<subcommand>.csv`` and ``<out>/<subcommand>.manifest.json``.
The CSV depends only on the configuration (including seed and ``n``); the
wall time and timestamp live in the manifest.  The exit status is 0 exactly
when every row passes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, as_dict, emit, load, parse
from .cutoffs import (
    CutoffReport,
    cutoff_ell_balanced,
    cutoff_normal_known_scale,
    cutoff_normal_unknown_scale,
    cutoff_rho_balanced,
    cutoff_squared_error_mixture,
)
from .diagnostics import run_suite
from .errors import BalshrinkError, ConfigError
from .estimators import (
    Baranchik,
    BayesBalanced,
    NormalConjugateBayes,
    TargetX,
    bayes_combine,
    gradient_log_marginal,
    posterior_loss_argmin_check,
)
from .kernels import LossSpec
from .mixtures import MixtureModel
from .risk import default_grid, dominance_scan, mc_risk_difference, unknown_variance_scan
from .rng import task_seed

log = logging.getLogger("balshrink")

SUBCOMMANDS = ("cutoff", "risk-scan", "uv-scan", "verify", "bayes-compare")
RISK_COLUMNS = ("theta_norm", "estimator", "loss_family", "omega", "risk_diff", "std_err", "n",
                "verdict")
# echoed so that any row can be re-run on its own
RISK_ECHO = ("model", "kernel", "d", "seed", "grid_index")
CUTOFF_COLUMNS = ("theorem", "route", "value", "error", "inputs")
ROUTE_RTOL = 1e-6


@dataclass
class RunResult:
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    passed: bool = True
    summary: str = ""


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# cut-offs


def _cutoff_reports(cfg: ExperimentConfig, omega: float) -> list[CutoffReport]:
    model = cfg.model.build()
    kernel = cfg.kernel.build()
    family = cfg.loss.family
    reports: list[CutoffReport] = []
    if family == "balanced_squared":
        if cfg.model.family == "normal":
            reports.append(cutoff_normal_known_scale(model.d, omega, cfg.model.sigma2))
        reports.extend(cutoff_squared_error_mixture(model))
    elif family == "rho_balanced":
        reports.extend(cutoff_rho_balanced(model, kernel, omega))
    else:
        reports.extend(cutoff_ell_balanced(model, kernel, omega))
    if cfg.uv is not None:
        for k in cfg.uv.k:
            reports.append(cutoff_normal_unknown_scale(model.d, k, omega))
    return reports


def _routes_agree(reports) -> bool:
    groups: dict[str, list[float]] = {}
    for r in reports:
        # the two rho routes are the same bound reached two ways
        key = "rho" if r.theorem.startswith("rho_") else r.theorem
        groups.setdefault(key, []).append(r.value)
    return all(max(g) - min(g) <= ROUTE_RTOL * max(g) for g in groups.values())


def run_cutoff(cfg: ExperimentConfig) -> RunResult:
    res = RunResult(CUTOFF_COLUMNS)
    for omega in cfg.loss.omega:
        reports = _cutoff_reports(cfg, omega)
        res.passed &= _routes_agree(reports)
        for r in reports:
            res.rows.append({"theorem": r.theorem, "route": r.route, "value": r.value,
                             "error": r.error, "inputs": r.inputs_text()})
    res.summary = f"{len(res.rows)} cut-off rows; routes {'agree' if res.passed else 'DISAGREE'}"
    return res


def primary_cutoff(cfg: ExperimentConfig, omega: float) -> tuple[float, float]:
    """``(cut-off, multiplier scale)`` used to resolve ``a_fraction``.

    The estimator multiplier is ``a * scale``: ``scale = 1 - omega`` for the
    bounds stated for ``delta_{a(1-omega), r}``, otherwise 1.
    """
    model = cfg.model.build()
    kernel = cfg.kernel.build()
    family = cfg.loss.family
    if family == "balanced_squared":
        if cfg.model.family == "normal":
            return cutoff_normal_known_scale(model.d, omega, cfg.model.sigma2).value, 1.0
        return cutoff_squared_error_mixture(model)[0].value, 1.0 - omega
    if family == "rho_balanced":
        return cutoff_rho_balanced(model, kernel, omega)[-1].value, 1.0
    return cutoff_ell_balanced(model, kernel, omega)[0].value, 1.0 - omega


def resolve_multiplier(cfg: ExperimentConfig, omega: float) -> float:
    est = cfg.estimator
    if est.family == "target_X":
        return 0.0
    cut, scale = primary_cutoff(cfg, omega)
    a = est.a if est.a is not None else est.a_fraction * cut
    return a * scale


def _passes(verdict: str, require: str) -> bool:
    return verdict == "dominates" if require == "dominates" else verdict != "violated"


def _risk_rows(scan, cfg, kernel_name, seed) -> list[dict]:
    rows = []
    for i, row in enumerate(scan.rows()):
        row.update(model=cfg.model.build().mixing.name, kernel=kernel_name, d=cfg.model.d,
                   seed=seed, grid_index=i)
        rows.append(row)
    return rows


def run_risk_scan(cfg: ExperimentConfig) -> RunResult:
    model: MixtureModel = cfg.model.build()
    kernel = cfg.kernel.build()
    res = RunResult(RISK_COLUMNS + RISK_ECHO)
    grid = cfg.run.grid or default_grid(model.d)
    for j, omega in enumerate(cfg.loss.omega):
        loss = cfg.loss.build(kernel, omega, model.d)
        est = TargetX() if cfg.estimator.family == "target_X" else Baranchik(
            resolve_multiplier(cfg, omega), cfg.estimator.shrink())
        scan = dominance_scan(model, loss, est, grid, cfg.run.n, cfg.run.seed,
                              task=f"risk-scan:{j}", chunk_size=cfg.run.chunk)
        res.rows.extend(_risk_rows(scan, cfg, kernel.name, cfg.run.seed))
    res.passed = all(_passes(r["verdict"], cfg.run.require) for r in res.rows)
    bad = sum(not _passes(r["verdict"], cfg.run.require) for r in res.rows)
    res.summary = f"{len(res.rows)} grid points, {bad} failing ({cfg.run.require})"
    return res


def run_uv_scan(cfg: ExperimentConfig) -> RunResult:
    if cfg.uv is None:
        raise ConfigError("uv-scan needs a [uv] section")
    if cfg.model.family != "normal":
        raise ConfigError("uv-scan needs the normal model")
    d = cfg.model.d
    res = RunResult(RISK_COLUMNS + RISK_ECHO)
    grid = cfg.run.grid or default_grid(d)
    r = cfg.estimator.shrink()
    for k in cfg.uv.k:
        for sigma2 in cfg.uv.sigma2:
            for j, omega in enumerate(cfg.loss.omega):
                if cfg.estimator.a is not None:
                    a = cfg.estimator.a
                else:
                    # the scan applies (1 - omega) itself
                    a = cfg.estimator.a_fraction * cutoff_normal_unknown_scale(d, k, omega).value
                    a /= 1.0 - omega
                scan = unknown_variance_scan(d, k, omega, a, r, grid, cfg.run.n, cfg.run.seed,
                                             sigma2=sigma2, task=f"uv-scan:{k}:{sigma2!r}:{j}",
                                             chunk_size=cfg.run.chunk)
                for i, row in enumerate(scan.rows()):
                    row.update(model=f"normal(sigma2={sigma2:g},k={k})", kernel="identity", d=d,
                               seed=cfg.run.seed, grid_index=i)
                    res.rows.append(row)
    res.passed = all(_passes(r["verdict"], cfg.run.require) for r in res.rows)
    res.summary = f"{len(res.rows)} grid points"
    return res


def run_verify(cfg: ExperimentConfig) -> RunResult:
    suite = run_suite(cfg.run.seed)
    res = RunResult(("check", "subject", "passed", "detail"))
    for r in suite.results:
        res.rows.append({"check": r.check, "subject": r.subject, "passed": r.passed,
                         "detail": r.detail})
    res.passed = suite.passed
    res.summary = suite.table()
    return res


def run_bayes_compare(cfg: ExperimentConfig) -> RunResult:
    """Bayes rule under balanced loss: argmin check, marginal identity and risk transfer."""
    prior = cfg.prior
    if prior is None:
        raise ConfigError("bayes-compare needs a [prior] section")
    d = cfg.model.d
    conj = NormalConjugateBayes((prior.m0,), prior.v0, prior.sigma2)
    res = RunResult(("check", "instance", "omega", "value", "passed"))
    rng = np.random.default_rng(task_seed(cfg.run.seed, "bayes-compare"))
    for i in range(prior.instances):
        x = prior.m0 + math.sqrt(prior.v0 + prior.sigma2) * rng.standard_normal(d)
        post = conj.estimate(x)
        via_marginal = x + prior.sigma2 * gradient_log_marginal(conj, x)
        gap = float(np.max(np.abs(via_marginal - post)))
        res.rows.append({"check": "marginal_identity", "instance": i, "omega": 0.0,
                         "value": gap, "passed": gap <= 1e-10})
        for omega in cfg.loss.omega:
            rep = posterior_loss_argmin_check(omega, conj, x, bayes_combine(omega, x, post))
            res.rows.append({"check": "posterior_argmin", "instance": i, "omega": omega,
                             "value": rep.max_abs_gap, "passed": rep.passed})
    model = MixtureModel.normal(d, prior.sigma2)
    grid = cfg.run.grid or default_grid(d)
    for omega in cfg.loss.omega:
        if omega == 0.0:
            continue
        for i, norm in enumerate(grid):
            theta = np.full(d, prior.m0)
            theta[0] += norm
            task = f"bayes-risk:{i}"
            bal = mc_risk_difference(model, LossSpec("balanced_squared", omega, d=d),
                                     BayesBalanced(omega, conj), TargetX(), theta, cfg.run.n,
                                     cfg.run.seed, task=task, chunk_size=cfg.run.chunk)
            unb = mc_risk_difference(model, LossSpec("balanced_squared", 0.0, d=d), conj,
                                     TargetX(), theta, cfg.run.n, cfg.run.seed, task=task,
                                     chunk_size=cfg.run.chunk)
            ok = math.copysign(1.0, bal.mean) == math.copysign(1.0, unb.mean)
            res.rows.append({"check": "risk_sign_transfer", "instance": i, "omega": omega,
                             "value": bal.mean, "passed": ok})
    res.passed = all(r["passed"] for r in res.rows)
    res.summary = f"{len(res.rows)} checks, {sum(not r['passed'] for r in res.rows)} failing"
    return res


RUNNERS = {
    "cutoff": run_cutoff,
    "risk-scan": run_risk_scan,
    "uv-scan": run_uv_scan,
    "verify": run_verify,
    "bayes-compare": run_bayes_compare,
}


# ---------------------------------------------------------------------------
# entry point


def default_config_text(name: str = "default.ini") -> str:
    return resources.files("balshrink").joinpath("data", name).read_text(encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="balshrink",
                                description="Shrinkage estimation under balanced losses.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("config", nargs="?", help="experiment INI file (default: bundled default.ini)")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--out", help="override [run] out (output directory)")
    p.add_argument("--n", type=int, help="override [run] n")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _manifest(sub, cfg, config_text, started, elapsed, res, csv_path) -> dict:
    return {
        "subcommand": sub,
        "config": as_dict(cfg),
        "config_text": config_text,
        "seed": cfg.run.seed,
        "n": cfg.run.n,
        "passed": res.passed,
        "rows": len(res.rows),
        "csv": str(csv_path),
        "versions": {"balshrink": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "started": started,
        "wall_time_s": elapsed,
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config is None:
            cfg = parse(default_config_text())
        else:
            cfg = load(args.config)
        cfg = cfg.with_overrides(seed=args.seed, out=args.out, n=args.n)
    except (ConfigError, OSError) as exc:
        print(f"balshrink: config error: {exc}", file=sys.stderr)
        return 2
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        res = RUNNERS[args.subcommand](cfg)
    except ConfigError as exc:
        print(f"balshrink: config error: {exc}", file=sys.stderr)
        return 2
    except BalshrinkError as exc:
        print(f"balshrink: {exc}", file=sys.stderr)
        return 1
    elapsed = time.perf_counter() - t0
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{args.subcommand}.csv"
    write_csv(csv_path, res.columns, res.rows)
    manifest = _manifest(args.subcommand, cfg, emit(cfg), started, elapsed, res, csv_path)
    (out / f"{args.subcommand}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                                         encoding="utf-8")
    print(res.summary)
    print(f"{'PASS' if res.passed else 'FAIL'}: wrote {csv_path}")
    return 0 if res.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
