"""Experiment configuration: an INI file with one section per block.

Example::

    [model]
    family = student
    d = 5
    nu = 6

    [kernel]
    family = log1p
    role = rho

    [loss]
    family = rho_balanced
    omega = 0, 0.3, 0.7

    [estimator]
    family = baranchik
    a_fraction = 0.5
    r = rational
    c = 5

    [run]
    n = 1000000
    seed = 20240101

Lists are comma separated.  :func:`emit` writes a canonical text that
:func:`parse` maps back to an identical :class:`ExperimentConfig`.
Values that fail validation raise :class:`ConfigError` carrying the line
number of the offending key.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .estimators import ShrinkFunction
from .kernels import LOSS_FAMILIES, Kernel, LossSpec
from .mixtures import MixtureModel

SECTIONS = ("model", "kernel", "loss", "estimator", "uv", "prior", "run")
MODEL_FAMILIES = ("normal", "student", "exponential", "discrete")
ESTIMATOR_FAMILIES = ("baranchik", "james_stein", "target_X")
SHRINK_FAMILIES = ("constant_one", "rational", "user")


@dataclass(frozen=True)
class ModelBlock:
    family: str = "normal"
    d: int = 5
    sigma2: float = 1.0
    nu: float = 6.0
    rate: float = 1.0
    points: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()

    def build(self) -> MixtureModel:
        if self.family == "normal":
            return MixtureModel.normal(self.d, self.sigma2)
        if self.family == "student":
            return MixtureModel.student(self.d, self.nu)
        if self.family == "exponential":
            return MixtureModel.exponential(self.d, self.rate)
        return MixtureModel.discrete(self.d, self.points, self.weights)


# parameters of each kernel family, in constructor order
_KERNEL_KEYS = {
    "identity": (),
    "reflected_normal": ("alpha",),
    "log1p": (),
    "power_shift": ("gamma", "beta"),
    "bounded_rational": ("r",),
    "pure_power": ("beta",),
}


@dataclass(frozen=True)
class KernelBlock:
    family: str = "identity"
    role: str = "rho"
    params: tuple[tuple[str, float], ...] = ()

    def build(self) -> Kernel:
        return Kernel.from_params(self.family, **dict(self.params))


@dataclass(frozen=True)
class LossBlock:
    family: str = "balanced_squared"
    omega: tuple[float, ...] = (0.0,)

    def build(self, kernel: Kernel, omega: float, d: int) -> LossSpec:
        if self.family == "balanced_squared":
            return LossSpec("balanced_squared", omega, d=d)
        return LossSpec(self.family, omega, kernel, d=d)


@dataclass(frozen=True)
class EstimatorBlock:
    family: str = "baranchik"
    a: float | None = None
    a_fraction: float | None = None
    r: str = "constant_one"
    c: float = 1.0
    knots: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def shrink(self) -> ShrinkFunction:
        if self.family == "james_stein" or self.r == "constant_one":
            return ShrinkFunction.constant_one()
        if self.r == "rational":
            return ShrinkFunction.rational(self.c)
        return ShrinkFunction.from_grid(self.knots, self.values)


@dataclass(frozen=True)
class UVBlock:
    k: tuple[int, ...] = (2,)
    sigma2: tuple[float, ...] = (1.0,)


@dataclass(frozen=True)
class PriorBlock:
    m0: float = 0.0
    v0: float = 1.0
    sigma2: float = 1.0
    instances: int = 20


@dataclass(frozen=True)
class RunBlock:
    n: int = 10**6
    seed: int = 0
    grid: tuple[float, ...] | None = None
    out: str = "results"
    chunk: int = 2**14
    require: str = "dominates"


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    kernel: KernelBlock = field(default_factory=KernelBlock)
    loss: LossBlock = field(default_factory=LossBlock)
    estimator: EstimatorBlock = field(default_factory=EstimatorBlock)
    uv: UVBlock | None = None
    prior: PriorBlock | None = None
    run: RunBlock = field(default_factory=RunBlock)

    def with_overrides(self, *, seed: int | None = None, out: str | None = None,
                       n: int | None = None) -> "ExperimentConfig":
        run = self.run
        if seed is not None:
            run = replace(run, seed=int(seed))
        if out is not None:
            run = replace(run, out=str(out))
        if n is not None:
            if n < 2:
                raise ConfigError("n must be at least 2")
            run = replace(run, n=int(n))
        return replace(self, run=run)


# ---------------------------------------------------------------------------
# parsing helpers


class _Lines:
    """Line numbers of section headers and keys, for error messages."""

    _section = re.compile(r"^\s*\[([^\]]+)\]")
    _key = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")

    def __init__(self, text: str):
        self.sections: dict[str, int] = {}
        self.keys: dict[tuple[str, str], int] = {}
        current = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            m = self._section.match(line)
            if m:
                current = m.group(1).strip()
                self.sections[current] = lineno
                continue
            m = self._key.match(line)
            if m and current is not None and not line[:1].isspace():
                self.keys[(current, m.group(1).strip().lower())] = lineno

    def of(self, section: str, key: str | None = None) -> int | None:
        if key is not None and (section, key) in self.keys:
            return self.keys[(section, key)]
        return self.sections.get(section)


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, lines: _Lines, section: str):
        self.cp, self.lines, self.section = cp, lines, section
        self.data = cp[section] if cp.has_section(section) else {}
        self.used: set[str] = set()

    def error(self, key: str | None, message: str) -> ConfigError:
        where = f"[{self.section}]" + (f" {key}" if key else "")
        return ConfigError(f"{where}: {message}", self.lines.of(self.section, key))

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default: Any = None) -> Any:
        self.used.add(key)
        return self.data.get(key, default)

    def text(self, key: str, default: str | None = None, choices=None) -> str:
        value = self.raw(key)
        if value is None:
            if default is None:
                raise self.error(key, "missing required key")
            return default
        value = value.strip()
        if choices is not None and value not in choices:
            raise self.error(key, f"must be one of {', '.join(choices)}; got {value!r}")
        return value

    def number(self, key: str, default=None, *, kind=float, positive=False, nonneg=False):
        value = self.raw(key)
        if value is None:
            if default is None:
                raise self.error(key, "missing required key")
            return default
        try:
            out = _convert(value.strip(), kind)
        except ValueError:
            raise self.error(key, f"not a valid {kind.__name__}: {value.strip()!r}") from None
        self._range(key, out, positive, nonneg)
        return out

    def numbers(self, key: str, default=None, *, kind=float, positive=False, nonneg=False):
        value = self.raw(key)
        if value is None:
            if default is None:
                raise self.error(key, "missing required key")
            return default
        items = [v.strip() for v in value.split(",") if v.strip()]
        if not items:
            raise self.error(key, "empty list")
        try:
            out = tuple(_convert(v, kind) for v in items)
        except ValueError:
            raise self.error(key, f"not a list of {kind.__name__}: {value.strip()!r}") from None
        for v in out:
            self._range(key, v, positive, nonneg)
        return out

    def _range(self, key, v, positive, nonneg):
        if isinstance(v, float) and not math.isfinite(v):
            raise self.error(key, "must be finite")
        if positive and not v > 0:
            raise self.error(key, "must be positive")
        if nonneg and v < 0:
            raise self.error(key, "must be nonnegative")

    def finish(self) -> None:
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise self.error(extra[0], "unknown key")


def _convert(text: str, kind):
    if kind is int:
        value = float(text)
        if value != int(value):
            raise ValueError(text)
        return int(value)
    return float(text)


def _parse_model(r: _Reader) -> ModelBlock:
    family = r.text("family", "normal", MODEL_FAMILIES)
    d = r.number("d", kind=int)
    if d < 3:
        raise r.error("d", "dimension must be at least 3")
    block = ModelBlock(family=family, d=d)
    if family == "normal":
        block = replace(block, sigma2=r.number("sigma2", 1.0, positive=True))
    elif family == "student":
        block = replace(block, nu=r.number("nu", positive=True))
    elif family == "exponential":
        block = replace(block, rate=r.number("rate", 1.0, positive=True))
    else:
        pts = r.numbers("points", positive=True)
        wts = r.numbers("weights", positive=True)
        if len(pts) != len(wts):
            raise r.error("weights", "points and weights must have the same length")
        if abs(math.fsum(wts) - 1.0) > 1e-12:
            raise r.error("weights", "weights must sum to 1")
        block = replace(block, points=pts, weights=wts)
    r.finish()
    return block


def _parse_kernel(r: _Reader) -> KernelBlock:
    family = r.text("family", "identity", tuple(_KERNEL_KEYS))
    role = r.text("role", "rho", ("rho", "ell"))
    params = tuple((k, r.number(k, positive=True)) for k in _KERNEL_KEYS[family])
    r.finish()
    block = KernelBlock(family, role, params)
    try:
        kernel = block.build()
    except ValueError as exc:
        raise r.error("family", str(exc)) from None
    if not kernel.supports_role(role):
        raise r.error("role", f"{kernel.name} cannot be used in the {role} role "
                              "(derivative is unbounded at 0)")
    return block


def _parse_loss(r: _Reader, kernel: KernelBlock) -> LossBlock:
    family = r.text("family", "balanced_squared", LOSS_FAMILIES)
    omega = r.numbers("omega", (0.0,), nonneg=True)
    if any(w >= 1.0 for w in omega):
        raise r.error("omega", "omega must lie in [0, 1)")
    r.finish()
    if family == "rho_balanced" and kernel.role != "rho":
        raise r.error("family", "rho_balanced loss needs a kernel with role = rho")
    if family == "ell_balanced" and kernel.role != "ell":
        raise r.error("family", "ell_balanced loss needs a kernel with role = ell")
    if family == "balanced_squared" and kernel.family != "identity":
        raise r.error("family", "balanced_squared loss takes the identity kernel")
    return LossBlock(family, omega)


def _parse_estimator(r: _Reader) -> EstimatorBlock:
    family = r.text("family", "baranchik", ESTIMATOR_FAMILIES)
    if r.has("a") and r.has("a_fraction"):
        raise r.error("a_fraction", "give either a or a_fraction, not both")
    a = r.number("a", nonneg=True) if r.has("a") else None
    frac = r.number("a_fraction", nonneg=True) if r.has("a_fraction") else None
    if family != "target_X" and a is None and frac is None:
        raise r.error(None, "shrinkage estimators need a or a_fraction")
    shrink = r.text("r", "constant_one", SHRINK_FAMILIES)
    block = EstimatorBlock(family=family, a=a, a_fraction=frac, r=shrink)
    if shrink == "rational":
        block = replace(block, c=r.number("c", positive=True))
    elif shrink == "user":
        knots = r.numbers("knots", positive=True)
        values = r.numbers("values", nonneg=True)
        if len(knots) != len(values):
            raise r.error("values", "knots and values must have the same length")
        block = replace(block, knots=knots, values=values)
    r.finish()
    try:
        block.shrink()
    except ValueError as exc:
        raise r.error("r", str(exc)) from None
    return block


def _parse_uv(r: _Reader) -> UVBlock:
    block = UVBlock(k=r.numbers("k", kind=int, positive=True),
                    sigma2=r.numbers("sigma2", (1.0,), positive=True))
    r.finish()
    return block


def _parse_prior(r: _Reader) -> PriorBlock:
    block = PriorBlock(m0=r.number("m0", 0.0), v0=r.number("v0", positive=True),
                       sigma2=r.number("sigma2", 1.0, positive=True),
                       instances=r.number("instances", 20, kind=int, positive=True))
    r.finish()
    return block


def _parse_run(r: _Reader) -> RunBlock:
    n = r.number("n", 10**6, kind=int)
    if n < 2:
        raise r.error("n", "need at least two replicates")
    grid = r.numbers("grid", nonneg=True) if r.has("grid") else None
    if grid is not None and any(b <= a for a, b in zip(grid, grid[1:])):
        raise r.error("grid", "grid must be strictly increasing")
    block = RunBlock(
        n=n,
        seed=r.number("seed", 0, kind=int, nonneg=True),
        grid=grid,
        out=r.text("out", "results"),
        chunk=r.number("chunk", 2**14, kind=int, positive=True),
        require=r.text("require", "dominates", ("dominates", "no_violation")),
    )
    r.finish()
    return block


def parse(text: str) -> ExperimentConfig:
    """Parse and validate configuration text."""
    lines = _Lines(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("could not parse line", lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1], exc.lineno) from None
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]", lines.of(name))

    def reader(name):
        return _Reader(cp, lines, name)

    if not cp.has_section("model"):
        raise ConfigError("missing [model] section")
    model = _parse_model(reader("model"))
    kernel = _parse_kernel(reader("kernel"))
    loss = _parse_loss(reader("loss"), kernel)
    estimator = _parse_estimator(reader("estimator"))
    uv = _parse_uv(reader("uv")) if cp.has_section("uv") else None
    prior = _parse_prior(reader("prior")) if cp.has_section("prior") else None
    run = _parse_run(reader("run"))
    if uv is not None and model.family != "normal":
        raise ConfigError("[uv] requires the normal model", lines.of("uv"))
    return ExperimentConfig(model, kernel, loss, estimator, uv, prior, run)


def load(path: str | Path) -> ExperimentConfig:
    return parse(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# emission


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _block_items(cfg: ExperimentConfig, name: str) -> list[tuple[str, Any]]:
    if name == "model":
        m = cfg.model
        items = [("family", m.family), ("d", m.d)]
        extra = {"normal": [("sigma2", m.sigma2)], "student": [("nu", m.nu)],
                 "exponential": [("rate", m.rate)],
                 "discrete": [("points", m.points), ("weights", m.weights)]}
        return items + extra[m.family]
    if name == "kernel":
        k = cfg.kernel
        return [("family", k.family), ("role", k.role)] + list(k.params)
    if name == "loss":
        return [("family", cfg.loss.family), ("omega", cfg.loss.omega)]
    if name == "estimator":
        e = cfg.estimator
        items = [("family", e.family)]
        if e.a is not None:
            items.append(("a", e.a))
        if e.a_fraction is not None:
            items.append(("a_fraction", e.a_fraction))
        items.append(("r", e.r))
        if e.r == "rational":
            items.append(("c", e.c))
        elif e.r == "user":
            items += [("knots", e.knots), ("values", e.values)]
        return items
    if name == "uv":
        return [("k", cfg.uv.k), ("sigma2", cfg.uv.sigma2)]
    if name == "prior":
        p = cfg.prior
        return [("m0", p.m0), ("v0", p.v0), ("sigma2", p.sigma2), ("instances", p.instances)]
    r = cfg.run
    items = [("n", r.n), ("seed", r.seed)]
    if r.grid is not None:
        items.append(("grid", r.grid))
    return items + [("out", r.out), ("chunk", r.chunk), ("require", r.require)]


def emit(cfg: ExperimentConfig) -> str:
    """Canonical text for ``cfg``; ``parse(emit(cfg)) == cfg``."""
    chunks = []
    for name in SECTIONS:
        if getattr(cfg, name) is None:
            continue
        body = "\n".join(f"{k} = {_fmt(v)}" for k, v in _block_items(cfg, name))
        chunks.append(f"[{name}]\n{body}\n")
    return "\n".join(chunks)


def as_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Plain dictionary (for the JSON manifest)."""
    out = {}
    for f in fields(cfg):
        block = getattr(cfg, f.name)
        out[f.name] = None if block is None else dict(_block_items(cfg, f.name))
    return out
