"""Run configuration: INI-style sections, typed dataclasses, presets.

Example::

    [domain]
    dim = 1
    lengths = 6.283185307179586
    modes = 64

    [cost]
    kappa = 1e-3
    phi_Q = reference

Any key can be overridden from the environment as
``SPARSECH_<SECTION>__<KEY>=value``.  Field-valued entries are presets of
the form ``name(key=value, ...)`` or a literal coefficient list ``[c0, c1, ...]``.

Spatial presets: ``zero``, ``constant(value=)``, ``mode(k=, amplitude=, offset=)``,
``random(amplitude=, decay=, seed=)``, ``[coefficients]``.  Controls accept the
same names plus ``frequency=`` (time profile ``cos(frequency pi t)``).
``phi_Q`` additionally accepts ``reference`` (the state driven by
``data.reference_control``) and ``file(path=, field=phi)`` (a checkpoint);
``phi_Omega`` accepts ``reference`` (its final value).
"""

from __future__ import annotations

import ast
import configparser
import math
import os
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import get_type_hints

import numpy as np

from .errors import ConfigError

__all__ = [
    "DomainConfig",
    "TimeConfig",
    "PhysicsConfig",
    "DataConfig",
    "CostSection",
    "OptimizerSection",
    "RunConfig",
    "ProblemConfig",
    "load_config",
    "loads_config",
    "serialize_config",
    "parse_preset",
    "ENV_PREFIX",
]

ENV_PREFIX = "SPARSECH_"


@dataclass(frozen=True)
class DomainConfig:
    dim: int = 1
    lengths: tuple[float, ...] = (2 * math.pi,)
    modes: tuple[int, ...] = (64,)
    dealias: float = 1.5


@dataclass(frozen=True)
class TimeConfig:
    T: float = 1.0
    steps: int = 400


@dataclass(frozen=True)
class PhysicsConfig:
    gamma: float = 1.0
    potential: str = "quartic"
    scale: float = 0.25
    well: float = 1.0
    stabilization: float | None = None
    blowup_bound: float = 1e3


@dataclass(frozen=True)
class DataConfig:
    phi0: str = "random(amplitude=0.3, decay=0.5)"
    w0: str = "zero"
    control: str = "zero"
    reference_control: str = "random(amplitude=1.0, decay=0.5, frequency=1.0)"


@dataclass(frozen=True)
class CostSection:
    b1: float = 1.0
    b2: float = 0.0
    b3: float = 1e-2
    kappa: float = 1e-3
    phi_Q: str = "reference"
    phi_Omega: str = "reference"
    u_low: float = -5.0
    u_high: float = 5.0


@dataclass(frozen=True)
class OptimizerSection:
    max_iter: int = 500
    tol: float = 1e-6
    sigma: float = 0.5
    max_backtracks: int = 60
    adjoint: str = "consistent"
    zero_tol: float = 1e-10
    sparsity_tol: float = 1e-5


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "runs"
    kappas: tuple[float, ...] = (0.01, 0.1, 0.5, 1.0, 5.0)
    kappa_scale: float | None = None
    probe_samples: int = 50
    workers: int = 0
    plot: bool = False


SECTIONS = {
    "domain": DomainConfig,
    "time": TimeConfig,
    "physics": PhysicsConfig,
    "data": DataConfig,
    "cost": CostSection,
    "optimizer": OptimizerSection,
    "run": RunConfig,
}


@dataclass(frozen=True)
class ProblemConfig:
    """Everything needed to reproduce a run.

    ``run.kappa_scale = None`` (written ``auto``) scales the sweep values by
    ``sup |r|`` at the zero control.
    """

    domain: DomainConfig = field(default_factory=DomainConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    data: DataConfig = field(default_factory=DataConfig)
    cost: CostSection = field(default_factory=CostSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        self.validate()

    def validate(self, lines: dict | None = None) -> None:
        lines = lines or {}

        def fail(section, key, msg):
            where = f" (line {lines[section, key]})" if (section, key) in lines else ""
            raise ConfigError(f"[{section}] {key}{where}: {msg}")

        d = self.domain
        if d.dim not in (1, 2):
            fail("domain", "dim", "dim must be 1 or 2")
        for key in ("lengths", "modes"):
            if len(getattr(d, key)) not in (1, d.dim):
                fail("domain", key, f"expected 1 or {d.dim} values")
        if any(not v > 0 for v in d.lengths):
            fail("domain", "lengths", "domain lengths must be positive")
        if any(n < 4 for n in d.modes):
            fail("domain", "modes", "need at least 4 modes per axis")
        if not self.time.T > 0:
            fail("time", "T", "final time must be positive")
        if self.time.steps < 1:
            fail("time", "steps", "need at least one time step")
        p = self.physics
        if not p.gamma > 0:
            fail("physics", "gamma", "relaxation-time assumption violated: gamma must be > 0")
        if p.potential != "quartic":
            fail("physics", "potential", f"unknown potential {p.potential!r}; only 'quartic' is available")
        if not (p.scale > 0 and p.well > 0):
            fail("physics", "scale", "double-well potential needs positive scale and well position")
        if p.stabilization is not None and not p.stabilization >= 0:
            fail("physics", "stabilization", "stabilization must be >= 0")
        c = self.cost
        for key in ("b1", "b2"):
            if not getattr(c, key) >= 0:
                fail("cost", key, f"cost-weight assumption violated: {key} must be >= 0")
        for key in ("b3", "kappa"):
            if not getattr(c, key) > 0:
                fail("cost", key, f"cost-weight assumption violated: {key} must be > 0")
        if not c.u_low <= c.u_high:
            fail("cost", "u_low", "box-bound assumption violated: need u_low <= u_high")
        o = self.optimizer
        if o.adjoint not in ("mirrored", "consistent"):
            fail("optimizer", "adjoint", "adjoint must be 'mirrored' or 'consistent'")
        if o.max_iter < 0 or not o.tol > 0 or not 0 < o.sigma < 1:
            fail("optimizer", "tol", "need max_iter >= 0, tol > 0 and 0 < sigma < 1")
        r = self.run
        if len(r.kappas) == 0 or any(not k > 0 for k in r.kappas):
            fail("run", "kappas", "sweep values must be positive")
        if r.kappa_scale is not None and not r.kappa_scale > 0:
            fail("run", "kappa_scale", "kappa_scale must be positive or 'auto'")
        for key, val in (("data", "phi0"), ("data", "w0"), ("data", "control"),
                         ("data", "reference_control"), ("cost", "phi_Q"), ("cost", "phi_Omega")):
            try:
                parse_preset(getattr(getattr(self, key), val))
            except ConfigError as exc:
                fail(key, val, str(exc))

    def replace(self, section: str, **changes) -> "ProblemConfig":
        return replace(self, **{section: replace(getattr(self, section), **changes)})


# ------------------------------------------------------------------ value parsing

_PRESET = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$", re.S)


def parse_preset(text: str) -> tuple:
    """``"name(a=1, b=2)"`` -> ``("name", {"a": 1, "b": 2})``; ``"[..]"`` -> ``("coeffs", {"values": [...]})``."""
    text = text.strip()
    if text.startswith("["):
        try:
            values = ast.literal_eval(text)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"bad coefficient list {text!r}") from exc
        return "coeffs", {"values": values}
    m = _PRESET.match(text)
    if not m:
        raise ConfigError(f"bad preset {text!r}; expected name(key=value, ...)")
    name, args = m.group(1), m.group(2)
    kwargs = {}
    if args and args.strip():
        try:
            call = ast.parse(f"f({args})", mode="eval").body
            if call.args:
                raise ValueError("positional arguments")
            kwargs = {kw.arg: ast.literal_eval(kw.value) for kw in call.keywords}
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"bad preset arguments in {text!r}") from exc
    return name, kwargs


def _split(text: str) -> list:
    return [p for p in re.split(r"[,\s]+", text.strip().strip("()[]")) if p]


def _convert(tp, text: str):
    text = text.strip()
    if tp is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if tp is int:
        return int(text)
    if tp is float:
        return float(text)
    if tp is str:
        return text
    if tp == (float | None):
        return None if text.lower() in ("auto", "none", "") else float(text)
    if tp == tuple[float, ...]:
        return tuple(float(v) for v in _split(text))
    if tp == tuple[int, ...]:
        return tuple(int(v) for v in _split(text))
    raise TypeError(f"unsupported config type {tp}")


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _key_lines(text: str) -> dict:
    lines, section = {}, None
    for n, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
        elif section and s and s[0] not in "#;" and ("=" in s or ":" in s):
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            lines[section, key] = n
    return lines


def loads_config(text: str, env: dict | None = None) -> ProblemConfig:
    """Parse configuration text.  ``env`` (e.g. ``os.environ``) supplies overrides."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"parse error at line {lineno}: {exc.errors[0][1].strip() if exc.errors else exc}") from exc
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", "?")
        raise ConfigError(f"parse error at line {lineno}: {exc}") from exc
    lines = _key_lines(text)

    raw = {name: {} for name in SECTIONS}
    for section in parser.sections():
        sec = section.lower()
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in parser.items(section):
            raw[sec][key] = (value, lines.get((sec, key)))

    for var, value in (env or {}).items():
        if not var.startswith(ENV_PREFIX) or "__" not in var:
            continue
        sec, key = var[len(ENV_PREFIX):].split("__", 1)
        sec = sec.lower()
        if sec not in SECTIONS:
            raise ConfigError(f"environment override {var}: unknown section {sec!r}")
        names = {f.name.lower(): f.name for f in fields(SECTIONS[sec])}
        if key.lower() not in names:
            raise ConfigError(f"environment override {var}: unknown key {key!r}")
        raw[sec][names[key.lower()]] = (value, None)

    kwargs = {}
    for sec, cls in SECTIONS.items():
        hints = get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        values = {}
        for key, (text_value, lineno) in raw[sec].items():
            where = f" (line {lineno})" if lineno else ""
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{sec}]{where}")
            try:
                values[key] = _convert(hints[key], text_value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{sec}] {key}{where}: {exc}") from exc
        kwargs[sec] = cls(**values)

    cfg = object.__new__(ProblemConfig)
    for sec, value in kwargs.items():
        object.__setattr__(cfg, sec, value)
    cfg.validate(lines)
    return cfg


def load_config(path, env=None) -> ProblemConfig:
    """Read a configuration file; ``env=None`` uses ``os.environ`` for overrides."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text, os.environ if env is None else env)


def serialize_config(cfg: ProblemConfig) -> str:
    """Text form with every key written out; ``loads_config`` inverts it exactly."""
    out = []
    for sec in SECTIONS:
        out.append(f"[{sec}]")
        obj = getattr(cfg, sec)
        for f in fields(obj):
            out.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        out.append("")
    return "\n".join(out)


def spatial_coeffs(preset: str, basis, rng: np.random.Generator) -> np.ndarray:
    """Coefficients of a spatial preset on ``basis``."""
    name, kw = parse_preset(preset)
    c = np.zeros(basis.shape)
    if name == "zero":
        return c
    if name == "constant":
        c[(0,) * basis.dim] = float(kw.get("value", 0.0)) * math.sqrt(basis.volume)
        return c
    if name == "mode":
        k = kw.get("k", 1)
        k = tuple(np.broadcast_to(np.atleast_1d(k), (basis.dim,)))
        c[(0,) * basis.dim] = float(kw.get("offset", 0.0)) * math.sqrt(basis.volume)
        c[k] += float(kw.get("amplitude", 1.0))
        return c
    if name == "random":
        gen = np.random.default_rng(kw["seed"]) if "seed" in kw else rng
        k = np.indices(basis.shape).sum(axis=0)
        return float(kw.get("amplitude", 1.0)) * gen.standard_normal(basis.shape) \
            * np.exp(-float(kw.get("decay", 0.5)) * k)
    if name == "coeffs":
        vals = np.atleast_1d(np.asarray(kw["values"], dtype=float))
        if vals.ndim != basis.dim or any(a > b for a, b in zip(vals.shape, basis.shape)):
            raise ConfigError(f"coefficient list of shape {vals.shape} does not fit basis {basis.shape}")
        c[tuple(slice(0, n) for n in vals.shape)] = vals
        return c
    raise ConfigError(f"unknown spatial preset {name!r}")


def control_coeffs(preset: str, basis, times, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-constant control coefficients ``(M, *shape)`` for a control preset."""
    name, kw = parse_preset(preset)
    freq = float(kw.pop("frequency", 0.0))
    spatial = spatial_coeffs(_unparse(name, kw), basis, rng)
    left = np.asarray(times)[:-1]
    profile = np.cos(freq * math.pi * left)
    return profile.reshape((-1,) + (1,) * basis.dim) * spatial


def _unparse(name, kw) -> str:
    if name == "coeffs":
        return repr(list(np.asarray(kw["values"]).tolist()))
    if not kw:
        return name
    return f"{name}(" + ", ".join(f"{k}={v!r}" for k, v in kw.items()) + ")"
