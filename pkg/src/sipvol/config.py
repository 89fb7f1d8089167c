"""Run configuration: INI-style ``key = value`` sections, then environment,
then command-line overrides.

Sections are ``[dgp]`` (simulation parameters), ``[spot]`` (estimator),
``[rank]`` and ``[run]``. Unknown keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .lowrank import METHODS, RankPolicy
from .simulate import DgpParams
from .spot_vol import PreAvgConfig

ENV_OUT_DIR = "SIPVOL_OUT_DIR"
ENV_THREADS = "SIPVOL_THREADS"


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    reps: int = 500
    threads: int = 1
    out_dir: str = "out"
    methods: tuple = ("sip", "ave", "ar1", "pc", "har_d")
    # rolling backtest
    omega_list: tuple = (0.1, 0.5, 0.9)
    window: int = 63
    # Monte Carlo grid; the plot CSVs slice it at plot_omega and plot_D
    D_grid: tuple = (50, 100, 150, 200)
    mc_omega_grid: tuple = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    plot_omega: tuple = (0.1, 0.5)
    plot_D: tuple = (50, 100)
    q0_list: tuple = (0.01, 0.02, 0.05, 0.1, 0.2)
    normalization: str = "per_n"


@dataclass(frozen=True)
class RunConfig:
    dgp: DgpParams = field(default_factory=DgpParams)
    spot: PreAvgConfig = field(default_factory=PreAvgConfig)
    rank: RankPolicy = field(default_factory=RankPolicy)
    run: RunSettings = field(default_factory=RunSettings)

    @property
    def params(self) -> DgpParams:
        """Simulation parameters carrying the master seed."""
        return self.dgp.replace(seed=self.run.seed)

    def validate(self) -> "RunConfig":
        self.dgp.validate()
        self.spot.validate()
        r = self.run
        if r.reps < 1 or r.threads < 1:
            raise ConfigError("reps and threads must be >= 1")
        if r.window < 3:
            raise ConfigError("window must be >= 3")
        bad = [m for m in r.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        if any(not (0.0 < w < 1.0) for w in r.omega_list + r.mc_omega_grid + r.plot_omega):
            raise ConfigError("omega values must lie in (0, 1)")
        if any(not (0.0 < q < 1.0) for q in r.q0_list):
            raise ConfigError("q0 values must lie in (0, 1)")
        if any(d < 2 for d in r.D_grid + r.plot_D):
            raise ConfigError("D values must be >= 2")
        if not r.methods or not r.omega_list or not r.D_grid or not r.q0_list:
            raise ConfigError("methods, omega_list, D_grid and q0_list must be non-empty")
        if r.normalization not in ("per_n", "per_n2"):
            raise ConfigError("normalization must be per_n or per_n2")
        return self

    def to_text(self) -> str:
        lines = []
        for section in ("dgp", "spot", "rank", "run"):
            lines.append(f"[{section}]")
            obj = getattr(self, section)
            for f in _fields(section, obj):
                lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """``overrides`` maps ``"section.key"`` to a string or an already-typed value."""
        grouped = {}
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            grouped.setdefault(section, {})[key] = value
        changes = {}
        for section, values in grouped.items():
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            obj = getattr(self, section)
            hints = typing.get_type_hints(type(obj))
            names = {f.name for f in _fields(section, obj)}
            typed = {}
            for key, value in values.items():
                if key not in names:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                typed[key] = _coerce(value, hints[key], f"{section}.{key}") if isinstance(value, str) else value
            try:
                changes[section] = dataclasses.replace(obj, **typed)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        return dataclasses.replace(self, **changes)


SECTIONS = ("dgp", "spot", "rank", "run")
# run.seed is the single master seed; the simulator's own field is derived from it
_HIDDEN = {("dgp", "seed")}


def _fields(section, obj):
    return [f for f in dataclasses.fields(obj) if (section, f.name) not in _HIDDEN]


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(text: str, hint, name: str):
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if text.lower() == "none":
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _coerce(text, inner, name)
    try:
        if hint is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text
        if hint is tuple or origin is tuple:
            parts = [p.strip() for p in text.split(",") if p.strip()]
            return tuple(_auto(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc
    raise ConfigError(f"cannot parse {name} of type {hint}")


def _auto(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_text(text: str, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    overrides = {f"{s}.{k}": v for s in parser.sections() for k, v in parser.items(s)}
    return (base or RunConfig()).with_overrides(overrides)


def load(path: str | None = None, flags: dict | None = None, environ=None) -> RunConfig:
    """Defaults, then ``path``, then environment, then ``flags``; validated."""
    environ = os.environ if environ is None else environ
    cfg = RunConfig()
    if path:
        try:
            with open(path) as fh:
                cfg = parse_text(fh.read(), cfg)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    env = {}
    if environ.get(ENV_OUT_DIR):
        env["run.out_dir"] = environ[ENV_OUT_DIR]
    if environ.get(ENV_THREADS):
        env["run.threads"] = environ[ENV_THREADS]
    cfg = cfg.with_overrides(env)
    if flags:
        cfg = cfg.with_overrides(flags)
    return cfg.validate()
