"""Sectioned INI run configuration."""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from typing import Optional

from .energetics import ModelParams
from .tessellation import build, compute_constants


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    tessellation: str = "triangular"
    d: int = 2
    N: int = 6


@dataclass
class ParamsSection:
    eps: float = 0.05
    rho: float = 0.1
    c0: float = 0.5
    ell: float = 1.0
    alpha: float = 0.25
    sigma: float = 10.0
    m: float = 0.0
    beta: float = 10.0
    potential: str = "quadratic"
    c1: Optional[float] = None
    c2: Optional[float] = None
    tilde_multiplicity: str = "pair"


@dataclass
class SamplerSection:
    steps: int = 2000
    burn_in: int = 1000
    thin: int = 100
    seed: Optional[int] = None
    chains: int = 1
    initial: str = "standard"
    blur: float = 0.0
    move_probs: tuple = (0.25, 0.25, 0.5)
    step_scale: Optional[float] = None
    validate_every: int = 1000


@dataclass
class RigiditySection:
    kinds: tuple = ("constant_rotation", "gradient", "dislocation", "counterexample", "smooth_random")
    ps: tuple = (2.0, 1.0)
    etas: tuple = (1.0, 2.0, 4.0, 8.0)
    resolution: float = 32.0
    ensemble_size: int = 1000
    seed: int = 0


@dataclass
class IOSection:
    output_dir: str = "out"
    formats: tuple = ("csv", "json")


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    params: ParamsSection = field(default_factory=ParamsSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    rigidity: RigiditySection = field(default_factory=RigiditySection)
    io: IOSection = field(default_factory=IOSection)

    def model_params(self) -> ModelParams:
        return ModelParams(**dataclasses.asdict(self.params))

    def tessellation(self):
        return build(self.model.tessellation, self.model.d, self.params.ell)

    def validate(self) -> None:
        try:
            tess = self.tessellation()
            self.model_params().validate(tess, compute_constants(tess))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        s = self.sampler
        if s.steps <= s.burn_in:
            raise ConfigError("sampler.steps must exceed sampler.burn_in")
        if s.thin < 1 or s.chains < 1:
            raise ConfigError("sampler.thin and sampler.chains must be positive")
        if s.initial not in ("standard", "blurred"):
            raise ConfigError("sampler.initial must be 'standard' or 'blurred'")
        if len(s.move_probs) != 3 or abs(sum(s.move_probs) - 1) > 1e-12 or min(s.move_probs) < 0:
            raise ConfigError("sampler.move_probs must be three non-negative numbers summing to 1")
        if self.model.N < 1:
            raise ConfigError("model.N must be positive")
        if self.rigidity.resolution < 16:
            raise ConfigError("rigidity.resolution must be at least 16")
        if any(p < 1 for p in self.rigidity.ps):
            raise ConfigError("rigidity.ps must be >= 1")


SECTIONS = {
    "model": ModelSection,
    "params": ParamsSection,
    "sampler": SamplerSection,
    "rigidity": RigiditySection,
    "io": IOSection,
}

_NONE = "none"


def _kind(cls, name):
    default = {f.name: f for f in fields(cls)}[name]
    t = default.type if isinstance(default.type, str) else default.type.__name__
    return t


def _parse_value(t: str, raw: str):
    raw = raw.strip()
    if t.startswith("Optional"):
        if raw.lower() == _NONE:
            return None
        t = t[len("Optional["):-1]
    if t == "int":
        return int(raw)
    if t == "float":
        return float(raw)
    if t == "str":
        return raw
    if t == "tuple":
        items = [x.strip() for x in raw.split(",") if x.strip()]
        out = []
        for x in items:
            try:
                out.append(float(x))
            except ValueError:
                out.append(x)
        return tuple(out)
    raise ConfigError(f"unsupported field type {t}")


def _format_value(v) -> str:
    if v is None:
        return _NONE
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig()
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        cls = SECTIONS[sec]
        names = {f.name for f in fields(cls)}
        obj = getattr(cfg, sec)
        for key, raw in cp.items(sec):
            if key not in names:
                raise ConfigError(f"unknown key {sec}.{key}")
            try:
                setattr(obj, key, _parse_value(_kind(cls, key), raw))
            except ValueError as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {raw!r}") from exc
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        cp[sec] = {f.name: _format_value(getattr(obj, f.name)) for f in fields(obj)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_dict(cfg: RunConfig) -> dict:
    return {sec: {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(getattr(cfg, sec)).items()}
            for sec in SECTIONS}
