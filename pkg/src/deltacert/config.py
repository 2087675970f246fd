"""Run configuration: one strict JSON document with explicit defaults."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .certify import CertifyConfig
from .errors import ConfigError, DeltaCertError
from .hybrid import IntegratorConfig
from .models import MODEL_NAMES


@dataclass(frozen=True)
class ModelSection:
    name: str = "bouncing-ball"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RolloutSection:
    num_rollouts: int = 1000
    K: int = 50


@dataclass(frozen=True)
class BarrierSection:
    mode: str = "fixed"
    delta: float = 0.0  # 0 -> take delta* from --certificate
    gamma_b: float = 0.5
    N: int = 100
    eps: float = 0.05
    n_d: int = 11
    delta_range: tuple = (0.0, 0.05)
    N_outer: int = 20


@dataclass(frozen=True)
class SimulateSection:
    steps: int = 10
    delta: float = 0.0
    x0: tuple = ()  # empty -> start on the orbit


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = ModelSection()
    integrator: IntegratorConfig = IntegratorConfig()
    certify: CertifyConfig = CertifyConfig()
    rollout: RolloutSection = RolloutSection()
    barrier: BarrierSection = BarrierSection()
    simulate: SimulateSection = SimulateSection()
    seed: int = 0
    out: str = "out"

    def to_dict(self):
        d = asdict(self)
        # the certify seed is carried once, at top level
        d["certify"].pop("seed")
        return d


_SECTIONS = {
    "model": ModelSection,
    "integrator": IntegratorConfig,
    "certify": CertifyConfig,
    "rollout": RolloutSection,
    "barrier": BarrierSection,
    "simulate": SimulateSection,
}
_SKIP = {"certify": {"seed"}}


def _coerce(section, name, value, default):
    where = f"{section}.{name}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where}: expected a list of numbers")
        return tuple(float(v) for v in value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return dict(value)
    raise ConfigError(f"{where}: unsupported field")


def _section(name, cls, doc):
    if not isinstance(doc, dict):
        raise ConfigError(f"{name}: expected an object")
    base = cls()
    allowed = {f.name for f in fields(cls)} - _SKIP.get(name, set())
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    values = {k: _coerce(name, k, v, getattr(base, k)) for k, v in doc.items()}
    try:
        return replace(base, **values)
    except (ValueError, TypeError, DeltaCertError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    allowed = set(_SECTIONS) | {"seed", "out"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    kw = {name: _section(name, cls, doc[name]) for name, cls in _SECTIONS.items() if name in doc}
    if "seed" in doc:
        kw["seed"] = _coerce("", "seed", doc["seed"], 0)
    if "out" in doc:
        kw["out"] = _coerce("", "out", doc["out"], "")
    cfg = RunConfig(**kw)
    return validate(cfg)


def validate(cfg):
    if cfg.model.name not in MODEL_NAMES:
        raise ConfigError(f"model.name must be one of {', '.join(MODEL_NAMES)}")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.rollout.num_rollouts < 0 or cfg.rollout.K < 0:
        raise ConfigError("rollout counts must be non-negative")
    if cfg.barrier.mode not in ("fixed", "max"):
        raise ConfigError("barrier.mode must be 'fixed' or 'max'")
    if len(cfg.barrier.delta_range) != 2:
        raise ConfigError("barrier.delta_range must have two entries")
    if cfg.simulate.steps < 0:
        raise ConfigError("simulate.steps must be non-negative")
    return replace(cfg, certify=replace(cfg.certify, seed=cfg.seed))


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc

    def no_dupes(pairs):
        keys = [k for k, _ in pairs]
        if len(keys) != len(set(keys)):
            raise ConfigError("duplicate keys in config")
        return dict(pairs)

    def no_constants(token):
        raise ConfigError(f"non-finite number {token} in config")

    try:
        doc = json.loads(text, object_pairs_hook=no_dupes, parse_constant=no_constants)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return from_dict(doc)
