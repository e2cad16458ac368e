"""Plain-text `key = value` run configuration files."""

from __future__ import annotations

from dataclasses import fields

from .errors import ConfigError
from .training import TrainConfig

_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}
_INT_KEYS = {"tau", "n_dyn", "n_sta", "d", "batch", "epochs", "seed",
             "patience", "topk", "factorize_iters"}
_FLOAT_KEYS = {"rho", "alpha", "beta", "gamma", "lam", "lr"}
_STR_KEYS = {"variant", "target_channel"}
# `lambda` is accepted as an alias for the estimation-loss weight key
_ALIASES = {"lambda": "lam"}


def parse_config_text(text: str, source: str = "<config>") -> TrainConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        key = _ALIASES.get(key, key)
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    try:
        return TrainConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: str) -> TrainConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=path)
