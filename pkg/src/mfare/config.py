"""Flat ``key = value`` run configuration with typed defaults."""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .network import HyperParams
from .trainer import TrainConfig

PATH_KEYS = ("train", "dev", "test", "embeddings", "checkpoint", "history", "out_dir")

# data-derived hyper-parameters are not user settable
_DERIVED = ("vocab_size", "num_labels")


def _defaults() -> dict:
    d = {k: "" for k in PATH_KEYS}
    d["out_dir"] = "."
    for f in fields(HyperParams):
        if f.name not in _DERIVED:
            d[f.name] = f.default
    for f in fields(TrainConfig):
        if f.name not in ("checkpoint",):
            d[f.name] = f.default
    d.update(min_count=1, lenient=False, workers=1, threshold=-1.0)
    return d


DEFAULTS = _defaults()


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw):
    default = DEFAULTS[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None
    return text


class RunConfig:
    """Defaults overlaid with file entries and then command-line overrides."""

    def __init__(self, values=None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value)

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls(parse_config_text(Path(path).read_text(encoding="utf-8")))

    def hyper(self, vocab_size: int, num_labels: int) -> HyperParams:
        kw = {f.name: self.values[f.name] for f in fields(HyperParams) if f.name not in _DERIVED}
        return HyperParams(vocab_size=vocab_size, num_labels=num_labels, **kw)

    def train_config(self) -> TrainConfig:
        kw = {f.name: self.values[f.name] for f in fields(TrainConfig) if f.name != "checkpoint"}
        return TrainConfig(checkpoint=self.values["checkpoint"] or None, **kw)

    def effective(self) -> dict:
        """Non-path settings, echoed into output artifacts."""
        return {k: v for k, v in sorted(self.values.items()) if k not in PATH_KEYS}

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.values.items()))


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value
    return out
