"""Flat ``key = value`` config files with ``[section]`` headers.

Sections map onto :class:`TrainConfig`::

    [train]    lr, total_iters, milestones, decay, batch, seed, scale_range, ...
    [model]    channels, squeeze_ratio, k, ... and the extractor keys depths, heads, window, dim, ...
    [degrade]  sigma, r, delta, q, jitter   (each a comma-separated range)
    [loss]     lambda1, lambda2, lambda_rec, lambda_adv, lambda_comp, lambda_id

Values are parsed according to the type of the default they replace.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from scaleform.errors import ConfigError
from scaleform.ffe import StbConfig
from scaleform.harness.train import TrainConfig

STB_KEYS = frozenset(StbConfig().__dict__)


def coerce(text: str, default, key: str = "value"):
    """Parse ``text`` into the type of ``default``."""
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("true", "1", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, (list, tuple)):
            elem = default[0] if default else 0.0
            items = [coerce(t, elem, key) for t in text.split(",") if t.strip()]
            return type(default)(items)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def _apply(target: dict, items: dict[str, str], section: str) -> None:
    for key, text in items.items():
        if key not in target:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        target[key] = coerce(text, target[key], f"{section}.{key}")


def apply_overrides(cfg: TrainConfig, sections: dict[str, dict[str, str]]) -> TrainConfig:
    """Return a new config with string overrides applied per section."""
    d = cfg.to_dict()
    for section, items in sections.items():
        if section == "train":
            nested = {"ranges", "weights", "model"}
            bad = nested & set(items)
            if bad:
                raise ConfigError(f"[train] cannot set {sorted(bad)}")
            _apply(d, items, section)
        elif section == "model":
            _apply(d["model"]["stb"], {k: v for k, v in items.items() if k in STB_KEYS}, section)
            _apply(d["model"], {k: v for k, v in items.items() if k not in STB_KEYS}, section)
        elif section == "degrade":
            _apply(d["ranges"], items, section)
        elif section == "loss":
            _apply(d["weights"], items, section)
        else:
            raise ConfigError(f"unknown section [{section}]")
    return TrainConfig.from_dict(d)


def read_sections(path) -> dict[str, dict[str, str]]:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {name: dict(parser[name]) for name in parser.sections()}


def load_config(path=None, overrides: dict[str, dict[str, str]] | None = None) -> TrainConfig:
    """Defaults, then the file (if any), then ``overrides`` (CLI flags)."""
    cfg = TrainConfig()
    if path is not None:
        cfg = apply_overrides(cfg, read_sections(path))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
