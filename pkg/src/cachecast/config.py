"""Flat ``key = value`` configuration files.

One assignment per line, ``#`` starts a comment. A comma-separated value
turns the file into a sweep: the cartesian product of all listed values is
expanded in key order of appearance. ``t`` may be given instead of
``gamma`` and means ``gamma = t / K``.
"""
from __future__ import annotations

import itertools
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError, ConfigParseError
from .model import SystemConfig

INT_KEYS = {"K", "L", "K_T", "L_T", "N", "C", "seed", "t"}
FRAC_KEYS = {"gamma", "gamma_T"}
STR_KEYS = {"mode"}
KNOWN = INT_KEYS | FRAC_KEYS | STR_KEYS


def _parse_value(key: str, raw: str, where: str):
    try:
        if key in INT_KEYS:
            return int(raw)
        if key in FRAC_KEYS:
            return Fraction(raw)
    except (ValueError, ZeroDivisionError):
        raise ConfigParseError(f"{where}: bad value {raw!r} for {key}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> list[SystemConfig]:
    values: dict[str, list] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigParseError(f"{where}: expected 'key = value', got {line!r}")
        key, raw = (x.strip() for x in line.split("=", 1))
        if key not in KNOWN:
            raise ConfigParseError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigParseError(f"{where}: duplicate key {key!r}")
        items = [x.strip() for x in raw.split(",")]
        if not all(items):
            raise ConfigParseError(f"{where}: empty value for {key}")
        values[key] = [_parse_value(key, x, where) for x in items]
    if "K" not in values:
        raise ConfigParseError(f"{source}: missing required key 'K'")
    if "t" in values and "gamma" in values:
        raise ConfigParseError(f"{source}: give either 't' or 'gamma', not both")

    keys = list(values)
    configs = []
    for combo in itertools.product(*(values[k] for k in keys)):
        kw = dict(zip(keys, combo))
        if "t" in kw:
            kw["gamma"] = Fraction(kw.pop("t"), kw["K"])
        try:
            configs.append(SystemConfig(**kw))
        except (ConfigError, TypeError) as exc:
            raise ConfigParseError(f"{source}: {exc}") from None
    return configs


def load_config(path) -> list[SystemConfig]:
    path = Path(path)
    return parse_config_text(path.read_text(), str(path))
