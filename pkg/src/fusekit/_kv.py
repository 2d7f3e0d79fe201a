"""Flat ``key = value`` files used for experiment configs and synth specs."""

from __future__ import annotations

from collections.abc import Iterable
from pathlib import Path

from .errors import ConfigError, DataError


def parse_kv(lines: Iterable[str], name: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{name}: line {lineno}: expected key=value")
        if key in values:
            raise ConfigError(f"{name}: line {lineno}: duplicate key {key!r}", key)
        values[key] = value.strip()
    return values


def read_kv(path: str | Path) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_kv(fh, str(path))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc


def as_int(values: dict[str, str], key: str, default: int | None = None) -> int:
    if key not in values:
        if default is None:
            raise ConfigError(f"missing required key {key!r}", key)
        return default
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {values[key]!r}", key) from None


def as_float(values: dict[str, str], key: str, default: float | None = None) -> float:
    if key not in values:
        if default is None:
            raise ConfigError(f"missing required key {key!r}", key)
        return default
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {values[key]!r}", key) from None


def as_list(values: dict[str, str], key: str) -> list[str] | None:
    if key not in values:
        return None
    return [item.strip() for item in values[key].split(",") if item.strip()]
