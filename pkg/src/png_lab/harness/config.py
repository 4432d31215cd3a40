"""Flat ``key = value`` configuration files with typed schemas.

Lines starting with ``#`` are comments. Lists are comma separated. Every experiment
has a dataclass schema; unknown keys and unparsable values are configuration errors.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def read_file(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text)


def _convert(raw: str, tp, key: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw.lower() in ("", "none"):
            return None
        return _convert(raw, args[0], key)
    if origin is tuple:
        (inner, _) = typing.get_args(tp)
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return tuple(_convert(p, inner, key) for p in parts)
    if origin is typing.Literal:
        allowed = typing.get_args(tp)
        if raw not in allowed:
            raise ConfigError(f"{key}: {raw!r} not in {allowed}")
        return raw
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if tp is float:
            return float(raw)
        if tp is str:
            return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(tp, '__name__', tp)}") from exc
    raise ConfigError(f"{key}: unsupported type {tp}")


def build(schema, values: dict[str, str], ignore=("experiment",)):
    """Instantiate dataclass ``schema`` from raw strings, validating names and types."""
    hints = typing.get_type_hints(schema)
    names = {f.name for f in dataclasses.fields(schema)}
    unknown = set(values) - names - set(ignore)
    if unknown:
        raise ConfigError(f"unknown keys for {schema.__name__}: {sorted(unknown)}")
    kwargs = {k: _convert(v, hints[k], k) for k, v in values.items() if k in names}
    try:
        return schema(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{schema.__name__}: {exc}") from exc


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "none"
    return str(v).lower() if isinstance(v, bool) else str(v)


def dump(cfg, experiment: str | None = None) -> str:
    lines = [] if experiment is None else [f"experiment = {experiment}"]
    for f in dataclasses.fields(cfg):
        lines.append(f"{f.name} = {_format(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def as_dict(cfg) -> dict:
    return {f.name: (list(v) if isinstance(v := getattr(cfg, f.name), tuple) else v) for f in dataclasses.fields(cfg)}
