"""Dataclass <-> JSON-dict conversion with strict key checking.

Unknown keys are rejected (typos in experiment configs should fail
loudly), tuples round-trip through JSON lists, and enums through their
values.
"""

from __future__ import annotations

import dataclasses
from enum import Enum
from typing import get_args, get_origin

from .errors import ConfigError


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, tuple):
        return [to_dict(v) for v in obj]
    if isinstance(obj, list):
        return [to_dict(v) for v in obj]
    return obj


def from_dict(cls, data: dict, path: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {path or cls.__name__}, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        where = path or cls.__name__
        raise ConfigError(f"unknown config key(s) {sorted(unknown)} in {where}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        sub = f"{path}.{name}" if path else name
        kwargs[name] = _coerce(f.type, value, sub)
    return cls(**kwargs)


def _coerce(ftype, value, path):
    if isinstance(ftype, str):
        ftype = _resolve_type(ftype)
    if dataclasses.is_dataclass(ftype):
        return from_dict(ftype, value, path)
    if isinstance(ftype, type) and issubclass(ftype, Enum):
        try:
            return ftype(value)
        except ValueError:
            raise ConfigError(f"invalid value {value!r} for {path}") from None
    if ftype is tuple or get_origin(ftype) is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path} must be a list")
        return tuple(value)
    return value


_TYPE_REGISTRY: dict = {}


def register_config_types(*classes) -> None:
    """Make dataclass/enum types resolvable from string annotations."""
    for cls in classes:
        _TYPE_REGISTRY[cls.__name__] = cls


def _resolve_type(name: str):
    base = name.split("[")[0].strip()
    if base in _TYPE_REGISTRY:
        return _TYPE_REGISTRY[base]
    if base == "tuple":
        return tuple
    return {"int": int, "float": float, "bool": bool, "str": str}.get(base, object)
