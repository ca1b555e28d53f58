"""Flat ``key=value`` serialisation of the configuration dataclasses."""

from __future__ import annotations

from dataclasses import MISSING, fields, is_dataclass

from .autodiff import ConfigurationError


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str, like, key: str):
    try:
        if isinstance(like, bool):
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, (list, tuple)):
            items = [t for t in text.split(",") if t.strip()]
            elem = like[0] if like else 0
            return type(like)(_parse(t, elem, key) for t in items)
        return text.strip()
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {text!r} as {type(like).__name__}") from None


def _default(f):
    if f.default is not MISSING:
        return f.default
    if f.default_factory is not MISSING:
        return f.default_factory()
    raise ConfigurationError(f"field {f.name} has no default to infer its type from")


def to_strings(obj, prefix: str = "") -> dict[str, str]:
    if not is_dataclass(obj):
        raise TypeError("expected a dataclass instance")
    return {f"{prefix}{f.name}": format_value(getattr(obj, f.name)) for f in fields(obj)}


def from_strings(cls, kv: dict[str, str], prefix: str = "", base=None, strict: bool = True):
    """Build ``cls`` from string values; keys outside ``prefix`` are ignored.

    Missing fields come from ``base`` (or the class defaults); unknown keys
    under the prefix raise unless ``strict`` is off.
    """
    names = {f.name: f for f in fields(cls)}
    values = {}
    for key, text in kv.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix):]
        if name not in names:
            if strict:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            continue
        like = getattr(base, name) if base is not None else _default(names[name])
        values[name] = _parse(text, like, key)
    if base is not None:
        merged = {f.name: getattr(base, f.name) for f in fields(cls)}
        merged.update(values)
        values = merged
    return cls(**values)


def dump(kv: dict[str, str]) -> str:
    return "".join(f"{k}={v}\n" for k, v in kv.items())
