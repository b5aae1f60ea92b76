"""Unit-suffixed quantity strings, e.g. ``"4 uH"`` or ``"100mm"``."""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation

from .errors import ConfigError

_PREFIX = {
    "T": "1e12", "G": "1e9", "M": "1e6", "k": "1e3", "": "1",
    "c": "1e-2", "m": "1e-3", "u": "1e-6", "n": "1e-9", "p": "1e-12", "f": "1e-15",
}

# dimension -> (base symbol aliases, allowed prefixes)
DIMENSIONS = {
    "resistance": (("ohm", "Ohm", "Ω"), "GMkmu"),
    "inductance": (("H",), "munp"),
    "capacitance": (("F",), "munpf"),
    "frequency": (("Hz",), "GMk"),
    "length": (("m",), "kcmu"),
    "voltage": (("V",), "kmu"),
}

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_RE = re.compile(rf"^\s*({_NUM})\s*([^\s\d.+-][^\s]*)?\s*$")


def _scale(unit: str, dimension: str) -> Decimal:
    bases, prefixes = DIMENSIONS[dimension]
    for base in bases:
        if unit.endswith(base):
            prefix = unit[: -len(base)].replace("µ", "u").replace("μ", "u")
            if prefix == "" or (len(prefix) == 1 and prefix in prefixes):
                return Decimal(_PREFIX[prefix])
    raise ValueError(f"unknown {dimension} unit {unit!r}")


def parse_quantity(text, dimension: str, path: str = "", default_unit: str | None = None) -> float:
    """Convert ``"<number> <unit>"`` to an SI float.

    Decimal arithmetic keeps ``"4 uH"`` exactly equal to ``4e-6``. A bare
    number is accepted only when ``default_unit`` is given.
    """
    if dimension not in DIMENSIONS:
        raise KeyError(dimension)
    if isinstance(text, bool) or not isinstance(text, (str, int, float)):
        raise ConfigError(path, f"expected a {dimension} string such as '4 uH', got {text!r}")
    if isinstance(text, (int, float)):
        if default_unit is None:
            raise ConfigError(path, f"{dimension} value {text!r} needs an explicit unit suffix")
        text = f"{text!r} {default_unit}"
    m = _RE.match(text)
    if not m:
        raise ConfigError(path, f"cannot parse {dimension} quantity {text!r}")
    number, unit = m.group(1), m.group(2)
    if unit is None:
        if default_unit is None:
            raise ConfigError(path, f"{dimension} value {text!r} needs an explicit unit suffix")
        unit = default_unit
    try:
        value = Decimal(number) * _scale(unit, dimension)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    except InvalidOperation:
        raise ConfigError(path, f"cannot parse number {number!r}") from None
    return float(value)


_BASE = {"resistance": "ohm", "inductance": "H", "capacitance": "F",
         "frequency": "Hz", "length": "m", "voltage": "V"}


def format_quantity(value: float, dimension: str) -> str:
    """SI base-unit string that parses back to exactly ``value``."""
    return f"{float(value)!r} {_BASE[dimension]}"


def parse_list(text, dimension: str, path: str = "", default_unit: str | None = None) -> list[float]:
    """Comma-separated quantities (``"100mm,150mm"``) or a JSON list."""
    if isinstance(text, str):
        items = [t for t in text.split(",") if t.strip()]
    else:
        items = list(text)
    return [parse_quantity(t, dimension, f"{path}[{i}]", default_unit) for i, t in enumerate(items)]
