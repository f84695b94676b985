"""Scenario config files (TOML) and sweep-axis parsing.

A config names one scenario::

    scenario = "coded_scaling"
    replications = 1
    base_seed = 0

    [params]
    m = 0.3

    [sweep]
    K = "1:100:1"      # start:stop:step, stop inclusive; or an explicit list
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(Exception):
    """Config cannot be read or parsed at all."""


class ConfigReadError(ConfigError, OSError):
    """Config file is missing or unreadable."""


@dataclass
class ScenarioConfig:
    scenario: str
    replications: int = 1
    base_seed: int = 0
    params: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    source: str = ""


def parse_axis(value) -> list:
    """Expand a sweep axis: ``"a:b:s"`` (inclusive range), a list, or a
    scalar.  Ranges are stepped in decimal so ``"0.1:0.3:0.1"`` gives three
    points exactly."""
    if isinstance(value, list):
        return list(value)
    if isinstance(value, str) and value.count(":") == 2:
        try:
            a, b, s = (Decimal(p.strip()) for p in value.split(":"))
        except InvalidOperation:
            raise ValueError(f"malformed range {value!r}") from None
        if s <= 0 or b < a:
            raise ValueError(f"range {value!r} needs step > 0 and stop >= start")
        n = int((b - a) / s) + 1
        if n > 1_000_000:
            raise ValueError(f"range {value!r} has too many points")
        integral = all(p == p.to_integral_value() and "." not in str(p) for p in (a, s))
        pts = [a + i * s for i in range(n)]
        return [int(p) if integral else float(p) for p in pts]
    return [value]


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigReadError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(doc, source=str(path))


def from_dict(doc: dict, source: str = "") -> ScenarioConfig:
    return ScenarioConfig(
        scenario=doc.get("scenario", ""),
        replications=doc.get("replications", 1),
        base_seed=doc.get("base_seed", 0),
        params=dict(doc.get("params", {})),
        sweep=dict(doc.get("sweep", {})),
        source=source,
    )


def is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)
