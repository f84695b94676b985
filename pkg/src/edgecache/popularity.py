"""Content catalogs, Zipf popularity and closed-form hit-probability bounds."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidCatalogError, InvalidParameterError, OutOfValidityError

__all__ = [
    "Catalog",
    "ZipfPopularity",
    "zipf_pmf",
    "top_m_mass",
    "power_law_hit_approx",
    "normalized_cache_ratio",
    "parse_size",
    "TABLE_I_MEMORIES",
    "TABLE_I_CATALOGS",
    "table_i",
]


@dataclass(frozen=True)
class Catalog:
    size_N: int

    def __post_init__(self):
        if int(self.size_N) != self.size_N or self.size_N < 1:
            raise InvalidCatalogError(f"catalog size must be a positive integer, got {self.size_N!r}")

    @property
    def content_ids(self) -> range:
        return range(self.size_N)


@dataclass(frozen=True)
class ZipfPopularity:
    """Zipf law over a catalog; ``probabilities[n]`` is the request
    probability of the content with rank ``n + 1``."""

    alpha: float
    probabilities: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.probabilities.setflags(write=False)

    @property
    def N(self) -> int:
        return len(self.probabilities)

    @property
    def catalog(self) -> Catalog:
        return Catalog(self.N)

    def cumulative(self) -> np.ndarray:
        """Cumulative mass ``c[M] = sum of the M largest probabilities``,
        with ``c[0] = 0`` and ``c[N] = 1``."""
        c = np.concatenate(([0.0], np.cumsum(self.probabilities)))
        c[-1] = 1.0
        return np.minimum(c, 1.0)


def _check_alpha(alpha) -> float:
    try:
        a = float(alpha)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"alpha must be a real number, got {alpha!r}") from None
    if not math.isfinite(a) or a < 0:
        raise InvalidParameterError(f"alpha must be finite and nonnegative, got {alpha!r}")
    return a


def zipf_pmf(alpha: float, N: int) -> ZipfPopularity:
    """Exact finite Zipf pmf, ``p[n] = (n+1)**-alpha / sum_k (k+1)**-alpha``.

    >>> zipf_pmf(1.0, 3).probabilities.round(4)
    array([0.5455, 0.2727, 0.1818])
    """
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise InvalidCatalogError(f"catalog size must be a positive integer, got {N!r}")
    a = _check_alpha(alpha)
    ranks = np.arange(1, int(N) + 1, dtype=np.float64)
    weights = ranks ** (-a)
    return ZipfPopularity(alpha=a, probabilities=weights / weights.sum())


def _as_probabilities(pop) -> np.ndarray:
    if isinstance(pop, ZipfPopularity):
        return pop.probabilities
    return np.asarray(pop, dtype=np.float64)


def top_m_mass(pop, M: int) -> float:
    """Sum of the M largest request probabilities.

    This is the IRM hit probability of the best static cache of size M and
    an upper bound for any policy under IRM traffic.  ``pop`` may be a
    :class:`ZipfPopularity` or any probability vector.
    """
    p = _as_probabilities(pop)
    N = len(p)
    if int(M) != M or M < 0:
        raise InvalidParameterError(f"cache size must be a nonnegative integer, got {M!r}")
    M = int(M)
    if M > N:
        raise InvalidParameterError(f"cache size M={M} exceeds catalog size N={N}")
    if M == 0:
        return 0.0
    if M == N:
        return 1.0
    if isinstance(pop, ZipfPopularity):
        top = p[:M]
    else:
        top = np.sort(p)[::-1][:M]
    return float(min(1.0, top.sum()))


def power_law_hit_approx(M: float, N: float, alpha: float) -> float:
    """Power-law approximation ``(M/N) ** (1 - alpha)`` of the top-M mass.

    Only meaningful for ``0 < alpha < 1``; other exponents raise
    :class:`OutOfValidityError`.
    """
    a = float(alpha)
    if not (0.0 < a < 1.0):
        raise OutOfValidityError(f"power-law approximation holds only for 0 < alpha < 1, got {alpha!r}")
    if not (0 < M <= N):
        raise InvalidParameterError(f"need 0 < M <= N, got M={M!r}, N={N!r}")
    return float((M / N) ** (1.0 - a))


def normalized_cache_ratio(cache_bytes: float, catalog_bytes: float) -> float:
    """Fraction of the catalog a cache can hold, capped at 1."""
    if not (cache_bytes > 0 and catalog_bytes > 0):
        raise InvalidParameterError("cache and catalog sizes must be positive")
    return min(1.0, cache_bytes / catalog_bytes)


_UNITS = {"": 1, "B": 1, "KB": 10**3, "MB": 10**6, "GB": 10**9, "TB": 10**12, "PB": 10**15, "EB": 10**18}
_SIZE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([KMGTPE]?B?)\s*$", re.IGNORECASE)


def parse_size(text) -> float:
    """Parse a decimal byte size such as ``"12.5PB"`` or ``"40 TB"``."""
    if isinstance(text, (int, float)):
        return float(text)
    m = _SIZE_RE.match(str(text))
    if not m:
        raise InvalidParameterError(f"cannot parse size {text!r}")
    unit = m.group(2).upper()
    if unit and not unit.endswith("B"):
        unit += "B"
    return float(m.group(1)) * _UNITS[unit]


# Memory technologies and application catalogs of the reference sizing table.
TABLE_I_MEMORIES = {"Disk": "2TB", "Disk Array": "40TB", "Data Center": "150PB"}
TABLE_I_CATALOGS = {"Netflix catalogue": "12.5PB", "Torrents": "1.5PB", "Wireless VoD catalogue": "1TB"}


def table_i(memories=None, catalogs=None) -> list[tuple[str, str, float]]:
    """Normalized cache size M/N for every (memory, catalog) pair, row-major."""
    memories = TABLE_I_MEMORIES if memories is None else memories
    catalogs = TABLE_I_CATALOGS if catalogs is None else catalogs
    return [
        (mem, cat, normalized_cache_ratio(parse_size(ms), parse_size(cs)))
        for mem, ms in memories.items()
        for cat, cs in catalogs.items()
    ]
