"""Single-cache simulation: eviction policies and trace-driven hit statistics."""
from __future__ import annotations

import csv
import enum
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidParameterError, TraceCorruptionError
from .popularity import top_m_mass
from .traffic import IrmStream, SnmStream, Trace

__all__ = [
    "Policy",
    "CacheState",
    "HitStats",
    "process_trace",
    "static_place",
    "oracle_static_hit",
    "default_warmup",
    "batch_means",
    "refreshed_static_hits",
    "HIT_STATS_COLUMNS",
    "write_hit_stats",
]

NUM_BATCHES = 20


class Policy(str, enum.Enum):
    LRU = "LRU"
    LFU = "LFU"
    STATIC = "STATIC"
    ORACLE_STATIC = "ORACLE_STATIC"


class CacheState:
    """One cache of ``capacity_M`` unit-size contents.

    LRU keeps an ordered recency list; LFU keeps in-cache request counts and
    evicts the least frequently used content (oldest first among ties).
    STATIC and ORACLE_STATIC hold a fixed set chosen at construction.
    """

    def __init__(self, capacity_M: int, policy=Policy.LRU, stored: Iterable[int] = (), catalog_size: int | None = None):
        if int(capacity_M) != capacity_M or capacity_M < 0:
            raise InvalidParameterError(f"capacity must be a nonnegative integer, got {capacity_M!r}")
        self.capacity_M = int(capacity_M)
        self.policy = Policy(policy)
        self.catalog_size = catalog_size
        stored = list(dict.fromkeys(int(c) for c in stored))
        if len(stored) > self.capacity_M:
            raise InvalidParameterError(f"{len(stored)} contents do not fit in a cache of size {self.capacity_M}")
        self._recency: OrderedDict[int, None] = OrderedDict()
        self._freq: dict[int, int] = {}
        self._buckets: dict[int, OrderedDict[int, None]] = {}
        self._min_freq = 0
        self._static: frozenset[int] = frozenset()
        if self.policy in (Policy.STATIC, Policy.ORACLE_STATIC):
            self._static = frozenset(stored)
        else:
            for c in stored:
                self._insert(c)

    @classmethod
    def static(cls, capacity_M: int, contents, catalog_size=None) -> "CacheState":
        return cls(capacity_M, Policy.STATIC, contents, catalog_size)

    @classmethod
    def oracle_static(cls, pop, capacity_M: int) -> "CacheState":
        p = pop.probabilities if hasattr(pop, "probabilities") else np.asarray(pop, float)
        return cls(capacity_M, Policy.ORACLE_STATIC, sorted(static_place(p, capacity_M)), len(p))

    @property
    def stored(self) -> frozenset[int]:
        if self.policy in (Policy.STATIC, Policy.ORACLE_STATIC):
            return self._static
        if self.policy is Policy.LRU:
            return frozenset(self._recency)
        return frozenset(self._freq)

    def __contains__(self, content: int) -> bool:
        if self.policy is Policy.LRU:
            return content in self._recency
        if self.policy is Policy.LFU:
            return content in self._freq
        return content in self._static

    def __len__(self) -> int:
        return len(self.stored)

    def recency_order(self) -> list[int]:
        """Stored contents from least to most recently used (LRU only)."""
        return list(self._recency)

    def _insert(self, c: int) -> None:
        if self.capacity_M == 0:
            return
        if self.policy is Policy.LRU:
            if len(self._recency) >= self.capacity_M:
                self._recency.popitem(last=False)
            self._recency[c] = None
            assert len(self._recency) <= self.capacity_M
        else:
            if len(self._freq) >= self.capacity_M:
                victim, _ = self._buckets[self._min_freq].popitem(last=False)
                if not self._buckets[self._min_freq]:
                    del self._buckets[self._min_freq]
                del self._freq[victim]
            self._freq[c] = 1
            self._buckets.setdefault(1, OrderedDict())[c] = None
            self._min_freq = 1
            assert len(self._freq) <= self.capacity_M

    def request(self, c: int) -> bool:
        """Serve one request; returns True on a hit."""
        policy = self.policy
        if policy is Policy.LRU:
            rec = self._recency
            if c in rec:
                rec.move_to_end(c)
                return True
            self._insert(c)
            return False
        if policy is Policy.LFU:
            f = self._freq.get(c)
            if f is None:
                self._insert(c)
                return False
            bucket = self._buckets[f]
            del bucket[c]
            if not bucket:
                del self._buckets[f]
                if self._min_freq == f:
                    self._min_freq = f + 1
            self._freq[c] = f + 1
            self._buckets.setdefault(f + 1, OrderedDict())[c] = None
            return True
        return c in self._static


@dataclass(frozen=True)
class HitStats:
    requests: int
    hits: int
    hit_probability: float
    stderr: float
    warmup_requests_excluded: int

    def row(self, policy, M, N, alpha) -> list:
        return [str(Policy(policy).value), M, N, alpha, repr(self.hit_probability), repr(self.stderr), self.requests]


HIT_STATS_COLUMNS = ["policy", "M", "N", "alpha", "hit_prob", "stderr", "requests"]


def write_hit_stats(path, rows) -> None:
    """Write ``(policy, M, N, alpha, HitStats)`` tuples as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HIT_STATS_COLUMNS)
        for policy, M, N, alpha, stats in rows:
            w.writerow(stats.row(policy, M, N, alpha))


def default_warmup(num_events: int, M: int) -> int:
    return max(num_events // 10, 10 * M)


def batch_means(hits: np.ndarray, num_batches: int = NUM_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error of a 0/1 hit sequence."""
    n = len(hits)
    mean = float(hits.mean()) if n else math.nan
    if n < num_batches:
        return mean, math.nan
    batches = np.array([b.mean() for b in np.array_split(hits, num_batches)])
    return mean, float(batches.std(ddof=1) / math.sqrt(num_batches))


def _chunks(events):
    if isinstance(events, Trace):
        yield events
    elif isinstance(events, (IrmStream, SnmStream)):
        yield from events.chunks()
    else:
        yield Trace.from_events(events)


def process_trace(cache: CacheState, events, warmup: int | None = None) -> HitStats:
    """Replay ``events`` through ``cache`` and measure the hit probability.

    Every request is served (updating dynamic policy state), but the first
    ``warmup`` requests are left out of the statistics.  ``warmup=None``
    selects the default ``max(10% of events, 10 * M)``.  The standard error
    comes from batch means over 20 equal windows of the measured part.
    """
    hit_bits = []
    N = cache.catalog_size
    for chunk in _chunks(events):
        contents = chunk.content
        if len(contents) == 0:
            continue
        if contents.min() < 0 or (N is not None and contents.max() >= N):
            bad = contents[(contents < 0) | (contents >= (N if N is not None else np.inf))][0]
            raise TraceCorruptionError(f"content id {int(bad)} outside catalog of size {N}")
        if cache.policy in (Policy.STATIC, Policy.ORACLE_STATIC):
            stored = np.fromiter(cache.stored, np.int64, len(cache.stored))
            hit_bits.append(np.isin(contents, stored))
        else:
            req = cache.request
            hit_bits.append(np.fromiter((req(c) for c in contents.tolist()), bool, len(contents)))
    hits = np.concatenate(hit_bits) if hit_bits else np.zeros(0, bool)
    n = len(hits)
    if warmup is None:
        warmup = default_warmup(n, cache.capacity_M)
        if warmup >= n:
            warmup = n // 10
    if warmup < 0 or (n and warmup >= n):
        raise InvalidParameterError(f"warmup {warmup} must be smaller than the number of events {n}")
    measured = hits[warmup:]
    mean, se = batch_means(measured.astype(np.float64))
    return HitStats(int(len(measured)), int(measured.sum()), mean, se, int(warmup))


def static_place(pop_estimate, M: int) -> frozenset[int]:
    """Ids of the M largest estimates; ties go to the lower id."""
    est = np.asarray(pop_estimate, dtype=np.float64)
    if M < 0:
        raise InvalidParameterError("M must be nonnegative")
    order = np.argsort(-est, kind="stable")
    return frozenset(int(i) for i in order[: int(M)])


def oracle_static_hit(pop, M: int) -> float:
    """IRM-optimal static hit probability (the top-M popularity mass)."""
    return top_m_mass(pop, M)


def refreshed_static_hits(trace: Trace, M: int, refresh_interval: float, estimate_window: float | None = None,
                          horizon: float | None = None, start: float = 0.0) -> np.ndarray:
    """Hit indicators of a STATIC cache refreshed every ``refresh_interval``.

    At each refresh time the cache is set to the top-M contents by request
    count over the preceding ``estimate_window`` seconds (default: one
    refresh interval), and it serves requests until the next refresh.
    Requests in the first interval (no estimate yet) are excluded; the
    returned array covers the remaining requests in trace order.
    """
    if refresh_interval <= 0:
        raise InvalidParameterError("refresh interval must be positive")
    window = refresh_interval if estimate_window is None else estimate_window
    t, c = trace.time, trace.content
    if len(t) == 0:
        return np.zeros(0, bool)
    n_ids = int(c.max()) + 1
    end = float(t[-1]) if horizon is None else horizon
    out = []
    k = 1
    while start + k * refresh_interval < end:
        tk = start + k * refresh_interval
        lo, hi = np.searchsorted(t, [tk - window, tk])
        counts = np.bincount(c[lo:hi], minlength=n_ids)
        placed = np.array(sorted(static_place(counts, M)), np.int64)
        placed = placed[counts[placed] > 0]
        nlo, nhi = np.searchsorted(t, [tk, tk + refresh_interval])
        out.append(np.isin(c[nlo:nhi], placed))
        k += 1
    return np.concatenate(out) if out else np.zeros(0, bool)
