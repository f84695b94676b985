"""Composite experiments built from the traffic, cache and estimation modules.

``global_vs_local`` compares popularity learning on the aggregate request
stream of L caches against learning at each cache alone.  ``irm_vs_snm``
compares how well a fitted static (IRM) model and a fitted pulse (SNM)
model predict the LRU hit probability of time-varying traffic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cache_core import CacheState, Policy, batch_means, process_trace, static_place
from .errors import InvalidParameterError
from .estimation import WindowedEstimator
from .popularity import zipf_pmf
from .rng import make_rng
from .traffic import (
    SECONDS_PER_DAY,
    IrmConfig,
    ShotNoiseContent,
    SnmClass,
    SnmConfig,
    Trace,
    generate_irm,
    generate_snm,
    scale_to_sparse_regime,
    split_stream,
)

__all__ = [
    "LearningResult",
    "global_vs_local",
    "detection_delays",
    "top_m_entry_delays",
    "ModelFitResult",
    "irm_vs_snm",
    "fit_irm",
    "fit_snm",
    "DEFAULT_LEARNING_CLASSES",
    "DEFAULT_FIT_CLASSES",
]

DAY = SECONDS_PER_DAY

# (lifespan, global volume, probability): rare hot contents among many cold
# ones; rescaled to the target per-location rate before use.
DEFAULT_LEARNING_CLASSES = (
    SnmClass(7 * DAY, 100.0, 0.01),
    SnmClass(7 * DAY, 6.0, 0.99),
)


@dataclass(frozen=True)
class LearningResult:
    global_hit: float
    local_hit: float
    global_stderr: float
    local_stderr: float
    global_delay: float  # median detection delay, in windows
    local_delay: float
    num_new_hot: int
    requests: int

    @property
    def delay_ratio(self) -> float:
        return self.local_delay / self.global_delay


def _top_m(counts: np.ndarray, M: int) -> np.ndarray:
    placed = np.array(sorted(static_place(counts, M)), np.int64)
    return placed[counts[placed] > 0]


def _refresh_hits(events: Trace, estimate_from: Trace, n_ids: int, M: int, window: float,
                  start: float, horizon: float) -> np.ndarray:
    """Hit bits for ``events`` when the cache is refreshed at every window
    boundary with the top-M contents of ``estimate_from`` in the window that
    just ended.  The first window only trains."""
    out = []
    k = 1
    while start + k * window < horizon - 1e-9:
        tk = start + k * window
        lo, hi = np.searchsorted(estimate_from.time, [tk - window, tk])
        counts = np.bincount(estimate_from.content[lo:hi], minlength=n_ids)
        placed = _top_m(counts, M)
        nlo, nhi = np.searchsorted(events.time, [tk, tk + window])
        out.append(np.isin(events.content[nlo:nhi], placed))
        k += 1
    return np.concatenate(out) if out else np.zeros(0, bool)


def detection_delays(trace: Trace, arrivals: np.ndarray, contents: np.ndarray, threshold: int,
                     deadline: np.ndarray) -> np.ndarray:
    """Time from each content's arrival until ``trace`` holds ``threshold``
    requests for it; ``inf`` when that does not happen before ``deadline``."""
    out = np.full(len(contents), np.inf)
    order = np.argsort(trace.content, kind="stable")
    ids = trace.content[order]
    times = trace.time[order]
    lo = np.searchsorted(ids, contents, side="left")
    hi = np.searchsorted(ids, contents, side="right")
    for i, (a, b) in enumerate(zip(lo, hi)):
        if b - a >= threshold:
            t = times[a + threshold - 1]
            if t <= deadline[i]:
                out[i] = t - arrivals[i]
    return out


def top_m_entry_delays(trace: Trace, arrivals: np.ndarray, contents: np.ndarray, M: int, window: float,
                       num_contents: int, horizon: float, deadline: np.ndarray) -> np.ndarray:
    """Time from each content's arrival until the end of the first window
    whose count-based top-M estimate contains it; ``inf`` when that does not
    happen before ``deadline``."""
    out = np.full(len(contents), np.inf)
    pos = {int(c): i for i, c in enumerate(contents)}
    est = WindowedEstimator(window, num_contents)
    windows = est.feed(trace) + est.flush(horizon)
    for w in windows:
        for c in _top_m(w.counts, M).tolist():
            i = pos.get(c)
            if i is not None and out[i] == np.inf and w.end <= deadline[i]:
                out[i] = w.end - arrivals[i]
    return out


def global_vs_local(L: int = 10, M: int = 50, window: float = DAY, horizon: float = 28 * DAY,
                    content_arrival_rate: float = 700 / DAY, classes=DEFAULT_LEARNING_CLASSES,
                    per_location_rate: float = 0.1, detection_threshold: int = 3, seed: int = 0) -> LearningResult:
    """Global versus local popularity learning with periodic STATIC refresh.

    SNM traffic is rescaled so every location sees ``per_location_rate``
    requests per content per day on average, then split uniformly over the
    L locations.  Every ``window`` seconds each cache is refilled with the
    top-M contents of the window that just closed, counted either on its own
    requests (local) or on the requests of all locations (global).  The
    detection delay of a hot content arriving after the first window is the
    time until the estimator has seen ``detection_threshold`` of its
    requests; medians are reported in windows (``inf`` if most hot contents
    are never detected).
    """
    if L < 1 or M < 0:
        raise InvalidParameterError("need L >= 1 and M >= 0")
    cfg = SnmConfig(content_arrival_rate, tuple(classes), horizon, seed=seed)
    cfg = scale_to_sparse_regime(cfg, per_location_rate * L)
    stream = generate_snm(cfg)
    trace = stream.materialize()
    locs = split_stream(trace, L, "uniform_random", seed=seed)
    n_ids = len(stream.contents)
    merged = trace

    g_bits, l_bits = [], []
    for l in range(L):
        g_bits.append(_refresh_hits(locs[l], merged, n_ids, M, window, 0.0, horizon))
        l_bits.append(_refresh_hits(locs[l], locs[l], n_ids, M, window, 0.0, horizon))
    g = np.concatenate(g_bits).astype(float)
    lo = np.concatenate(l_bits).astype(float)
    g_hit, g_se = batch_means(g)
    l_hit, l_se = batch_means(lo)

    # detection delays for the hottest class, contents born inside the horizon
    c = stream.contents
    hot_class = int(np.argmax([k.total_volume / k.lifespan for k in cfg.classes]))
    hot = np.nonzero((c.content_class == hot_class) & (c.arrival >= window) & (c.end <= horizon))[0]
    arr = c.arrival[hot]
    dl = c.end[hot]
    gd = detection_delays(merged, arr, hot, detection_threshold, dl)
    # local: every location's own view, pooled
    ld = np.concatenate([detection_delays(locs[l], arr, hot, detection_threshold, dl) for l in range(L)])
    return LearningResult(
        g_hit, l_hit, g_se, l_se,
        float(np.median(gd) / window) if len(gd) else math.nan,
        float(np.median(ld) / window) if len(ld) else math.nan,
        int(len(hot)), int(len(trace)),
    )


# ---------------------------------------------------------------------------
# IRM vs SNM model fitting

DEFAULT_FIT_CLASSES = (
    SnmClass(2 * DAY, 40.0, 0.2),
    SnmClass(2 * DAY, 4.0, 0.8),
)


def fit_irm(trace: Trace, horizon: float, seed: int = 0) -> IrmConfig:
    """Best-fit IRM: empirical popularity over the whole trace, sorted by
    rank, with the observed total rate."""
    counts = np.bincount(trace.content)
    counts = np.sort(counts[counts > 0])[::-1].astype(float)
    pop = zipf_pmf(0.0, len(counts))
    pop = type(pop)(alpha=math.nan, probabilities=counts / counts.sum())
    return IrmConfig(len(trace) / horizon, pop, horizon, seed=seed)


def fit_snm(trace: Trace) -> list[ShotNoiseContent]:
    """Per-content rectangular pulses fitted from first/last request times.

    For k >= 2 requests spread uniformly over a pulse of length T, the span
    between the first and last request has mean T(k-1)/(k+1); inverting it
    gives the lifespan estimate, and the pulse is centred on the observed
    span.  Contents seen once get the median lifespan of the others.
    """
    order = np.lexsort((trace.time, trace.content))
    ids = trace.content[order]
    times = trace.time[order]
    uniq, first_idx, counts = np.unique(ids, return_index=True, return_counts=True)
    first = times[first_idx]
    last = times[first_idx + counts - 1]
    multi = counts >= 2
    life = np.full(len(uniq), np.nan)
    life[multi] = (last[multi] - first[multi]) * (counts[multi] + 1) / (counts[multi] - 1)
    fallback = float(np.median(life[multi])) if multi.any() else 1.0
    life = np.where(multi & (life > 0), life, fallback)
    centre = (first + last) / 2
    return [
        ShotNoiseContent(float(ce - lf / 2), float(lf), float(k))
        for ce, lf, k in zip(centre, life, counts)
    ]


@dataclass(frozen=True)
class ModelFitResult:
    measured: float
    irm_prediction: float
    snm_prediction: float
    measured_stderr: float

    @property
    def irm_error(self) -> float:
        return abs(self.irm_prediction - self.measured)

    @property
    def snm_error(self) -> float:
        return abs(self.snm_prediction - self.measured)


def irm_vs_snm(M: int = 50, horizon: float = 30 * DAY, content_arrival_rate: float = 200 / DAY,
               classes=DEFAULT_FIT_CLASSES, seed: int = 0) -> ModelFitResult:
    """LRU hit probability on ground-truth SNM traffic versus the values
    predicted by replaying LRU on traffic drawn from a fitted IRM model and
    from a fitted SNM model of the same trace."""
    cfg = SnmConfig(content_arrival_rate, tuple(classes), horizon, seed=seed)
    truth = generate_snm(cfg).materialize()
    warm = len(truth) // 10

    def lru(trace: Trace):
        return process_trace(CacheState(M, Policy.LRU), trace, warmup=min(warm, len(trace) - 1))

    measured = lru(truth)
    irm_cfg = fit_irm(truth, horizon, seed=seed + 1)
    irm_trace = generate_irm(irm_cfg).materialize()
    pulses = fit_snm(truth)
    snm_trace = generate_snm(SnmConfig(1.0, ((1.0, 1.0, 1.0),), horizon, seed=seed + 2), contents=pulses).materialize()
    return ModelFitResult(measured.hit_probability, lru(irm_trace).hit_probability,
                          lru(snm_trace).hit_probability, measured.stderr)
