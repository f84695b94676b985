"""Request-stream generators: IRM, the Shot Noise Model, and stream splitting.

Streams are produced lazily in fixed-size chunks so that long horizons never
need to be materialized.  Each chunk is a columnar :class:`Trace`; iterating
over a stream yields :class:`RequestEvent` tuples one at a time.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import InvalidParameterError
from .popularity import ZipfPopularity
from .rng import make_rng

SECONDS_PER_DAY = 86400.0
NO_USER = -1

__all__ = [
    "SECONDS_PER_DAY",
    "RequestEvent",
    "Trace",
    "IrmConfig",
    "SnmClass",
    "SnmConfig",
    "ShotNoiseContent",
    "IrmStream",
    "SnmStream",
    "generate_irm",
    "generate_snm",
    "split_stream",
    "scale_to_sparse_regime",
    "per_content_daily_rate",
    "write_trace",
    "read_trace",
]


class RequestEvent(NamedTuple):
    time: float
    content_id: int
    location_id: int = 0
    user_id: int = NO_USER


@dataclass
class Trace:
    """Columnar, time-sorted block of request events."""

    time: np.ndarray
    content: np.ndarray
    location: np.ndarray = None
    user: np.ndarray = None

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=np.float64)
        self.content = np.asarray(self.content, dtype=np.int64)
        n = len(self.time)
        if len(self.content) != n:
            raise InvalidParameterError("time and content columns differ in length")
        self.location = np.zeros(n, np.int64) if self.location is None else np.asarray(self.location, np.int64)
        self.user = np.full(n, NO_USER, np.int64) if self.user is None else np.asarray(self.user, np.int64)

    def __len__(self) -> int:
        return len(self.time)

    def __iter__(self) -> Iterator[RequestEvent]:
        for t, c, l, u in zip(self.time.tolist(), self.content.tolist(), self.location.tolist(), self.user.tolist()):
            yield RequestEvent(t, c, l, u)

    def take(self, mask) -> "Trace":
        return Trace(self.time[mask], self.content[mask], self.location[mask], self.user[mask])

    @classmethod
    def empty(cls) -> "Trace":
        return cls(np.empty(0), np.empty(0, np.int64))

    @classmethod
    def concat(cls, parts: Iterable["Trace"]) -> "Trace":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.time for p in parts]),
            np.concatenate([p.content for p in parts]),
            np.concatenate([p.location for p in parts]),
            np.concatenate([p.user for p in parts]),
        )

    @classmethod
    def from_events(cls, events: Iterable) -> "Trace":
        if isinstance(events, Trace):
            return events
        if isinstance(events, (IrmStream, SnmStream)):
            return events.materialize()
        rows = [RequestEvent(*e) if not isinstance(e, RequestEvent) else e for e in events]
        if not rows:
            return cls.empty()
        t, c, l, u = zip(*rows)
        return cls(np.array(t, float), np.array(c, np.int64), np.array(l, np.int64), np.array(u, np.int64))

    def equals(self, other: "Trace") -> bool:
        return (
            np.array_equal(self.time, other.time)
            and np.array_equal(self.content, other.content)
            and np.array_equal(self.location, other.location)
            and np.array_equal(self.user, other.user)
        )


# ---------------------------------------------------------------------------
# IRM


@dataclass(frozen=True)
class IrmConfig:
    """Independence Reference Model: a Poisson stream of total rate
    ``lambda_total`` (requests per second) with i.i.d. contents."""

    lambda_total: float
    popularity: ZipfPopularity
    horizon: float
    seed: int = 0
    num_users: int | None = None

    def __post_init__(self):
        if not (self.lambda_total > 0 and math.isfinite(self.lambda_total)):
            raise InvalidParameterError(f"lambda_total must be positive, got {self.lambda_total!r}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidParameterError(f"horizon must be positive, got {self.horizon!r}")
        if self.num_users is not None and self.num_users < 1:
            raise InvalidParameterError("num_users must be positive")

    @property
    def N(self) -> int:
        return self.popularity.N


class _Stream:
    chunk_size: int

    def chunks(self) -> Iterator[Trace]:
        raise NotImplementedError

    def __iter__(self) -> Iterator[RequestEvent]:
        for chunk in self.chunks():
            yield from chunk

    def materialize(self) -> Trace:
        return Trace.concat(self.chunks())


class IrmStream(_Stream):
    def __init__(self, cfg: IrmConfig, chunk_size: int = 1 << 16):
        self.cfg = cfg
        self.chunk_size = int(chunk_size)

    def chunks(self) -> Iterator[Trace]:
        cfg = self.cfg
        # separate streams per column, and a running sum seeded with t0, so
        # the output does not depend on the chunk size
        gap_rng, content_rng, user_rng = (make_rng(cfg.seed, stream=s) for s in (3, 4, 5))
        cdf = np.cumsum(cfg.popularity.probabilities)
        cdf[-1] = 1.0
        t0 = 0.0
        while True:
            gaps = gap_rng.exponential(1.0 / cfg.lambda_total, self.chunk_size)
            times = np.cumsum(np.concatenate(([t0], gaps)))[1:]
            u = content_rng.random(self.chunk_size)
            contents = np.searchsorted(cdf, u, side="right")
            users = user_rng.integers(cfg.num_users, size=self.chunk_size) if cfg.num_users else None
            keep = times <= cfg.horizon
            n = int(keep.sum())
            if n:
                yield Trace(times[:n], contents[:n], None, None if users is None else users[:n])
            if n < self.chunk_size:
                return
            t0 = float(times[-1])


def generate_irm(cfg: IrmConfig, chunk_size: int = 1 << 16) -> IrmStream:
    """Lazy IRM stream: homogeneous Poisson arrivals of rate ``lambda_total``
    on ``[0, horizon]``, each content drawn i.i.d. from the popularity law.

    Identical configs produce bit-identical streams for any chunk size.
    """
    return IrmStream(cfg, chunk_size)


# ---------------------------------------------------------------------------
# Shot Noise Model


@dataclass(frozen=True)
class SnmClass:
    lifespan: float  # seconds
    total_volume: float  # expected requests over the pulse
    probability: float

    def __post_init__(self):
        if not (self.lifespan > 0 and self.total_volume >= 0 and self.probability >= 0):
            raise InvalidParameterError(f"invalid SNM class {self!r}")


@dataclass(frozen=True)
class ShotNoiseContent:
    """One content's rectangular popularity pulse."""

    arrival_time: float
    lifespan: float
    total_volume: float
    content_class: int = 0
    shape: str = "rectangular"

    @property
    def end_time(self) -> float:
        return self.arrival_time + self.lifespan

    def rate(self, t: float) -> float:
        if self.arrival_time <= t <= self.end_time:
            return self.total_volume / self.lifespan
        return 0.0


@dataclass(frozen=True)
class SnmConfig:
    """Class-based Shot Noise Model.

    New contents appear as a Poisson process of rate ``content_arrival_rate``
    (per second); each picks a class and emits requests as a Poisson process
    with a rectangular rate over its lifespan.  With
    ``volume_lifespan_correlation`` the lifespan within a class is
    exponentially distributed around the class mean and the volume is
    proportional to it, so longer-lived contents are also more popular.
    With ``burn_in`` contents arriving before time 0 are generated too, so
    the request process is stationary on ``[0, horizon]``.
    """

    content_arrival_rate: float
    classes: tuple[SnmClass, ...]
    horizon: float
    seed: int = 0
    volume_lifespan_correlation: bool = False
    burn_in: bool = True

    def __post_init__(self):
        classes = tuple(c if isinstance(c, SnmClass) else SnmClass(*c) for c in self.classes)
        object.__setattr__(self, "classes", classes)
        if not classes:
            raise InvalidParameterError("SNM needs at least one content class")
        if not math.isclose(sum(c.probability for c in classes), 1.0, rel_tol=0, abs_tol=1e-9):
            raise InvalidParameterError("SNM class probabilities must sum to 1")
        if not (self.content_arrival_rate > 0 and self.horizon > 0):
            raise InvalidParameterError("content_arrival_rate and horizon must be positive")


@dataclass
class SnmContents:
    """Columnar realization of the content pulses (index = content id)."""

    arrival: np.ndarray
    lifespan: np.ndarray
    volume: np.ndarray
    content_class: np.ndarray

    def __len__(self) -> int:
        return len(self.arrival)

    def __getitem__(self, i) -> ShotNoiseContent:
        return ShotNoiseContent(
            float(self.arrival[i]), float(self.lifespan[i]), float(self.volume[i]), int(self.content_class[i])
        )

    @property
    def end(self) -> np.ndarray:
        return self.arrival + self.lifespan

    @classmethod
    def from_list(cls, contents: Sequence[ShotNoiseContent]) -> "SnmContents":
        return cls(
            np.array([c.arrival_time for c in contents], float),
            np.array([c.lifespan for c in contents], float),
            np.array([c.total_volume for c in contents], float),
            np.array([c.content_class for c in contents], np.int64),
        )


def _sample_contents(cfg: SnmConfig, rng: np.random.Generator) -> SnmContents:
    max_life = max(c.lifespan for c in cfg.classes)
    if cfg.volume_lifespan_correlation:
        max_life *= 20.0  # exponential lifespans; tail beyond 20 means is negligible
    start = -max_life if cfg.burn_in else 0.0
    span = cfg.horizon - start
    n = int(rng.poisson(cfg.content_arrival_rate * span))
    arrival = np.sort(start + rng.random(n) * span)
    probs = np.array([c.probability for c in cfg.classes])
    cls = rng.choice(len(probs), size=n, p=probs / probs.sum())
    base_life = np.array([c.lifespan for c in cfg.classes])[cls]
    base_vol = np.array([c.total_volume for c in cfg.classes])[cls]
    if cfg.volume_lifespan_correlation:
        life = rng.exponential(1.0, n) * base_life
        vol = base_vol * life / base_life
    else:
        life, vol = base_life, base_vol
    return SnmContents(arrival, life.astype(float), vol.astype(float), cls.astype(np.int64))


class SnmStream(_Stream):
    """Lazy SNM request stream, produced one time block at a time.

    Within each block a content contributes Poisson(rate x overlap) requests
    placed uniformly on its overlap with the block, which is exactly the
    restriction of its inhomogeneous Poisson process to that block.
    """

    def __init__(self, cfg: SnmConfig, contents: SnmContents, block_seconds: float):
        self.cfg = cfg
        self.contents = contents
        self.block_seconds = float(block_seconds)

    def chunks(self) -> Iterator[Trace]:
        c = self.contents
        rng = make_rng(self.cfg.seed, stream=1)
        if len(c) == 0:
            return
        rate = np.where(c.lifespan > 0, c.volume / c.lifespan, 0.0)
        start, end = c.arrival, c.end
        lo = 0.0
        horizon = self.cfg.horizon
        while lo < horizon:
            hi = min(lo + self.block_seconds, horizon)
            # contents whose pulse overlaps [lo, hi)
            first = np.searchsorted(start, hi, side="left")
            cand = np.arange(first)
            cand = cand[end[cand] > lo]
            ov_lo = np.maximum(start[cand], lo)
            ov_hi = np.minimum(end[cand], hi)
            width = np.maximum(ov_hi - ov_lo, 0.0)
            counts = rng.poisson(rate[cand] * width)
            total = int(counts.sum())
            if total:
                ids = np.repeat(cand, counts)
                times = np.repeat(ov_lo, counts) + rng.random(total) * np.repeat(width, counts)
                order = np.argsort(times, kind="stable")
                yield Trace(times[order], ids[order])
            lo = hi


def generate_snm(
    cfg: SnmConfig,
    contents: Sequence[ShotNoiseContent] | SnmContents | None = None,
    block_seconds: float = SECONDS_PER_DAY,
) -> SnmStream:
    """Shot Noise Model stream.

    Content pulses are sampled from ``cfg`` unless ``contents`` forces a
    specific set.  The realized pulses are available as ``stream.contents``;
    content ids index into it.
    """
    if contents is None:
        realized = _sample_contents(cfg, make_rng(cfg.seed, stream=0))
    elif isinstance(contents, SnmContents):
        realized = contents
    else:
        realized = SnmContents.from_list(sorted(contents, key=lambda c: c.arrival_time))
    return SnmStream(cfg, realized, block_seconds)


# ---------------------------------------------------------------------------
# Splitting and scaling


def split_stream(events, L: int, assignment: str = "uniform_random", seed: int = 0) -> list[Trace]:
    """Assign every event to one of ``L`` locations.

    Returns one trace per location with ``location`` set; the union of the
    outputs is the input multiset.
    """
    if isinstance(L, bool) or int(L) != L or L < 1:
        raise InvalidParameterError(f"number of locations must be a positive integer, got {L!r}")
    trace = Trace.from_events(events)
    n = len(trace)
    if assignment == "uniform_random":
        loc = make_rng(seed, stream=2).integers(L, size=n) if L > 1 else np.zeros(n, np.int64)
    elif assignment == "round_robin":
        loc = np.arange(n) % L
    else:
        raise InvalidParameterError(f"unknown assignment {assignment!r}")
    loc = loc.astype(np.int64)
    out = []
    for l in range(L):
        mask = loc == l
        out.append(Trace(trace.time[mask], trace.content[mask], loc[mask], trace.user[mask]))
    return out


def per_content_daily_rate(cfg) -> float:
    """Mean request rate per content per day.

    IRM: ``lambda_total / N``.  SNM: total request rate divided by the mean
    number of simultaneously active contents, ``E[volume] / E[lifespan]``.
    """
    if isinstance(cfg, IrmConfig):
        return cfg.lambda_total / cfg.N * SECONDS_PER_DAY
    if isinstance(cfg, SnmConfig):
        mean_vol = sum(c.probability * c.total_volume for c in cfg.classes)
        mean_life = sum(c.probability * c.lifespan for c in cfg.classes)
        return mean_vol / mean_life * SECONDS_PER_DAY
    raise InvalidParameterError(f"unsupported config type {type(cfg).__name__}")


def scale_to_sparse_regime(cfg, target_rate: float):
    """Rescale a config so each content receives ``target_rate`` requests
    per day on average (IRM: rescale lambda; SNM: rescale volumes)."""
    if not target_rate > 0:
        raise InvalidParameterError("target rate must be positive")
    current = per_content_daily_rate(cfg)
    factor = target_rate / current
    if math.isclose(factor, 1.0, rel_tol=1e-12):
        return cfg
    if isinstance(cfg, IrmConfig):
        return replace(cfg, lambda_total=cfg.N * target_rate / SECONDS_PER_DAY)
    classes = tuple(replace(c, total_volume=c.total_volume * factor) for c in cfg.classes)
    return replace(cfg, classes=classes)


# ---------------------------------------------------------------------------
# Trace files: ``time_seconds,content_id,location_id[,user_id]``


def write_trace(path, events) -> None:
    trace = Trace.from_events(events)
    with_users = bool(np.any(trace.user != NO_USER))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_seconds", "content_id", "location_id"] + (["user_id"] if with_users else []))
        for e in trace:
            row = [repr(e.time), e.content_id, e.location_id]
            if with_users:
                row.append(e.user_id)
            w.writerow(row)


def read_trace(path) -> Trace:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or header[:3] != ["time_seconds", "content_id", "location_id"]:
            raise InvalidParameterError(f"{path}: missing or malformed trace header")
        rows = [row for row in r if row]
    if not rows:
        return Trace.empty()
    cols = list(zip(*rows))
    user = np.array(cols[3], np.int64) if len(cols) > 3 else None
    return Trace(np.array(cols[0], float), np.array(cols[1], np.int64), np.array(cols[2], np.int64), user)
