"""Poisson point process deployments of cache-enabled base stations.

Monte-Carlo evaluation of a typical user: it attaches to the nearest base
station, asks for one content, and is served from that station's cache when
the content is stored there and the downlink SINR reaches the target.
Distances wrap around the window (torus) to remove edge effects.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDeploymentError, InvalidParameterError
from .popularity import ZipfPopularity
from .rng import make_rng

__all__ = [
    "Window",
    "RadioParams",
    "Deployment",
    "DeploymentResult",
    "sample_ppp",
    "make_deployment",
    "simulate_deployment",
    "poisson_gof_pvalue",
    "write_snapshot",
    "RESULT_COLUMNS",
    "write_results",
]


@dataclass(frozen=True)
class Window:
    width: float
    height: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise InvalidParameterError("window must have positive width and height")

    @property
    def area(self) -> float:
        return self.width * self.height

    def scaled(self, factor: float) -> "Window":
        return Window(self.width * factor, self.height * factor, self.x0, self.y0)


@dataclass(frozen=True)
class RadioParams:
    transmit_power: float = 1.0
    path_loss_exponent: float = 4.0
    fading: str = "rayleigh"
    noise_power: float = 0.0
    target_sinr: float = 1.0

    def __post_init__(self):
        if not self.path_loss_exponent > 2:
            raise InvalidParameterError("path-loss exponent must exceed 2")
        if not self.target_sinr > 0:
            raise InvalidParameterError("target SINR must be positive")
        if self.fading not in ("rayleigh", "none"):
            raise InvalidParameterError(f"unknown fading model {self.fading!r}")
        if self.transmit_power <= 0 or self.noise_power < 0:
            raise InvalidParameterError("transmit power must be positive and noise nonnegative")


def sample_ppp(intensity: float, window: Window, seed: int = 0, stream: int = 0) -> np.ndarray:
    """Homogeneous PPP on ``window``: Poisson(intensity * area) points,
    i.i.d. uniform given the count.  Returns an ``(n, 2)`` array."""
    if not (intensity >= 0 and math.isfinite(intensity)):
        raise InvalidParameterError(f"intensity must be finite and nonnegative, got {intensity!r}")
    rng = make_rng(seed, stream)
    n = int(rng.poisson(intensity * window.area))
    pts = rng.random((n, 2)) * (window.width, window.height)
    return pts + (window.x0, window.y0)


@dataclass
class Deployment:
    window: Window
    bs_intensity: float
    user_intensity: float
    bs_points: np.ndarray
    user_points: np.ndarray
    caches: list | None = field(default=None)  # per-BS stored sets; None = shared top-M


def make_deployment(window: Window, bs_intensity: float, user_intensity: float, seed: int = 0) -> Deployment:
    return Deployment(
        window,
        bs_intensity,
        user_intensity,
        sample_ppp(bs_intensity, window, seed, stream=20),
        sample_ppp(user_intensity, window, seed, stream=21),
    )


@dataclass(frozen=True)
class DeploymentResult:
    outage_probability: float
    avg_delivery_rate: float
    cache_hit_rate: float
    sinr_coverage: float
    outage_stderr: float
    rate_stderr: float
    hit_stderr: float
    num_trials: int


def _torus_dist(a: np.ndarray, b: np.ndarray, window: Window) -> np.ndarray:
    d = np.abs(a - b)
    d = np.minimum(d, np.array([window.width, window.height]) - d)
    return np.hypot(d[..., 0], d[..., 1])


def _se(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan


def simulate_deployment(d: Deployment, radio: RadioParams, pop: ZipfPopularity, M: int, num_trials: int,
                        seed: int = 0, resample: bool = True) -> DeploymentResult:
    """Monte-Carlo outage, delivery rate and cache hit rate of a typical user.

    With ``resample`` every trial draws a fresh base-station pattern of the
    deployment's intensity (spatial average); otherwise the stored snapshot
    is reused.  A request counts as delivered only when it hits the serving
    station's cache and the SINR is at least the target; delivered requests
    carry ``log2(1 + target)`` bit/s/Hz.
    """
    if num_trials < 1:
        raise InvalidParameterError("num_trials must be at least 1")
    N = pop.N
    if not 0 <= M <= N:
        raise InvalidParameterError(f"cache size M={M} must lie in [0, {N}]")
    w = d.window
    if resample:
        if d.bs_intensity * w.area <= 0:
            raise DegenerateDeploymentError("base-station intensity gives no stations in the window")
    elif len(d.bs_points) == 0:
        raise DegenerateDeploymentError("deployment has no base stations in the window")

    rng = make_rng(seed, stream=30)
    users = rng.random((num_trials, 2)) * (w.width, w.height) + (w.x0, w.y0)
    cdf = np.cumsum(pop.probabilities)
    cdf[-1] = 1.0
    requests = np.searchsorted(cdf, rng.random(num_trials), side="right")

    if resample:
        counts = rng.poisson(d.bs_intensity * w.area, num_trials)
        bs = rng.random((int(counts.sum()), 2)) * (w.width, w.height) + (w.x0, w.y0)
    else:
        counts = np.full(num_trials, len(d.bs_points))
        bs = np.tile(d.bs_points, (num_trials, 1))
    trial = np.repeat(np.arange(num_trials), counts)
    dist = np.maximum(_torus_dist(bs, users[trial], w), 1e-9)
    if radio.fading == "rayleigh":
        gain = rng.exponential(1.0, len(dist))
    else:
        gain = np.ones(len(dist))
    power = radio.transmit_power * gain * dist ** (-radio.path_loss_exponent)

    has_bs = counts > 0
    sinr = np.zeros(num_trials)
    serving = np.full(num_trials, -1)
    if len(dist):
        order = np.lexsort((dist, trial))
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        nearest = order[starts[has_bs]]
        total = np.bincount(trial, weights=power, minlength=num_trials)
        signal = power[nearest]
        interference = total[has_bs] - signal
        # a lone BS with zero noise has infinite SINR
        with np.errstate(divide="ignore"):
            sinr[has_bs] = signal / (radio.noise_power + np.maximum(interference, 0.0))
        serving[has_bs] = nearest - starts[has_bs]

    if d.caches is None or resample:
        hit = requests < M
    else:
        hit = np.array([s >= 0 and int(r) in d.caches[s] for s, r in zip(serving, requests)])
    hit &= has_bs
    covered = sinr >= radio.target_sinr
    success = covered & hit
    rate = success * math.log2(1.0 + radio.target_sinr)
    outage = 1.0 - success
    return DeploymentResult(
        float(outage.mean()),
        float(rate.mean()),
        float(hit.mean()),
        float(covered.mean()),
        _se(outage.astype(float)),
        _se(rate),
        _se(hit.astype(float)),
        num_trials,
    )


def poisson_gof_pvalue(counts, mean: float, min_expected: float = 5.0) -> float:
    """Chi-square goodness-of-fit p-value of observed counts against
    Poisson(mean); tail bins are merged until each expects ``min_expected``."""
    from scipy import stats

    counts = np.asarray(counts, dtype=np.int64)
    n = len(counts)
    kmax = int(max(counts.max(), stats.poisson.ppf(1 - 1e-12, mean)))
    pmf = stats.poisson.pmf(np.arange(kmax + 1), mean)
    pmf[-1] += stats.poisson.sf(kmax, mean)
    obs = np.bincount(counts, minlength=kmax + 1)[: kmax + 1].astype(float)
    exp = pmf * n
    # merge bins from both tails toward the mode
    edges = []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            edges.append([acc_o, acc_e])
            acc_o = acc_e = 0.0
    if acc_e > 0 and edges:
        edges[-1][0] += acc_o
        edges[-1][1] += acc_e
    o, e = np.array(edges).T
    return float(stats.chisquare(o, e).pvalue)


def write_snapshot(path, d: Deployment) -> None:
    """Deployment snapshot as CSV ``x,y,kind`` (kind is ``bs`` or ``user``)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "kind"])
        for kind, pts in (("bs", d.bs_points), ("user", d.user_points)):
            for x, y in pts:
                w.writerow([repr(float(x)), repr(float(y)), kind])


RESULT_COLUMNS = ["lambda_b", "M", "alpha", "theta", "outage", "avg_rate", "stderr"]


def write_results(path, rows) -> None:
    """Rows of ``(lambda_b, M, alpha, theta, DeploymentResult)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for lam, M, alpha, theta, res in rows:
            w.writerow([lam, M, alpha, theta, repr(res.outage_probability), repr(res.avg_delivery_rate),
                        repr(res.outage_stderr)])
