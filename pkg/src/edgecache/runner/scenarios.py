"""Scenario registry: parameters, sweep axes, output columns, and the
function evaluating one sweep point for one replication seed."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

from .. import coded_caching, experiments, geometry, placement, popularity
from ..traffic import SECONDS_PER_DAY, SnmClass
from .config import is_int, is_real

Check = Callable[[Any], "str | None"]


def _int_at_least(lo: int) -> Check:
    return lambda v: None if is_int(v) and v >= lo else f"must be an integer >= {lo}"


def _real_in(lo: float, hi: float, lo_open=False, hi_open=False) -> Check:
    def check(v):
        if not is_real(v):
            return "must be a finite real number"
        if (v <= lo if lo_open else v < lo) or (v >= hi if hi_open else v > hi):
            return f"must lie in {'(' if lo_open else '['}{lo}, {hi}{')' if hi_open else ']'}"
        return None
    return check


def _positive(v):
    return None if is_real(v) and v > 0 else "must be a positive real number"


def _alpha(v):
    return None if is_real(v) and v >= 0 else "Zipf exponent alpha must be finite and nonnegative"


def _bool(v):
    return None if isinstance(v, bool) else "must be true or false"


def _classes(v):
    if not isinstance(v, list) or not v:
        return "must be a nonempty list of [lifespan_days, volume, probability]"
    for c in v:
        if not (isinstance(c, list) and len(c) == 3 and all(is_real(x) for x in c)):
            return "each class must be [lifespan_days, volume, probability]"
        if c[0] <= 0 or c[1] < 0 or c[2] < 0:
            return "lifespans must be positive, volumes and probabilities nonnegative"
    if not math.isclose(sum(c[2] for c in v), 1.0, abs_tol=1e-9):
        return "class probabilities must sum to 1"
    return None


def _size_table(v):
    if not isinstance(v, dict) or not v:
        return "must be a table of name = size"
    for name, size in v.items():
        try:
            if popularity.parse_size(size) <= 0:
                return f"size of {name!r} must be positive"
        except ValueError:
            return f"cannot parse size {size!r} of {name!r}"
    return None


def _fading(v):
    return None if v in ("rayleigh", "none") else "must be 'rayleigh' or 'none'"


@dataclass(frozen=True)
class Param:
    default: Any
    check: Check
    doc: str


@dataclass(frozen=True)
class Scenario:
    name: str
    title: str
    params: dict[str, Param]
    axes: dict[str, Param]
    columns: list[tuple[str, str]]  # (output column, aggregated key)
    point: Callable[[dict, dict, int], dict]
    stochastic: bool = True
    cross_check: Callable[[dict, list[dict]], list[str]] = field(default=lambda p, pts: [])

    def describe(self) -> str:
        """Human-readable summary generated from the runtime schema."""
        lines = [f"{self.name}: {self.title}", "", "parameters:"]
        for k, p in self.params.items():
            lines.append(f"  {k} = {_toml(p.default)}  -- {p.doc}")
        lines.append("sweep axes (cartesian product, first axis outermost):")
        for k, p in self.axes.items():
            lines.append(f"  {k} = {_toml(p.default)}  -- {p.doc}")
        lines.append("output columns (in order):")
        for out, _ in self.columns:
            lines.append(f"  {out}")
        lines.append(f"stochastic: {'yes (mean over replications, stderr reported)' if self.stochastic else 'no'}")
        return "\n".join(lines) + "\n"


def _toml(v) -> str:
    """Render a default value the way it would be written in a config."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{_toml(k)} = {_toml(x)}" for k, x in v.items()) + " }"
    return repr(v)


def _classes_from(days_classes) -> tuple[SnmClass, ...]:
    return tuple(SnmClass(d * SECONDS_PER_DAY, v, p) for d, v, p in days_classes)


# ---------------------------------------------------------------------------
# coded_scaling


def _coded_point(params, pt, seed):
    K, m = pt["K"], params["m"]
    row = {"resource_blocks": coded_caching.resource_blocks(K, float(m)), "unicast": float(K), "scheme_load": ""}
    if params["scheme_check"]:
        N = params["num_files"]
        frac = Fraction(m).limit_denominator(10**6)
        scheme = coded_caching.place(K, frac * N, N, params["file_bytes"], seed=seed,
                                     memory_sharing=params["memory_share"])
        demands = [k % N for k in range(K)]
        sched = coded_caching.deliver(scheme, demands)
        scheds = sched if isinstance(sched, tuple) else (sched,)
        sent = sum(s.transmitted_bytes for s in scheds)
        for k in range(K):
            if coded_caching.decode(scheme, sched, k) != scheme.file(demands[k]):
                raise RuntimeError(f"coded delivery failed to decode for user {k} at K={K}")
        row["scheme_load"] = sent / params["file_bytes"]
    return row


def _coded_cross(params, points):
    out = []
    m = params.get("m")
    if params.get("memory_share") is False and is_real(m):
        frac = Fraction(m).limit_denominator(10**6)
        bad = [p["K"] for p in points if is_int(p.get("K")) and (p["K"] * frac).denominator != 1]
        if bad:
            out.append(
                f"params.memory_share: t = K*m must be an integer when memory_share = false "
                f"(m = {m}; violated at K = {bad[:5]}{'...' if len(bad) > 5 else ''})"
            )
    if params.get("scheme_check") is True:
        big = [p["K"] for p in points if is_int(p.get("K")) and p["K"] > 12]
        if big:
            out.append(f"sweep.K: scheme_check materializes subfiles and is limited to K <= 12 (got {max(big)})")
    return out


CODED = Scenario(
    "coded_scaling",
    "coded-caching resource blocks versus number of users at a fixed cache fraction, with the unicast baseline",
    {
        "m": Param(0.3, _real_in(0, 1), "cache fraction M/N"),
        "memory_share": Param(True, _bool, "allow non-integer t = K*m via memory sharing"),
        "scheme_check": Param(False, _bool, "also run placement/delivery/decoding and report the measured load"),
        "num_files": Param(2, _int_at_least(1), "files in the catalog when scheme_check is on"),
        "file_bytes": Param(240, _int_at_least(1), "file size in bytes when scheme_check is on"),
    },
    {"K": Param("1:100:1", _int_at_least(1), "number of users")},
    [("K", "K"), ("m", "m"), ("resource_blocks", "resource_blocks"), ("unicast", "unicast"),
     ("scheme_load", "scheme_load")],
    _coded_point,
    stochastic=False,
    cross_check=_coded_cross,
)


# ---------------------------------------------------------------------------
# cache_sizing


def _sizing_point(params, pt, seed):
    mem, cat = pt["memory"], pt["catalog"]
    ms = popularity.parse_size(params["memories"][mem])
    cs = popularity.parse_size(params["catalogs"][cat])
    ratio = popularity.normalized_cache_ratio(ms, cs)
    return {"memory_bytes": ms, "catalog_bytes": cs, "normalized_ratio": ratio, "percent": 100.0 * ratio}


def _sizing_cross(params, points):
    out = []
    for p in points:
        if isinstance(params.get("memories"), dict) and p.get("memory") not in params["memories"]:
            out.append(f"sweep.memory: {p.get('memory')!r} is not in params.memories")
        if isinstance(params.get("catalogs"), dict) and p.get("catalog") not in params["catalogs"]:
            out.append(f"sweep.catalog: {p.get('catalog')!r} is not in params.catalogs")
    return sorted(set(out))


def _str(v):
    return None if isinstance(v, str) else "must be a string"


SIZING = Scenario(
    "cache_sizing",
    "normalized cache size M/N for memory technologies versus application catalogs",
    {
        "memories": Param(dict(popularity.TABLE_I_MEMORIES), _size_table, "memory name = size (e.g. '2TB')"),
        "catalogs": Param(dict(popularity.TABLE_I_CATALOGS), _size_table, "catalog name = size"),
    },
    {
        "memory": Param(list(popularity.TABLE_I_MEMORIES), _str, "memory technology (key of params.memories)"),
        "catalog": Param(list(popularity.TABLE_I_CATALOGS), _str, "catalog (key of params.catalogs)"),
    },
    [("memory", "memory"), ("catalog", "catalog"), ("memory_bytes", "memory_bytes"),
     ("catalog_bytes", "catalog_bytes"), ("normalized_ratio", "normalized_ratio"), ("percent", "percent")],
    _sizing_point,
    stochastic=False,
    cross_check=_sizing_cross,
)


# ---------------------------------------------------------------------------
# irm_vs_snm


def _fit_point(params, pt, seed):
    r = experiments.irm_vs_snm(
        M=pt["M"],
        horizon=params["horizon_days"] * SECONDS_PER_DAY,
        content_arrival_rate=params["content_arrivals_per_day"] / SECONDS_PER_DAY,
        classes=_classes_from(params["classes"]),
        seed=seed,
    )
    return {
        "measured": r.measured, "measured_stderr": r.measured_stderr, "irm_prediction": r.irm_prediction, "snm_prediction": r.snm_prediction,
        "irm_error": r.irm_error, "snm_error": r.snm_error,
    }


FIT = Scenario(
    "irm_vs_snm",
    "LRU hit probability on SNM traffic versus predictions of fitted IRM and SNM models",
    {
        "horizon_days": Param(30.0, _positive, "trace length in days"),
        "content_arrivals_per_day": Param(200.0, _positive, "new contents per day"),
        "classes": Param([[c.lifespan / SECONDS_PER_DAY, c.total_volume, c.probability]
                          for c in experiments.DEFAULT_FIT_CLASSES], _classes,
                         "[lifespan_days, expected requests, probability] per class"),
    },
    {"M": Param([10, 50, 200], _int_at_least(0), "LRU cache size (contents)")},
    [("M", "M"), ("measured", "measured"), ("measured_stderr", "measured_stderr"),
     ("irm_prediction", "irm_prediction"), ("snm_prediction", "snm_prediction"),
     ("irm_error", "irm_error"), ("snm_error", "snm_error"), ("replications", "replications")],
    _fit_point,
)


# ---------------------------------------------------------------------------
# global_vs_local


def _learning_point(params, pt, seed):
    r = experiments.global_vs_local(
        L=pt["L"],
        M=params["M"],
        window=params["window_days"] * SECONDS_PER_DAY,
        horizon=params["horizon_days"] * SECONDS_PER_DAY,
        content_arrival_rate=params["content_arrivals_per_day"] / SECONDS_PER_DAY,
        classes=_classes_from(params["classes"]),
        per_location_rate=params["per_location_rate"],
        detection_threshold=params["detection_threshold"],
        seed=seed,
    )
    return {
        "global_hit": r.global_hit, "local_hit": r.local_hit, "global_delay": r.global_delay,
        "local_delay": r.local_delay, "delay_ratio": r.delay_ratio,
        "global_wins": float(r.global_hit > r.local_hit),
    }


def _learning_cross(params, points):
    w, h = params.get("window_days"), params.get("horizon_days")
    if is_real(w) and is_real(h) and w > 0 and h < 2 * w:
        return ["params.horizon_days: must cover at least two refresh windows"]
    return []


LEARNING = Scenario(
    "global_vs_local",
    "popularity learning on the aggregate stream of L caches versus at each cache, with periodic STATIC refresh",
    {
        "M": Param(50, _int_at_least(0), "cache size per location"),
        "window_days": Param(1.0, _positive, "estimation window and refresh period"),
        "horizon_days": Param(28.0, _positive, "trace length in days"),
        "content_arrivals_per_day": Param(700.0, _positive, "new contents per day"),
        "per_location_rate": Param(0.1, _positive, "mean requests per content per day at one location"),
        "detection_threshold": Param(3, _int_at_least(1), "requests needed to detect a new content"),
        "classes": Param([[c.lifespan / SECONDS_PER_DAY, c.total_volume, c.probability]
                          for c in experiments.DEFAULT_LEARNING_CLASSES], _classes,
                         "[lifespan_days, relative volume, probability] per class (rescaled to the target rate)"),
    },
    {"L": Param([10], _int_at_least(1), "number of locations")},
    [("L", "L"), ("global_hit", "global_hit"), ("global_hit_stderr", "global_hit_stderr"),
     ("local_hit", "local_hit"), ("local_hit_stderr", "local_hit_stderr"),
     ("global_delay_windows", "global_delay"), ("local_delay_windows", "local_delay"),
     ("delay_ratio", "delay_ratio"), ("global_win_fraction", "global_wins"), ("replications", "replications")],
    _learning_point,
    cross_check=_learning_cross,
)


# ---------------------------------------------------------------------------
# ppp_deployment


def _ppp_point(params, pt, seed):
    side = params["window_m"]
    window = geometry.Window(side, side)
    dep = geometry.make_deployment(window, pt["lambda_b"], params["user_intensity"], seed=seed)
    radio = geometry.RadioParams(params["transmit_power"], params["path_loss_exponent"], params["fading"],
                                 params["noise_power"], pt["theta"])
    pop = popularity.zipf_pmf(pt["alpha"], params["N"])
    r = geometry.simulate_deployment(dep, radio, pop, pt["M"], params["num_trials"], seed=seed)
    return {
        "outage": r.outage_probability, "outage_stderr": r.outage_stderr,
        "avg_rate": r.avg_delivery_rate, "cache_hit_rate": r.cache_hit_rate,
    }


def _ppp_cross(params, points):
    N = params.get("N")
    if is_int(N):
        bad = sorted({p["M"] for p in points if is_int(p.get("M")) and p["M"] > N})
        if bad:
            return [f"sweep.M: cache sizes {bad} exceed the catalog size N = {N}"]
    return []


PPP = Scenario(
    "ppp_deployment",
    "outage probability and delivery rate of cache-enabled base stations on a Poisson point process",
    {
        "window_m": Param(1000.0, _positive, "side of the square window in meters (toroidal)"),
        "user_intensity": Param(1e-4, _real_in(0, math.inf), "users per square meter (snapshot only)"),
        "transmit_power": Param(1.0, _positive, "watts"),
        "path_loss_exponent": Param(4.0, _real_in(2, math.inf, lo_open=True), "path-loss exponent (> 2)"),
        "fading": Param("rayleigh", _fading, "'rayleigh' or 'none'"),
        "noise_power": Param(0.0, _real_in(0, math.inf), "watts"),
        "N": Param(1000, _int_at_least(1), "catalog size"),
        "num_trials": Param(20000, _int_at_least(1), "typical-user trials per replication"),
    },
    {
        "lambda_b": Param([1e-5, 5e-5], _positive, "base stations per square meter"),
        "M": Param([0, 10, 100, 1000], _int_at_least(0), "cache size per base station"),
        "alpha": Param([0.5, 0.8, 1.2], _alpha, "Zipf exponent"),
        "theta": Param([1.0], _positive, "target SINR (linear)"),
    },
    [("lambda_b", "lambda_b"), ("M", "M"), ("alpha", "alpha"), ("theta", "theta"),
     ("outage", "outage"), ("avg_rate", "avg_rate"), ("stderr", "outage_stderr")],
    _ppp_point,
    cross_check=_ppp_cross,
)


# ---------------------------------------------------------------------------
# cooperative_gain


def _coop_point(params, pt, seed):
    pop = popularity.zipf_pmf(params["alpha"], params["N"]).probabilities
    g = placement.random_geometric_graph(params["num_users"], params["num_caches"], pt["radius"],
                                         pt["capacity"], pop, seed=seed)
    pl = placement.greedy_place(g)
    value = placement.objective(g, pl)
    M = min(pt["capacity"], params["N"])
    return {
        "objective": value,
        "isolated_hit": popularity.top_m_mass(pop, M),
        "effective_gain": placement.effective_cache_gain(g, pl),
        "mean_reachable": float(g.adjacency.sum(axis=1).mean()),
    }


COOP = Scenario(
    "cooperative_gain",
    "greedy cooperative placement on random geometric access graphs and its effective cache-size gain",
    {
        "num_users": Param(200, _int_at_least(1), "users in the unit square"),
        "num_caches": Param(20, _int_at_least(1), "caches in the unit square"),
        "N": Param(500, _int_at_least(1), "catalog size"),
        "alpha": Param(0.8, _alpha, "Zipf exponent of the shared popularity"),
    },
    {
        "radius": Param([0.15, 0.2, 0.25], _positive, "access radius (unit-square coordinates)"),
        "capacity": Param([5, 20], _int_at_least(1), "capacity of every cache"),
    },
    [("radius", "radius"), ("capacity", "capacity"), ("mean_reachable", "mean_reachable"),
     ("objective", "objective"), ("objective_stderr", "objective_stderr"), ("isolated_hit", "isolated_hit"),
     ("effective_gain", "effective_gain"), ("effective_gain_stderr", "effective_gain_stderr"),
     ("replications", "replications")],
    _coop_point,
)


SCENARIOS: dict[str, Scenario] = {s.name: s for s in (FIT, LEARNING, CODED, SIZING, PPP, COOP)}
