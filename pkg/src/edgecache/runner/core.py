"""Validation, execution, aggregation and atomic output of scenarios."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import platform
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..rng import replication_seed
from .config import ConfigError, ScenarioConfig, is_int, load_config, parse_axis
from .scenarios import SCENARIOS, Scenario

OUT_ENV = "EDGECACHE_OUT"


class ValidationError(Exception):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class ScenarioRuntimeError(Exception):
    def __init__(self, message: str, partial_path: Path | None):
        super().__init__(message)
        self.partial_path = partial_path


@dataclass
class ResultTable:
    schema: list[str]
    rows: list[list[str]]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.schema)
        w.writerows(self.rows)
        return buf.getvalue()


def resolve(cfg: ScenarioConfig) -> tuple[Scenario | None, dict, list[dict], list[str]]:
    """Check a config against its scenario; returns the scenario, merged
    params, expanded sweep points and a list of violations."""
    violations = []
    scen = SCENARIOS.get(cfg.scenario)
    if scen is None:
        violations.append(f"scenario: unknown scenario {cfg.scenario!r} (known: {', '.join(SCENARIOS)})")
        return None, {}, [], violations
    if not is_int(cfg.replications) or cfg.replications < 1:
        violations.append(f"replications: must be an integer >= 1, got {cfg.replications!r}")
    if not is_int(cfg.base_seed) or cfg.base_seed < 0:
        violations.append(f"base_seed: must be a nonnegative integer, got {cfg.base_seed!r}")
    params = {}
    for key in cfg.params:
        if key not in scen.params:
            violations.append(f"params.{key}: unknown parameter for {scen.name}")
    for key, spec in scen.params.items():
        value = cfg.params.get(key, spec.default)
        msg = spec.check(value)
        if msg:
            violations.append(f"params.{key}: {msg} (got {value!r})")
        params[key] = value
    axes = {}
    for key in cfg.sweep:
        if key not in scen.axes:
            violations.append(f"sweep.{key}: unknown sweep axis for {scen.name}")
    for key, spec in scen.axes.items():
        try:
            values = parse_axis(cfg.sweep.get(key, spec.default))
        except ValueError as exc:
            violations.append(f"sweep.{key}: {exc}")
            values = []
        if not values:
            violations.append(f"sweep.{key}: axis has no points")
        for v in values:
            msg = spec.check(v)
            if msg:
                violations.append(f"sweep.{key}: {msg} (got {v!r})")
                break
        axes[key] = values
    points = [dict(zip(axes, combo)) for combo in itertools.product(*axes.values())]
    if not violations:
        violations.extend(scen.cross_check(params, points))
    return scen, params, points, violations


def validate_config(path) -> list[str]:
    """Dry-run check of a config file; returns the list of violations
    (empty when the config is valid).  Raises ``ConfigError`` when the file
    cannot be read or parsed."""
    return resolve(load_config(path))[3]


def _evaluate(task):
    name, params, point, seed = task
    return SCENARIOS[name].point(params, point, seed)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _aggregate(scen: Scenario, point: dict, reps: list[dict]) -> dict:
    out = dict(point)
    out["replications"] = len(reps)
    for key in reps[0]:
        vals = [r[key] for r in reps]
        if key.endswith("_stderr") or isinstance(vals[0], str):
            out.setdefault(key, vals[0])
            continue
        arr = [float(v) for v in vals]
        out[key] = math.fsum(arr) / len(arr)
        if len(arr) > 1:
            mean = out[key]
            var = math.fsum((x - mean) ** 2 for x in arr) / (len(arr) - 1)
            out[f"{key}_stderr"] = math.sqrt(var / len(arr)) if math.isfinite(var) else math.nan
        else:
            out.setdefault(f"{key}_stderr", reps[0].get(f"{key}_stderr", math.nan))
    return out


def _row(scen: Scenario, params: dict, agg: dict) -> list[str]:
    merged = {**params, **agg}
    return [_fmt(merged.get(src, "")) for _, src in scen.columns]


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "results"))


def run_config(cfg: ScenarioConfig, out_dir=None, jobs: int = 1, seed: int | None = None,
               write: bool = True) -> ResultTable:
    """Run every (sweep point, replication) pair and write
    ``<out>/<scenario>.csv`` plus ``<scenario>.meta.json``.

    Replication i uses seed ``base_seed + i``.  Results are aggregated in
    sweep order regardless of the order in which parallel jobs finish.
    """
    if seed is not None:
        cfg = ScenarioConfig(cfg.scenario, cfg.replications, seed, cfg.params, cfg.sweep, cfg.source)
    scen, params, points, violations = resolve(cfg)
    if violations:
        raise ValidationError(violations)
    out_dir = Path(out_dir) if out_dir is not None else default_out_dir()
    seeds = [replication_seed(cfg.base_seed, i) for i in range(cfg.replications)]
    tasks = [(scen.name, params, pt, s) for pt in points for s in seeds]
    csv_path = out_dir / f"{scen.name}.csv"
    t0 = time.time()
    results: list[dict | None] = [None] * len(tasks)
    rows: list[list[str]] = []
    R = len(seeds)

    def flush_rows(upto_point: int):
        while len(rows) < upto_point:
            i = len(rows)
            reps = results[i * R:(i + 1) * R]
            rows.append(_row(scen, params, _aggregate(scen, points[i], reps)))

    try:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for i, res in enumerate(pool.map(_evaluate, tasks)):
                    results[i] = res
                    if (i + 1) % R == 0:
                        flush_rows((i + 1) // R)
        else:
            for i, task in enumerate(tasks):
                results[i] = _evaluate(task)
                if (i + 1) % R == 0:
                    flush_rows((i + 1) // R)
    except Exception as exc:
        partial = None
        if write:
            partial = csv_path.with_name(csv_path.name + ".partial")
            _atomic_write(partial, ResultTable([c for c, _ in scen.columns], rows).to_csv())
        raise ScenarioRuntimeError(f"{scen.name}: {type(exc).__name__}: {exc}", partial) from exc

    table = ResultTable(
        [c for c, _ in scen.columns],
        rows,
        {
            "scenario": scen.name,
            "base_seed": cfg.base_seed,
            "replication_seeds": seeds,
            "replications": cfg.replications,
            "params": params,
            "points": points,
            "config": cfg.source,
            "toolkit_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "wall_clock_seconds": round(time.time() - t0, 3),
        },
    )
    if write:
        _atomic_write(csv_path, table.to_csv())
        _atomic_write(out_dir / f"{scen.name}.meta.json", json.dumps(table.metadata, indent=2, default=str) + "\n")
    return table


def run_scenario(path, out_dir=None, jobs: int = 1, seed: int | None = None) -> ResultTable:
    """Load, validate and run the scenario config at ``path``."""
    return run_config(load_config(path), out_dir, jobs, seed)


__all__ = [
    "ConfigError",
    "ResultTable",
    "ScenarioRuntimeError",
    "ValidationError",
    "default_out_dir",
    "resolve",
    "run_config",
    "run_scenario",
    "validate_config",
]
