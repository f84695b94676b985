"""Popularity estimation.

Two tools: windowed request counting at a single location or over the
aggregate of all locations, and low-rank factorization of the sparse
user x content popularity matrix by alternating least squares.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, InvalidRankError, NumericalFailureError
from .rng import make_rng
from .traffic import Trace

__all__ = [
    "PopularityMatrix",
    "FactorPair",
    "WindowEstimate",
    "WindowedEstimator",
    "windowed_estimate",
    "factorize",
    "als_objective",
    "predict_popularity",
    "LocationScores",
    "read_matrix",
    "write_matrix",
    "write_factors",
]


# ---------------------------------------------------------------------------
# Windowed counting


@dataclass(frozen=True)
class WindowEstimate:
    start: float
    end: float
    counts: np.ndarray
    estimate: np.ndarray
    stale: bool = False


class WindowedEstimator:
    """Counts requests in consecutive windows of ``window_length`` seconds.

    A ``local`` estimator only sees events of ``location_id``; a ``global``
    one sees every event.  At each window boundary it emits the normalized
    counts of the window that just closed; an empty window repeats the
    previous estimate with ``stale=True``.
    """

    def __init__(self, window_length: float, num_contents: int, level: str = "global",
                 location_id: int | None = None, start: float = 0.0):
        if not window_length > 0:
            raise InvalidParameterError("window length must be positive")
        if level not in ("local", "global"):
            raise InvalidParameterError(f"level must be 'local' or 'global', got {level!r}")
        if level == "local" and location_id is None:
            raise InvalidParameterError("a local estimator needs a location id")
        self.window_length = float(window_length)
        self.num_contents = int(num_contents)
        self.level = level
        self.location_id = location_id
        self.window_start = float(start)
        self.counts = np.zeros(self.num_contents, dtype=np.int64)
        self.last: WindowEstimate | None = None

    def _close(self) -> WindowEstimate:
        end = self.window_start + self.window_length
        total = self.counts.sum()
        if total > 0:
            est = WindowEstimate(self.window_start, end, self.counts, self.counts / total)
        else:
            prev = self.last.estimate if self.last is not None else np.zeros(self.num_contents)
            est = WindowEstimate(self.window_start, end, self.counts, prev, stale=True)
        self.last = est
        self.window_start = end
        self.counts = np.zeros(self.num_contents, dtype=np.int64)
        return est

    def feed(self, trace: Trace) -> list[WindowEstimate]:
        """Consume a time-sorted block of events; return the estimates of
        every window that closed before the block's last event."""
        if self.level == "local":
            trace = trace.take(trace.location == self.location_id)
        out = []
        t, c = trace.time, trace.content
        i = 0
        while i < len(t):
            end = self.window_start + self.window_length
            j = int(np.searchsorted(t, end, side="left"))
            if j > i:
                self.counts += np.bincount(c[i:j], minlength=self.num_contents)[: self.num_contents]
                i = j
            if i < len(t):
                out.append(self._close())
        return out

    def flush(self, until: float) -> list[WindowEstimate]:
        """Close every window ending at or before ``until``."""
        out = []
        while self.window_start + self.window_length <= until + 1e-9:
            out.append(self._close())
        return out


def windowed_estimate(events, window_length: float, level: str = "global", L: int = 1,
                      location_id: int | None = None, num_contents: int | None = None,
                      horizon: float | None = None) -> list[WindowEstimate]:
    """Estimates at every window boundary over the whole trace.

    ``events`` is a single trace whose ``location`` column holds ids in
    ``[0, L)``, or a list of ``L`` per-location traces which are merged.
    """
    if isinstance(events, (list, tuple)):
        trace = Trace.concat(events)
        order = np.argsort(trace.time, kind="stable")
        trace = trace.take(order)
    else:
        trace = Trace.from_events(events)
    if len(trace) and (trace.location.min() < 0 or trace.location.max() >= L):
        raise InvalidParameterError(f"location ids must lie in [0, {L})")
    N = num_contents if num_contents is not None else (int(trace.content.max()) + 1 if len(trace) else 1)
    est = WindowedEstimator(window_length, N, level, location_id)
    out = est.feed(trace)
    end = horizon if horizon is not None else (float(trace.time[-1]) if len(trace) else 0.0)
    out += est.flush(end)
    return out


# ---------------------------------------------------------------------------
# Low-rank factorization


@dataclass
class PopularityMatrix:
    """Sparse, partially observed user x content matrix."""

    num_users_K: int
    num_contents_N: int
    users: np.ndarray
    contents: np.ndarray
    ratings: np.ndarray

    def __post_init__(self):
        self.users = np.asarray(self.users, np.int64)
        self.contents = np.asarray(self.contents, np.int64)
        self.ratings = np.asarray(self.ratings, np.float64)
        if not (len(self.users) == len(self.contents) == len(self.ratings)):
            raise InvalidParameterError("observation columns differ in length")
        if len(self.users):
            if self.users.min() < 0 or self.users.max() >= self.num_users_K:
                raise InvalidParameterError("user index out of range")
            if self.contents.min() < 0 or self.contents.max() >= self.num_contents_N:
                raise InvalidParameterError("content index out of range")
            if np.any(self.ratings < 0):
                raise InvalidParameterError("ratings must be nonnegative")
            keys = self.users * self.num_contents_N + self.contents
            if len(np.unique(keys)) != len(keys):
                raise InvalidParameterError("duplicate (user, content) observation")

    def __len__(self) -> int:
        return len(self.ratings)

    @classmethod
    def from_dense(cls, P, mask=None) -> "PopularityMatrix":
        P = np.asarray(P, float)
        mask = np.ones(P.shape, bool) if mask is None else np.asarray(mask, bool)
        u, c = np.nonzero(mask)
        return cls(P.shape[0], P.shape[1], u, c, P[u, c])

    @classmethod
    def from_trace(cls, trace: Trace, num_users: int, num_contents: int) -> "PopularityMatrix":
        """Ratings are request counts per (user, content) pair."""
        keep = trace.user >= 0
        keys = trace.user[keep] * num_contents + trace.content[keep]
        uniq, counts = np.unique(keys, return_counts=True)
        return cls(num_users, num_contents, uniq // num_contents, uniq % num_contents, counts.astype(float))

    def dense(self, fill: float = 0.0) -> np.ndarray:
        P = np.full((self.num_users_K, self.num_contents_N), fill)
        P[self.users, self.contents] = self.ratings
        return P


@dataclass
class FactorPair:
    rank_r: int
    user_factors: np.ndarray  # r x K
    content_factors: np.ndarray  # r x N
    objective_history: list[float] = field(default_factory=list)

    def predict(self, k=None, n=None):
        full = self.user_factors.T @ self.content_factors
        if k is None and n is None:
            return full
        return full[k, n] if n is not None else full[k]

    def rmse(self, P: PopularityMatrix) -> float:
        pred = np.einsum("ri,ri->i", self.user_factors[:, P.users], self.content_factors[:, P.contents])
        return float(np.sqrt(np.mean((pred - P.ratings) ** 2))) if len(P) else 0.0


def als_objective(P: PopularityMatrix, U: np.ndarray, V: np.ndarray, reg: float) -> float:
    pred = np.einsum("ri,ri->i", U[:, P.users], V[:, P.contents])
    return float(np.sum((P.ratings - pred) ** 2) + reg * (np.sum(U * U) + np.sum(V * V)))


def _solve_side(X: np.ndarray, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, n_rows: int,
                reg: float) -> np.ndarray:
    """Exact least-squares update of every factor column indexed by ``rows``
    with the other side ``X`` held fixed."""
    r = X.shape[0]
    out = np.zeros((r, n_rows))
    order = np.argsort(rows, kind="stable")
    rows, cols, vals = rows[order], cols[order], vals[order]
    bounds = np.searchsorted(rows, np.arange(n_rows + 1))
    eye = np.eye(r)
    for i in range(n_rows):
        a, b = bounds[i], bounds[i + 1]
        if a == b:
            continue
        Xi = X[:, cols[a:b]]
        G = Xi @ Xi.T + reg * eye
        rhs = Xi @ vals[a:b]
        if reg > 0:
            out[:, i] = np.linalg.solve(G, rhs)
        else:
            out[:, i] = np.linalg.lstsq(Xi.T, vals[a:b], rcond=None)[0]
    return out


def factorize(P: PopularityMatrix, r: int, reg: float = 0.0, max_iters: int = 100, seed: int = 0,
              tol: float = 1e-12) -> FactorPair:
    """Rank-``r`` factorization ``P ~ U^T V`` by alternating least squares.

    Minimizes the squared error over observed entries plus
    ``reg * (|U|^2 + |V|^2)``.  Each half-step solves its subproblem
    exactly, so the objective never increases; this is asserted after
    every half-step.  Stops after ``max_iters`` sweeps or when the relative
    improvement of a sweep falls below ``tol``.
    """
    K, N = P.num_users_K, P.num_contents_N
    if int(r) != r or r < 1 or r > min(K, N):
        raise InvalidRankError(f"rank must lie in [1, min(K, N) = {min(K, N)}], got {r!r}")
    if len(P) == 0:
        raise InvalidParameterError("factorization needs at least one observation")
    if reg < 0:
        raise InvalidParameterError("regularization must be nonnegative")
    rng = make_rng(seed, stream=40)
    scale = 1.0 / math.sqrt(r)
    U = rng.random((r, K)) * scale
    V = rng.random((r, N)) * scale
    history = [als_objective(P, U, V, reg)]
    for _ in range(max_iters):
        prev_sweep = history[-1]
        for side in ("users", "contents"):
            if side == "users":
                U = _solve_side(V, P.users, P.contents, P.ratings, K, reg)
            else:
                V = _solve_side(U, P.contents, P.users, P.ratings, N, reg)
            obj = als_objective(P, U, V, reg)
            if not math.isfinite(obj):
                raise NumericalFailureError("factorization objective is not finite")
            assert obj <= history[-1] * (1 + 1e-9) + 1e-12, "ALS objective increased"
            history.append(obj)
        if prev_sweep - history[-1] <= tol * max(prev_sweep, 1e-300):
            break
    return FactorPair(int(r), U, V, history)


@dataclass(frozen=True)
class LocationScores:
    scores: np.ndarray  # locations x contents
    fallback: np.ndarray  # True where the location had no users (uniform scores)


def predict_popularity(f: FactorPair, location_user_sets) -> LocationScores:
    """Per-location content scores: the mean predicted row over the
    location's users.  Locations without users get uniform scores."""
    pred = f.predict()
    N = pred.shape[1]
    rows, flags = [], []
    for users in location_user_sets:
        users = np.asarray(sorted(users), dtype=np.int64)
        if len(users) == 0:
            rows.append(np.full(N, 1.0 / N))
            flags.append(True)
        else:
            rows.append(pred[users].mean(axis=0))
            flags.append(False)
    return LocationScores(np.array(rows).reshape(len(rows), N), np.array(flags, bool))


# ---------------------------------------------------------------------------
# File formats


def write_matrix(path, P: PopularityMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "content_id", "rating"])
        for u, c, v in zip(P.users.tolist(), P.contents.tolist(), P.ratings.tolist()):
            w.writerow([u, c, repr(v)])


def read_matrix(path, num_users: int | None = None, num_contents: int | None = None) -> PopularityMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["user_id", "content_id", "rating"]:
            raise InvalidParameterError(f"{path}: expected header user_id,content_id,rating")
        rows = [row for row in r if row]
    u = np.array([int(x[0]) for x in rows], np.int64)
    c = np.array([int(x[1]) for x in rows], np.int64)
    v = np.array([float(x[2]) for x in rows], float)
    K = num_users if num_users is not None else (int(u.max()) + 1 if len(u) else 0)
    N = num_contents if num_contents is not None else (int(c.max()) + 1 if len(c) else 0)
    return PopularityMatrix(K, N, u, c, v)


def write_factors(user_path, content_path, f: FactorPair) -> None:
    """Dense CSV matrices, one factor row per line (r rows each)."""
    for path, M in ((user_path, f.user_factors), (content_path, f.content_factors)):
        np.savetxt(path, M, delimiter=",", fmt="%.17g")
