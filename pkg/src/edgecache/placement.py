"""Cooperative content placement over a bipartite user/cache access graph.

A user's request hits when any cache it can reach stores the content, so the
expected hit probability of a placement is a weighted coverage function:
monotone and submodular in the set of stored (cache, content) pairs, with
one capacity constraint per cache.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InfeasiblePlacementError, InstanceTooLargeError, InvalidParameterError
from .popularity import top_m_mass
from .rng import make_rng

__all__ = [
    "AccessGraph",
    "Placement",
    "FractionalPlacement",
    "objective",
    "greedy_place",
    "brute_force_place",
    "local_search",
    "fractional_place",
    "relaxation_bound",
    "effective_cache_gain",
    "random_geometric_graph",
    "read_graph",
    "write_graph",
    "write_placement",
    "BRUTE_FORCE_LIMIT",
]

BRUTE_FORCE_LIMIT = 10**7
_EPS = 1e-12


@dataclass(frozen=True)
class AccessGraph:
    """Users, caches, who reaches what, and what users ask for.

    ``adjacency[u, l]`` is True when user u can fetch from cache l.
    ``popularity`` is either one shared vector over N contents or a
    ``(num_users, N)`` matrix of per-user request probabilities.
    """

    adjacency: np.ndarray
    capacities: np.ndarray
    popularity: np.ndarray
    user_weights: np.ndarray = None

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=bool)
        if A.ndim != 2:
            raise InvalidParameterError("adjacency must be a users x caches matrix")
        U, L = A.shape
        caps = np.asarray(self.capacities, dtype=np.int64).reshape(-1)
        if len(caps) != L or np.any(caps < 0):
            raise InvalidParameterError("need one nonnegative capacity per cache")
        P = np.asarray(self.popularity, dtype=np.float64)
        if P.ndim == 1:
            P = np.broadcast_to(P, (U, len(P)))
        if P.ndim != 2 or P.shape[0] != U or np.any(P < 0):
            raise InvalidParameterError("popularity must be a nonnegative vector or a users x contents matrix")
        w = np.ones(U) if self.user_weights is None else np.asarray(self.user_weights, dtype=np.float64)
        if w.shape != (U,) or np.any(w < 0):
            raise InvalidParameterError("need one nonnegative weight per user")
        for name, val in (("adjacency", A), ("capacities", caps), ("popularity", P), ("user_weights", w)):
            val = np.array(val)
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def from_edges(cls, num_users: int, num_caches: int, edges, capacities, popularity, user_weights=None):
        A = np.zeros((num_users, num_caches), dtype=bool)
        for u, l in edges:
            A[u, l] = True
        caps = np.broadcast_to(np.asarray(capacities, dtype=np.int64), (num_caches,))
        return cls(A, caps, popularity, user_weights)

    @property
    def num_users(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_caches_L(self) -> int:
        return self.adjacency.shape[1]

    @property
    def num_contents(self) -> int:
        return self.popularity.shape[1]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(int(u), int(l)) for u, l in zip(*np.nonzero(self.adjacency))]

    def weighted_popularity(self) -> np.ndarray:
        """Request mix over all users, ``sum_u w_u p_u / sum_u w_u``."""
        w = self.user_weights
        total = w.sum()
        if total == 0:
            return np.zeros(self.num_contents)
        return (w[:, None] * self.popularity).sum(axis=0) / total

    def effective_capacities(self) -> np.ndarray:
        return np.minimum(self.capacities, self.num_contents)


@dataclass(frozen=True)
class Placement:
    contents: tuple[frozenset, ...]

    @classmethod
    def of(cls, sets) -> "Placement":
        return cls(tuple(frozenset(int(c) for c in s) for s in sets))

    @classmethod
    def empty(cls, L: int) -> "Placement":
        return cls(tuple(frozenset() for _ in range(L)))

    def matrix(self, N: int) -> np.ndarray:
        X = np.zeros((len(self.contents), N), dtype=bool)
        for l, s in enumerate(self.contents):
            X[l, list(s)] = True
        return X

    def feasible(self, g: AccessGraph) -> bool:
        return len(self.contents) == g.num_caches_L and all(
            len(s) <= cap and all(0 <= c < g.num_contents for c in s) for s, cap in zip(self.contents, g.capacities)
        )


def _value(g: AccessGraph, X: np.ndarray) -> float:
    covered = (g.adjacency.astype(np.int64) @ X.astype(np.int64)) > 0
    total = g.user_weights.sum()
    if total == 0:
        return 0.0
    return float((g.user_weights[:, None] * g.popularity * covered).sum() / total)


def objective(g: AccessGraph, pl: Placement) -> float:
    """Expected hit probability: request-weighted fraction of (user, content)
    demand served by at least one reachable cache."""
    if not pl.feasible(g):
        raise InfeasiblePlacementError("placement exceeds a cache capacity or references unknown contents")
    return _value(g, pl.matrix(g.num_contents))


def greedy_place(g: AccessGraph, cache_order: Sequence[int] | None = None,
                 content_order: Sequence[int] | None = None) -> Placement:
    """Repeatedly store the (cache, content) pair with the largest marginal
    gain until every cache is full.

    Ties go to the cache, then the content, that comes first in
    ``cache_order`` / ``content_order`` (default: lower id first).
    """
    L, N = g.num_caches_L, g.num_contents
    cache_rank = np.empty(L, np.int64)
    cache_rank[np.asarray(cache_order if cache_order is not None else range(L))] = np.arange(L)
    content_rank = np.empty(N, np.int64)
    content_rank[np.asarray(content_order if content_order is not None else range(N))] = np.arange(N)
    # tie-break key: smaller is preferred
    key = cache_rank[:, None] * N + content_rank[None, :]
    A = g.adjacency.astype(np.float64)
    demand = g.user_weights[:, None] * g.popularity  # U x N
    X = np.zeros((L, N), dtype=bool)
    room = g.effective_capacities().copy()
    covered = np.zeros_like(demand, dtype=bool)
    while room.sum() > 0:
        gains = A.T @ (demand * ~covered)  # L x N
        valid = (room[:, None] > 0) & ~X
        best = gains[valid].max()
        cand = valid & (gains == best)
        l, c = np.unravel_index(np.argmin(np.where(cand, key, np.iinfo(np.int64).max)), key.shape)
        X[l, c] = True
        room[l] -= 1
        covered[:, c] |= g.adjacency[:, l]
    return Placement.of([np.nonzero(X[l])[0] for l in range(L)])


def _candidate_sets(N: int, M: int) -> np.ndarray:
    combos = list(itertools.combinations(range(N), M))
    S = np.zeros((len(combos), N), dtype=bool)
    for i, comb in enumerate(combos):
        S[i, list(comb)] = True
    return S


def brute_force_place(g: AccessGraph, limit: int = BRUTE_FORCE_LIMIT, chunk: int = 1 << 15) -> Placement:
    """Exact optimum by enumerating every full placement.

    The objective is monotone, so only sets of size ``min(M_l, N)`` are
    enumerated.  The first optimum in lexicographic enumeration order wins.
    """
    L, N = g.num_caches_L, g.num_contents
    caps = g.effective_capacities()
    sizes = [math.comb(N, int(m)) for m in caps]
    total = math.prod(sizes)
    if total > limit:
        raise InstanceTooLargeError(f"{total} candidate placements exceed the brute-force limit {limit}")
    sets = [_candidate_sets(N, int(m)) for m in caps]
    demand = g.user_weights[:, None] * g.popularity
    users = [(np.nonzero(g.adjacency[u])[0], demand[u]) for u in range(g.num_users)]
    best_val, best_idx = -1.0, None
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, sizes) if L else ()
        val = np.zeros(len(flat))
        for reach, d in users:
            if len(reach) == 0:
                continue
            cov = np.zeros((len(flat), N), dtype=bool)
            for l in reach:
                cov |= sets[l][idx[l]]
            val += cov @ d
        j = int(np.argmax(val))
        if val[j] > best_val + _EPS:
            best_val, best_idx = float(val[j]), [int(i[j]) for i in idx]
    if best_idx is None:
        return Placement.empty(L)
    return Placement.of([np.nonzero(sets[l][best_idx[l]])[0] for l in range(L)])


def local_search(g: AccessGraph, pl: Placement) -> Placement:
    """Single-swap hill climbing (fill free slots, then swap one stored
    content for an unstored one while the objective strictly improves)."""
    N = g.num_contents
    X = pl.matrix(N)
    cur = _value(g, X)
    caps = g.effective_capacities()
    improved = True
    while improved:
        improved = False
        for l in range(g.num_caches_L):
            while X[l].sum() < caps[l]:
                gains = []
                for c in np.nonzero(~X[l])[0]:
                    X[l, c] = True
                    gains.append((_value(g, X), -c))
                    X[l, c] = False
                v, negc = max(gains)
                X[l, -negc] = True
                cur = v
            for out in np.nonzero(X[l])[0]:
                for inn in np.nonzero(~X[l])[0]:
                    X[l, out], X[l, inn] = False, True
                    v = _value(g, X)
                    if v > cur + _EPS:
                        cur, improved = v, True
                        break
                    X[l, out], X[l, inn] = True, False
                if improved:
                    break
            if improved:
                break
    return Placement.of([np.nonzero(X[l])[0] for l in range(g.num_caches_L)])


@dataclass(frozen=True)
class FractionalPlacement:
    """Time sharing between integral placements.

    ``schedule[i]`` is the index into ``placements`` used in slot i; slots
    repeat round robin.  ``weights`` are the long-run time shares.
    """

    placements: tuple[Placement, ...]
    weights: tuple[float, ...]
    schedule: tuple[int, ...]
    objectives: tuple[float, ...]
    upper_bound: float = field(default=math.nan)

    @property
    def expected_objective(self) -> float:
        return float(sum(w * v for w, v in zip(self.weights, self.objectives)))

    def marginals(self, N: int) -> np.ndarray:
        """Long-run fraction of time each cache stores each content."""
        return sum(w * p.matrix(N).astype(float) for w, p in zip(self.weights, self.placements))


def _rotation(n: int, r: int) -> list[int]:
    r %= max(n, 1)
    return list(range(r, n)) + list(range(r))


def fractional_place(g: AccessGraph, num_rounds: int = 1) -> FractionalPlacement:
    """Time-shared placement built from ``num_rounds`` integral rounds.

    Round 0 is the plain greedy placement.  Every further round reruns the
    greedy with rotated cache and content priorities and polishes the result
    with :func:`local_search`.  The mixture time-shares the distinct rounds
    that reach the best objective found, so symmetric optima are visited
    equally often and the expected objective equals the best integral value
    found (never below greedy, never above the exact optimum).
    """
    if num_rounds < 1:
        raise InvalidParameterError("num_rounds must be at least 1")
    L, N = g.num_caches_L, g.num_contents
    rounds = [greedy_place(g)]
    for r in range(1, num_rounds):
        pl = greedy_place(g, _rotation(L, r), _rotation(N, r // max(L, 1)))
        rounds.append(local_search(g, pl))
    values = [objective(g, p) for p in rounds]
    best = max(values)
    keep = [i for i, v in enumerate(values) if v >= best - 1e-12]
    distinct: list[Placement] = []
    slot_of = []
    for i in keep:
        if rounds[i] not in distinct:
            distinct.append(rounds[i])
        slot_of.append(distinct.index(rounds[i]))
    counts = np.bincount(slot_of, minlength=len(distinct))
    weights = tuple(float(c) / len(slot_of) for c in counts)
    bound = relaxation_bound(g) if num_rounds > 1 else math.nan
    return FractionalPlacement(
        tuple(distinct), weights, tuple(slot_of), tuple(objective(g, p) for p in distinct), bound
    )


def relaxation_bound(g: AccessGraph) -> float:
    """Optimal value of the LP relaxation (fractional storage allowed); an
    upper bound on every integral placement."""
    from scipy.optimize import linprog

    U, L, N = g.num_users, g.num_caches_L, g.num_contents
    total = g.user_weights.sum()
    if total == 0 or L == 0:
        return 0.0
    nx, nz = L * N, U * N
    cost = np.concatenate([np.zeros(nx), -(g.user_weights[:, None] * g.popularity).ravel() / total])
    rows, rhs = [], []
    for u in range(U):
        for c in range(N):
            row = np.zeros(nx + nz)
            row[nx + u * N + c] = 1.0
            for l in np.nonzero(g.adjacency[u])[0]:
                row[l * N + c] = -1.0
            rows.append(row)
            rhs.append(0.0)
    for l in range(L):
        row = np.zeros(nx + nz)
        row[l * N:(l + 1) * N] = 1.0
        rows.append(row)
        rhs.append(float(g.capacities[l]))
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=(0, 1), method="highs")
    if not res.success:
        raise ArithmeticError(f"LP relaxation failed: {res.message}")
    return float(-res.fun)


def _min_size_for(cum: np.ndarray, target: float) -> float:
    """Smallest (interpolated) cache size whose top-m mass reaches target."""
    if target <= 0:
        return 0.0
    m = int(np.searchsorted(cum, target - 1e-12, side="left"))
    if m >= len(cum):
        return float(len(cum) - 1)
    lo, hi = cum[m - 1], cum[m]
    frac = 1.0 if hi == lo else (target - lo) / (hi - lo)
    return (m - 1) + min(max(frac, 0.0), 1.0)


def effective_cache_gain(g: AccessGraph, placement: Placement | None = None) -> float:
    """Factor by which one isolated cache would have to grow to match the
    cooperative hit probability.

    The reference is a single cache under the users' aggregate request mix;
    ``M`` is the mean cache capacity.  Sizes between integers are linearly
    interpolated on the top-m mass curve.
    """
    pl = greedy_place(g) if placement is None else placement
    value = objective(g, pl)
    M = float(np.mean(g.capacities))
    if M == 0:
        raise InvalidParameterError("effective gain is undefined for zero-capacity caches")
    p = np.sort(g.weighted_popularity())[::-1]
    cum = np.concatenate(([0.0], np.cumsum(p)))
    return _min_size_for(cum, value) / M


def random_geometric_graph(num_users: int, num_caches: int, radius: float, capacity: int, popularity,
                           seed: int = 0, user_weights=None) -> AccessGraph:
    """Users and caches uniform in the unit square (toroidal distance); a
    user reaches every cache within ``radius``."""
    rng = make_rng(seed, stream=11)
    users = rng.random((num_users, 2))
    caches = rng.random((num_caches, 2))
    d = np.abs(users[:, None, :] - caches[None, :, :])
    d = np.minimum(d, 1.0 - d)
    A = np.hypot(d[..., 0], d[..., 1]) <= radius
    return AccessGraph(A, np.full(num_caches, capacity), popularity, user_weights)


# ---------------------------------------------------------------------------
# File formats


def write_graph(path, g: AccessGraph) -> None:
    shared = bool(np.all(g.popularity == g.popularity[0]))
    doc = {
        "users": {"count": g.num_users, "weights": g.user_weights.tolist()},
        "caches": {"count": g.num_caches_L},
        "edges": [list(e) for e in g.edges],
        "capacities": g.capacities.tolist(),
        "popularity": g.popularity[0].tolist() if shared else g.popularity.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_graph(path) -> AccessGraph:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        users = doc["users"]
        caches = doc["caches"]
        U = users["count"] if isinstance(users, dict) else int(users)
        L = caches["count"] if isinstance(caches, dict) else int(caches)
        weights = users.get("weights") if isinstance(users, dict) else None
        return AccessGraph.from_edges(U, L, doc["edges"], doc["capacities"], doc["popularity"], weights)
    except (KeyError, TypeError) as exc:
        raise InvalidParameterError(f"{path}: malformed graph file ({exc})") from None


def write_placement(path, pl: Placement) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cache_id", "content_id"])
        for l, s in enumerate(pl.contents):
            for c in sorted(s):
                w.writerow([l, c])
