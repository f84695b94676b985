"""Coded caching with symmetric subfile placement and XOR multicast delivery.

With K users, N files and per-user memory of M files, let t = K*M/N.  Each
file is split into C(K, t) equal subfiles, one per t-subset S of users, and
user k caches every subfile whose label S contains k.  For a demand vector d
the server sends, for each (t+1)-subset T of users, the XOR over k in T of
subfile (d_k, T \\ {k}).  Every user in T already holds all but one of the
XORed subfiles, so it recovers the missing piece of its own file.  The load
is C(K, t+1) / C(K, t) = K(1 - M/N) / (1 + K*M/N) files.

Subsets are enumerated in colexicographic order so that schedules are
reproducible byte for byte.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DecodeFailureError, InvalidParameterError
from .rng import make_rng

__all__ = [
    "CodedCachingInstance",
    "DeliverySchedule",
    "MemorySharedScheme",
    "place",
    "deliver",
    "decode",
    "resource_blocks",
    "subpacketization",
    "memory_share",
    "colex_subsets",
    "exhaustive_decodability",
    "schedule_dump",
    "write_resource_block_curve",
]

Subset = tuple[int, ...]
Label = tuple[int, Subset]  # (file index, user subset)


@lru_cache(maxsize=None)
def colex_subsets(K: int, size: int) -> tuple[Subset, ...]:
    """All ``size``-subsets of ``range(K)`` in colexicographic order."""
    if size < 0 or size > K:
        return ()
    return tuple(sorted(itertools.combinations(range(K), size), key=lambda s: s[::-1]))


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**9)


def _files_from(files, N: int, seed: int) -> list[bytes]:
    if isinstance(files, (int, np.integer)):
        size = int(files)
        rng = make_rng(seed, stream=7)
        return [rng.integers(0, 256, size, dtype=np.uint8).tobytes() for _ in range(N)]
    files = [bytes(f) for f in files]
    if len(files) != N:
        raise InvalidParameterError(f"expected {N} files, got {len(files)}")
    if len({len(f) for f in files}) > 1:
        raise InvalidParameterError("all files must have the same length")
    return files


@dataclass(frozen=True)
class CodedCachingInstance:
    """Result of the placement phase.

    ``subfiles[n, j]`` is the j-th subfile of file n, labelled by the j-th
    t-subset in colex order.  Files are zero-padded to a multiple of the
    subpacketization; ``file_size`` is the unpadded length.
    """

    num_users_K: int
    num_files_N: int
    cache_fraction: Fraction
    t: int
    file_size: int
    subfiles: np.ndarray = field(repr=False)
    subsets: tuple[Subset, ...] = field(repr=False)

    @property
    def num_subfiles(self) -> int:
        return len(self.subsets)

    @property
    def subfile_size(self) -> int:
        return self.subfiles.shape[2]

    @property
    def padding(self) -> int:
        return self.num_subfiles * self.subfile_size - self.file_size

    def subset_index(self, S: Subset) -> int:
        return _subset_index(self.num_users_K, self.t)[S]

    def per_user_cache(self, k: int) -> dict[Label, bytes]:
        """Everything user ``k`` stores: subfile (n, S) for every S containing k."""
        cache = {}
        for j, S in enumerate(self.subsets):
            if k in S:
                for n in range(self.num_files_N):
                    cache[(n, S)] = self.subfiles[n, j].tobytes()
        return cache

    def cache_bytes(self, k: int) -> int:
        return sum(len(v) for v in self.per_user_cache(k).values())

    def file(self, n: int) -> bytes:
        return self.subfiles[n].tobytes()[: self.file_size]


@lru_cache(maxsize=None)
def _subset_index(K: int, t: int) -> dict[Subset, int]:
    return {S: j for j, S in enumerate(colex_subsets(K, t))}


@dataclass(frozen=True)
class Message:
    users: Subset
    labels: tuple[Label, ...]  # XORed subfiles, one per user in ``users``
    payload: bytes


@dataclass(frozen=True)
class DeliverySchedule:
    demands: tuple[int, ...]
    messages: tuple[Message, ...]
    subfile_size: int

    @property
    def transmitted_bytes(self) -> int:
        return len(self.messages) * self.subfile_size

    def without(self, index: int) -> "DeliverySchedule":
        msgs = self.messages[:index] + self.messages[index + 1:]
        return DeliverySchedule(self.demands, msgs, self.subfile_size)


def place(K: int, M, N: int, files=240, seed: int = 0, memory_sharing: bool = False):
    """Symmetric placement for K users with memory M (in files) out of N.

    ``files`` is either a sequence of N equal-length byte strings or an
    integer length, in which case seeded random files are generated.  If
    ``K*M/N`` is not an integer the call fails unless ``memory_sharing`` is
    set, in which case a :class:`MemorySharedScheme` is returned.
    """
    if isinstance(K, bool) or int(K) != K or K < 1:
        raise InvalidParameterError(f"number of users must be a positive integer, got {K!r}")
    if int(N) != N or N < 1:
        raise InvalidParameterError(f"number of files must be a positive integer, got {N!r}")
    K, N = int(K), int(N)
    m = _as_fraction(M) / N
    if not (0 <= m <= 1):
        raise InvalidParameterError(f"cache size M={M} must lie in [0, N={N}]")
    t = K * m
    if t.denominator != 1:
        if memory_sharing:
            return memory_share(K, m, N, files, seed)
        raise InvalidParameterError(
            f"t = K*M/N = {t} is not an integer; enable memory sharing or pick M so that t is integral"
        )
    return _place_integer(K, N, int(t), _files_from(files, N, seed))


def _place_integer(K: int, N: int, t: int, files: Sequence[bytes]) -> CodedCachingInstance:
    subsets = colex_subsets(K, t)
    C = len(subsets)
    F = len(files[0]) if files else 0
    sub = -(-F // C)  # ceil
    arr = np.zeros((N, C * sub), dtype=np.uint8)
    for n, f in enumerate(files):
        arr[n, :F] = np.frombuffer(f, dtype=np.uint8)
    arr = arr.reshape(N, C, sub)
    arr.setflags(write=False)
    inst = CodedCachingInstance(K, N, Fraction(t, K), t, F, arr, subsets)
    # each user holds C(K-1, t-1) of the C(K, t) subfiles of every file
    per_file = math.comb(K - 1, t - 1) if t >= 1 else 0
    assert per_file * K == t * C
    assert per_file * sub * N * K == t * N * C * sub
    return inst


def _xor(chunks) -> bytes:
    acc = None
    for c in chunks:
        a = np.frombuffer(c, dtype=np.uint8)
        acc = a.copy() if acc is None else np.bitwise_xor(acc, a, out=acc)
    return b"" if acc is None else acc.tobytes()


def _check_demands(demands, K: int, N: int) -> tuple[int, ...]:
    d = tuple(int(x) for x in demands)
    if len(d) != K or any(x < 0 or x >= N for x in d) or any(int(x) != x for x in demands):
        raise InvalidParameterError(f"demand vector must hold {K} file indices in [0, {N}), got {list(demands)!r}")
    return d


def deliver(instance, demands) -> DeliverySchedule | tuple[DeliverySchedule, ...]:
    """XOR multicast delivery: one message per (t+1)-subset of users."""
    if isinstance(instance, MemorySharedScheme):
        return tuple(deliver(part, demands) for _, part in instance.parts)
    K, t = instance.num_users_K, instance.t
    d = _check_demands(demands, K, instance.num_files_N)
    idx = _subset_index(K, t)
    messages = []
    for T in colex_subsets(K, t + 1):
        labels = []
        parts = []
        for k in T:
            S = tuple(u for u in T if u != k)
            labels.append((d[k], S))
            parts.append(instance.subfiles[d[k], idx[S]].tobytes())
        messages.append(Message(T, tuple(labels), _xor(parts)))
    return DeliverySchedule(d, tuple(messages), instance.subfile_size)


def decode(instance, schedule, user_k: int) -> bytes:
    """Reconstruct user ``user_k``'s demanded file from its own cache and
    the multicast messages; raises :class:`DecodeFailureError` if a needed
    message is missing or inconsistent."""
    if isinstance(instance, MemorySharedScheme):
        return b"".join(decode(part, sched, user_k) for (_, part), sched in zip(instance.parts, schedule))
    K, t = instance.num_users_K, instance.t
    if not 0 <= user_k < K:
        raise InvalidParameterError(f"user index {user_k} out of range")
    cache = instance.per_user_cache(user_k)
    want = schedule.demands[user_k]
    by_users = {m.users: m for m in schedule.messages}
    pieces = []
    for S in instance.subsets:
        if user_k in S:
            pieces.append(cache[(want, S)])
            continue
        T = tuple(sorted(S + (user_k,)))
        msg = by_users.get(T)
        if msg is None:
            raise DecodeFailureError(f"user {user_k}: no message for users {T}")
        side = []
        for n, R in msg.labels:
            if R == S and n == want:
                continue
            if (n, R) not in cache:
                raise DecodeFailureError(f"user {user_k}: message {T} mixes uncached subfile {(n, R)}")
            side.append(cache[(n, R)])
        if len(side) != len(msg.labels) - 1:
            raise DecodeFailureError(f"user {user_k}: message {T} does not carry subfile {(want, S)}")
        pieces.append(_xor([msg.payload] + side))
    return b"".join(pieces)[: instance.file_size]


def resource_blocks(K: int, m):
    """Delivery load in files: ``K(1 - m) / (1 + K m)`` with ``m = M/N``.

    Exact (a Fraction) for rational ``m``; float otherwise.
    """
    if K < 1:
        raise InvalidParameterError("K must be at least 1")
    if isinstance(m, (Fraction, int)):
        m = Fraction(m)
        if not 0 <= m <= 1:
            raise InvalidParameterError("m must lie in [0, 1]")
        return K * (1 - m) / (1 + K * m)
    m = float(m)
    if not 0.0 <= m <= 1.0:
        raise InvalidParameterError("m must lie in [0, 1]")
    return K * (1.0 - m) / (1.0 + K * m)


def subpacketization(K: int, t: int) -> int:
    """Number of subfiles per file, C(K, t) (exact integer)."""
    if not 0 <= t <= K:
        raise InvalidParameterError(f"need 0 <= t <= K, got t={t}, K={K}")
    return math.comb(int(K), int(t))


@dataclass(frozen=True)
class MemorySharedScheme:
    """Each file is cut into two byte ranges served by the integer-t schemes
    at ``floor(Km)`` and ``ceil(Km)``; ``parts`` holds (weight, instance)."""

    num_users_K: int
    num_files_N: int
    cache_fraction: Fraction
    parts: tuple[tuple[Fraction, CodedCachingInstance], ...]

    @property
    def expected_resource_blocks(self) -> Fraction:
        return sum((w * resource_blocks(self.num_users_K, inst.cache_fraction) for w, inst in self.parts), Fraction(0))

    @property
    def file_size(self) -> int:
        return sum(inst.file_size for _, inst in self.parts)

    def file(self, n: int) -> bytes:
        return b"".join(inst.file(n) for _, inst in self.parts)

    def cache_bytes(self, k: int) -> int:
        return sum(inst.cache_bytes(k) for _, inst in self.parts)


def memory_share(K: int, m, N: int = 1, files=240, seed: int = 0) -> MemorySharedScheme:
    """Realize cache fraction ``m`` by mixing the two neighbouring integer-t
    schemes.

    A fraction ``w = ceil(Km) - Km`` of every file goes to the scheme with
    ``t = floor(Km)``, the rest to ``t = ceil(Km)``, so the memory used is
    exactly ``m`` and the expected load is the linear interpolation of the
    two integer points.
    """
    m = _as_fraction(m)
    if not 0 <= m <= 1:
        raise InvalidParameterError("cache fraction must lie in [0, 1]")
    file_list = _files_from(files, N, seed)
    Km = K * m
    t_lo, t_hi = math.floor(Km), math.ceil(Km)
    if t_lo == t_hi:
        inst = _place_integer(K, N, t_lo, file_list)
        return MemorySharedScheme(K, N, m, ((Fraction(1), inst),))
    w_lo = t_hi - Km
    F = len(file_list[0])
    cut = round(w_lo * F)
    lo = _place_integer(K, N, t_lo, [f[:cut] for f in file_list])
    hi = _place_integer(K, N, t_hi, [f[cut:] for f in file_list])
    return MemorySharedScheme(K, N, m, ((w_lo, lo), (1 - w_lo, hi)))


def exhaustive_decodability(instance, num_files: int | None = None) -> int:
    """Decode every user under every demand vector; returns the number of
    bit-exact reconstruction failures."""
    K = instance.num_users_K
    N = instance.num_files_N if num_files is None else num_files
    expected = [instance.file(n) for n in range(N)]
    failures = 0
    for demands in itertools.product(range(N), repeat=K):
        sched = deliver(instance, demands)
        for k in range(K):
            try:
                ok = decode(instance, sched, k) == expected[demands[k]]
            except DecodeFailureError:
                ok = False
            failures += not ok
    return failures


def _label(label: Label) -> str:
    n, S = label
    return f"{n}:{{{','.join(map(str, S))}}}"


def schedule_dump(schedule: DeliverySchedule) -> str:
    """One line per message: ``users;xor(file:{subset},...)``."""
    lines = []
    for msg in schedule.messages:
        lines.append(f"{','.join(map(str, msg.users))};xor({','.join(_label(l) for l in msg.labels)})")
    return "\n".join(lines) + ("\n" if lines else "")


def write_resource_block_curve(path, Ks, m) -> None:
    """CSV ``K,m,resource_blocks`` over the given user counts."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K", "m", "resource_blocks"])
        for K in Ks:
            w.writerow([K, repr(float(m)), repr(float(resource_blocks(int(K), float(m))))])
