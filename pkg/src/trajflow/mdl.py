"""MDL co-clustering of adjacency matrices and change-point segmentation.

A segment of consecutive snapshots shares one row grouping (upstream
vertices) and one column grouping (downstream vertices). Its description
length is

    L*(k) + L*(l) + log2 C(n-1, k-1) + log2 C(n-1, l-1)
    + sum over blocks of ceil(log2(N + 1))           (ones count per block)
    + sum over blocks of N * H(ones / N)             (block contents)

where a block is (row group, column group) stacked over the segment's
snapshots, so ``N = rows * cols * segment_length``, ``H`` is the binary
entropy in bits and ``L*`` the universal integer code. Segments add
``L*(segment_length)``. For a single snapshot the block terms reduce to the
plain per-matrix cross-association cost.

All costs depend on the snapshots only through their elementwise sum and
count, which is what the search operates on.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidPartitioningError, OracleLimitError

# Cost differences below this are treated as ties.
EPS = 1e-9

ORACLE_MAX_N = 6
ORACLE_MAX_T = 10


def lstar(x: float) -> float:
    """Universal code length of a positive integer: log2 x + log2 log2 x + ... (positive terms)."""
    if x < 1:
        raise ValueError(f"L* is defined for integers >= 1, got {x}")
    total = 0.0
    v = math.log2(x)
    while v > 0:
        total += v
        v = math.log2(v)
    return total


def log2_comb(n: int, k: int) -> float:
    return math.log2(math.comb(n, k))


def entropy(p):
    """Binary Shannon entropy in bits with H(0) = H(1) = 0."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    return h


# Block counts and sizes are non-negative integers, so x*log2(x) and
# ceil(log2(x + 1)) come from lookup tables grown on demand.
_XLOGX = np.zeros(1)
_BITS = np.zeros(1)


def _ensure_tables(limit: int) -> None:
    global _XLOGX, _BITS
    if limit < len(_XLOGX):
        return
    size = max(limit + 1, 2 * len(_XLOGX), 1024)
    x = np.arange(size, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(x > 0, x * np.log2(np.where(x > 0, x, 1.0)), 0.0)
    # bit length of x equals ceil(log2(x + 1)) exactly
    bits = np.frexp(x)[1].astype(float)
    _XLOGX, _BITS = xlogx, bits


def _as_int(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype.kind == "f":
        a = np.rint(a)
    return a.astype(np.int64)


def _xlog2x(a):
    a = _as_int(a)
    _ensure_tables(int(a.max()) if a.size else 0)
    return _XLOGX[a]


def _data_bits(ones, size):
    """size * H(ones / size), elementwise; zero where size is zero."""
    ones = _as_int(ones)
    size = _as_int(size)
    return _xlog2x(size) - _xlog2x(ones) - _xlog2x(size - ones)


def _count_bits(size):
    """ceil(log2(size + 1)): bits for a ones count between 0 and size."""
    size = _as_int(size)
    _ensure_tables(int(size.max()) if size.size else 0)
    return _BITS[size]


@dataclass(frozen=True)
class Partitioning:
    """Row and column group labels, one entry per vertex."""

    row_group: tuple[int, ...]
    col_group: tuple[int, ...]

    def __post_init__(self):
        rg = tuple(int(g) for g in self.row_group)
        cg = tuple(int(g) for g in self.col_group)
        for name, groups in (("row", rg), ("column", cg)):
            if not groups:
                raise InvalidPartitioningError(f"{name} grouping is empty")
            used = set(groups)
            if used != set(range(max(groups) + 1)):
                raise InvalidPartitioningError(f"{name} groups {sorted(set(range(max(groups) + 1)) - used)} are empty")
        object.__setattr__(self, "row_group", rg)
        object.__setattr__(self, "col_group", cg)

    @classmethod
    def trivial(cls, n: int) -> "Partitioning":
        return cls((0,) * n, (0,) * n)

    @property
    def k(self) -> int:
        return max(self.row_group) + 1

    @property
    def l(self) -> int:
        return max(self.col_group) + 1

    @property
    def n(self) -> int:
        return len(self.row_group)

    def row_members(self, p: int) -> list[int]:
        return [v for v, g in enumerate(self.row_group) if g == p]

    def col_members(self, q: int) -> list[int]:
        return [v for v, g in enumerate(self.col_group) if g == q]

    def canonical(self) -> "Partitioning":
        """Relabel groups in order of their lowest vertex."""
        return Partitioning(_relabel(self.row_group), _relabel(self.col_group))

    def permuted(self, perm: Sequence[int]) -> "Partitioning":
        """Grouping after vertex ``v`` is renamed ``perm[v]``."""
        rg = [0] * self.n
        cg = [0] * self.n
        for v, w in enumerate(perm):
            rg[w] = self.row_group[v]
            cg[w] = self.col_group[v]
        return Partitioning(tuple(rg), tuple(cg))


def _relabel(groups) -> tuple[int, ...]:
    mapping: dict[int, int] = {}
    return tuple(mapping.setdefault(int(g), len(mapping)) for g in groups)


class Cost(NamedTuple):
    header: float
    data: float

    @property
    def total(self) -> float:
        return self.header + self.data


def as_stack(matrices) -> np.ndarray:
    """(M, n, n) integer stack from one matrix or a sequence of matrices."""
    a = np.asarray(matrices)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    if a.size and not np.isin(a, (0, 1)).all():
        raise ValueError("adjacency matrices must be binary")
    return a.astype(np.int64)


def _indicator(groups, n_groups: int) -> np.ndarray:
    ind = np.zeros((len(groups), n_groups))
    ind[np.arange(len(groups)), groups] = 1.0
    return ind


def _pooled_cost(S: np.ndarray, M: int, rg, cg, k: int, l: int) -> Cost:
    n = S.shape[0]
    R = _indicator(np.asarray(rg), k)
    C = _indicator(np.asarray(cg), l)
    ones = R.T @ S @ C
    size = np.outer(R.sum(0), C.sum(0)) * M
    header = (lstar(k) + lstar(l) + log2_comb(n - 1, k - 1) + log2_comb(n - 1, l - 1)
              + float(_count_bits(size).sum()))
    return Cost(header, float(_data_bits(ones, size).sum()))


def _check(p: Partitioning, n: int) -> None:
    if p.n != n or len(p.col_group) != n:
        raise InvalidPartitioningError(f"partitioning covers {p.n} vertices, matrices have {n}")


def block_encoding_cost(matrices, p: Partitioning) -> Cost:
    """Header and data bits for the matrices under a shared grouping."""
    A = as_stack(matrices)
    _check(p, A.shape[1])
    return _pooled_cost(A.sum(axis=0), A.shape[0], p.row_group, p.col_group, p.k, p.l)


def segment_cost(matrices, p: Partitioning, delta_t: float = 3600.0) -> tuple[float, float]:
    """(total bits, bits per hour) of a run of consecutive snapshots."""
    A = as_stack(matrices)
    if A.shape[0] == 0:
        raise ValueError("segment has no snapshots")
    total = block_encoding_cost(A, p).total + lstar(A.shape[0])
    return total, total / (A.shape[0] * delta_t / 3600.0)


class _Search:
    """Local search state over a pooled count matrix ``S`` of ``M`` snapshots."""

    def __init__(self, S: np.ndarray, M: int, rg, cg):
        self.S = _as_int(S)
        self.M = M
        self.n = self.S.shape[0]
        self.rg = np.array(rg, dtype=int)
        self.cg = np.array(cg, dtype=int)
        _ensure_tables((self.n + 1) * self.n * M)  # join() also probes the own group at size + 1

    @property
    def k(self) -> int:
        return int(self.rg.max()) + 1

    @property
    def l(self) -> int:
        return int(self.cg.max()) + 1

    def cost(self) -> Cost:
        return _pooled_cost(self.S, self.M, self.rg, self.cg, self.k, self.l)

    def snapshot(self):
        return self.rg.copy(), self.cg.copy()

    def restore(self, state) -> None:
        self.rg, self.cg = state[0].copy(), state[1].copy()

    def _stats(self, axis: int):
        """Counts seen from one axis: rows on S, columns on S.T with roles swapped."""
        if axis == 0:
            S, own, other = self.S, self.rg, self.cg
        else:
            S, own, other = self.S.T, self.cg, self.rg
        n_own = int(own.max()) + 1
        n_other = int(other.max()) + 1
        per_vertex = _as_int(S @ _indicator(other, n_other))          # (n, n_other)
        ones = _as_int(_indicator(own, n_own).T @ per_vertex)         # (n_own, n_other)
        sizes = np.bincount(own, minlength=n_own)
        other_sizes = np.bincount(other, minlength=n_other) * self.M
        return S, own, per_vertex, ones, sizes, other_sizes

    def _sweep(self, axis: int) -> bool:
        _, own, per_vertex, ones, sizes, other_sizes = self._stats(axis)
        X, B = _XLOGX, _BITS

        def line_cost(o, sz):
            block = sz[..., None] * other_sizes
            return (X[block] - X[o] - X[block - o] + B[block]).sum(axis=-1)

        base = line_cost(ones, sizes)
        moved = False
        for x in range(len(own)):
            a = own[x]
            if sizes[a] == 1:
                continue
            rx = per_vertex[x]
            leave = line_cost(ones[a] - rx, sizes[a] - 1) - base[a]
            join = line_cost(ones + rx, sizes + 1) - base
            delta = leave + join
            delta[a] = 0.0
            b = int(np.argmin(delta))
            if delta[b] < -EPS:
                ones[a] -= rx
                ones[b] += rx
                sizes[a] -= 1
                sizes[b] += 1
                base[a] = line_cost(ones[a], sizes[a])
                base[b] = line_cost(ones[b], sizes[b])
                own[x] = b
                moved = True
        return moved

    def regroup(self) -> None:
        while True:
            moved_rows = self._sweep(0)
            moved_cols = self._sweep(1)
            if not (moved_rows or moved_cols):
                return

    def _split_candidates(self, axis: int):
        """Groups with >= 2 members ordered by average per-member data bits, highest first."""
        S, own, per_vertex, ones, sizes, other_sizes = self._stats(axis)
        n_own = len(sizes)
        group_bits = _data_bits(ones, sizes[:, None] * other_sizes).sum(axis=1)
        avg = group_bits / sizes
        order = sorted((g for g in range(n_own) if sizes[g] >= 2), key=lambda g: (-avg[g], g))
        for g in order:
            members = np.flatnonzero(own == g)
            block = sizes[g] * other_sizes
            dens = np.where(block > 0, ones[g] / np.maximum(block, 1), 0.0)
            code = -(per_vertex[members] * _safe_log2(dens)
                     + (other_sizes - per_vertex[members]) * _safe_log2(1 - dens)).sum(axis=1)
            seed = int(np.argmax(code))
            tried: set[tuple[int, ...]] = set()

            def fresh(sel):
                key = tuple(int(v) for v in members[sel])
                if 0 < len(key) < len(members) and key not in tried:
                    tried.add(key)
                    return True
                return False

            # members whose removal lowers the group's per-member cost
            rest_ones = ones[g] - per_vertex[members]
            rest_bits = _data_bits(rest_ones, (sizes[g] - 1) * other_sizes).sum(axis=1)
            rule = rest_bits / (sizes[g] - 1) < avg[g] - EPS
            if fresh(rule):
                yield g, members[rule]
            # two-seed split on raw profiles: the costliest member and the one least like it
            profiles = S[members]
            far = np.abs(profiles - profiles[seed]).sum(axis=1)
            if far.max() > 0:
                other_seed = int(np.argmax(far))
                near_other = np.abs(profiles - profiles[other_seed]).sum(axis=1)
                side = far < near_other
                if fresh(side):
                    yield g, members[side]
            single = np.zeros(len(members), dtype=bool)
            single[seed] = True
            if fresh(single):
                yield g, members[single]

    def grow(self, axis: int, lookahead: bool = True) -> bool:
        """Try to add one group on ``axis``; keep it only if the total cost drops.

        A row split often pays off only once the columns split too (and vice
        versa), so with ``lookahead`` a split that does not pay by itself is
        retried together with one split on the other axis.
        """
        before = self.cost().total
        saved = self.snapshot()
        for _, leaving in list(self._split_candidates(axis)):
            own = self.rg if axis == 0 else self.cg
            own[leaving] = int(own.max()) + 1
            self.regroup()
            if self.cost().total < before - EPS:
                return True
            if lookahead:
                mid = self.snapshot()
                if self.grow(1 - axis, lookahead=False) and self.cost().total < before - EPS:
                    return True
                self.restore(mid)
            self.restore(saved)
        return False


    def merge(self, axis: int) -> bool:
        """Try joining two groups on ``axis``; keep the first join that lowers the total cost."""
        before = self.cost().total
        saved = self.snapshot()
        n_groups = self.k if axis == 0 else self.l
        for a in range(n_groups):
            for b in range(a + 1, n_groups):
                own = self.rg if axis == 0 else self.cg
                own[own == b] = a
                own[own > b] -= 1
                self.regroup()
                if self.cost().total < before - EPS:
                    return True
                self.restore(saved)
        return False


def _safe_log2(p):
    with np.errstate(divide="ignore"):
        return np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)


def _search_pooled(S: np.ndarray, M: int, init: Partitioning | None) -> Partitioning:
    n = S.shape[0]
    init = init or Partitioning.trivial(n)
    _check(init, n)
    search = _Search(S, M, init.row_group, init.col_group)
    start_cost = search.cost().total
    search.regroup()
    while True:
        grew_rows = search.grow(0, lookahead=False)
        grew_cols = search.grow(1, lookahead=False)
        if grew_rows or grew_cols:
            continue
        if not (search.grow(0) or search.grow(1) or search.merge(0) or search.merge(1)):
            break
    found = Partitioning(tuple(search.rg), tuple(search.cg)).canonical()
    if _pooled_cost(S, M, found.row_group, found.col_group, found.k, found.l).total > start_cost + EPS:
        return init
    return found


def search_partitions(matrices, init: Partitioning | None = None) -> Partitioning:
    """Row/column grouping that locally minimises the segment's encoding cost.

    Alternates single-vertex moves (rows, then columns, each in index
    order, taking the best strictly improving target group) until stable,
    then tries to add a row group and a column group by splitting off the
    members that raise their group's per-member cost the most, and when no
    split helps, to join two groups. A change is kept only if the total
    cost strictly drops. Never returns a grouping
    costlier than ``init`` (default: one row group and one column group).
    """
    A = as_stack(matrices)
    return _search_pooled(A.sum(axis=0), A.shape[0], init)


@dataclass(frozen=True)
class SegmentModel:
    first_slice: int
    last_slice: int
    partitioning: Partitioning
    total_cost: float
    cost_per_hour: float
    header_bits: float = 0.0
    data_bits: float = 0.0

    def __post_init__(self):
        if self.first_slice > self.last_slice:
            raise ValueError("first_slice after last_slice")

    @property
    def length(self) -> int:
        return self.last_slice - self.first_slice + 1


@dataclass(frozen=True)
class ChangePointReport:
    change_points: tuple[int, ...]
    segments: tuple[SegmentModel, ...]
    n: int = 0
    delta_t: float = 3600.0

    def __post_init__(self):
        cps = tuple(int(c) for c in self.change_points)
        segs = tuple(self.segments)
        if len(segs) != len(cps) + 1:
            raise ValueError("need exactly one more segment than change points")
        if [s.first_slice for s in segs[1:]] != list(cps):
            raise ValueError("segment starts must coincide with change points")
        for a, b in zip(segs, segs[1:]):
            if b.first_slice != a.last_slice + 1:
                raise ValueError("segments must tile the slice axis")
        if segs[0].first_slice != 0:
            raise ValueError("first segment must start at slice 0")
        object.__setattr__(self, "change_points", cps)
        object.__setattr__(self, "segments", segs)

    @property
    def T(self) -> int:
        return self.segments[-1].last_slice + 1

    @property
    def total_cost(self) -> float:
        return math.fsum(s.total_cost for s in self.segments)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "T": self.T,
            "delta_t_s": self.delta_t,
            "change_points": list(self.change_points),
            "total_cost_bits": self.total_cost,
            "segments": [
                {
                    "first_slice": s.first_slice,
                    "last_slice": s.last_slice,
                    "k": s.partitioning.k,
                    "l": s.partitioning.l,
                    "row_groups": list(s.partitioning.row_group),
                    "col_groups": list(s.partitioning.col_group),
                    "total_cost_bits": s.total_cost,
                    "cost_per_hour": s.cost_per_hour,
                    "header_bits": s.header_bits,
                    "data_bits": s.data_bits,
                }
                for s in self.segments
            ],
        }


def write_report(report: ChangePointReport, fp: IO[str]) -> None:
    json.dump(report.to_dict(), fp, indent=2, sort_keys=True)
    fp.write("\n")


def read_report(fp: IO[str]) -> ChangePointReport:
    doc = json.load(fp)
    segs = tuple(
        SegmentModel(s["first_slice"], s["last_slice"],
                     Partitioning(tuple(s["row_groups"]), tuple(s["col_groups"])),
                     s["total_cost_bits"], s["cost_per_hour"],
                     s.get("header_bits", 0.0), s.get("data_bits", 0.0))
        for s in doc["segments"])
    return ChangePointReport(tuple(doc["change_points"]), segs, doc.get("n", 0), doc.get("delta_t_s", 3600.0))


def _series_stack(series, delta_t):
    if hasattr(series, "adjacency") and hasattr(series, "axis"):
        return as_stack(series.adjacency()), float(series.axis.delta_t if delta_t is None else delta_t)
    return as_stack(series), 3600.0 if delta_t is None else float(delta_t)


def _model(A: np.ndarray, first: int, last: int, p: Partitioning, delta_t: float) -> SegmentModel:
    run = A[first:last + 1]
    cost = block_encoding_cost(run, p)
    total = cost.total + lstar(len(run))
    return SegmentModel(first, last, p, total, total / (len(run) * delta_t / 3600.0),
                        cost.header + lstar(len(run)), cost.data)


def _seg_total(S: np.ndarray, M: int, p: Partitioning) -> float:
    return _pooled_cost(S, M, p.row_group, p.col_group, p.k, p.l).total + lstar(M)


def detect_change_points(series, delta_t: float | None = None, *, merge: bool = True) -> ChangePointReport:
    """Greedy streaming segmentation of a snapshot series.

    Each new snapshot is either absorbed into the current segment (grouping
    re-optimised from the current one) or starts a new segment (grouping
    searched from scratch), whichever encodes cheaper; ties absorb.

    The streaming pass only ever compares the open segment with one new
    snapshot, so a run of noisy snapshots can split off even though it would
    be cheaper as part of its neighbour. With ``merge`` (default) adjacent
    segments are then joined, best saving first, while a join strictly lowers
    the total cost.

    ``series`` is a :class:`~trajflow.flowgraph.GraphSeries` or a (T, n, n)
    binary array; ``delta_t`` (seconds per slice) defaults to the series'
    slice width, or one hour for raw arrays.
    """
    A, delta_t = _series_stack(series, delta_t)
    T, n = A.shape[0], A.shape[1]
    if T == 0:
        raise ValueError("series has no snapshots")

    bounds = []
    start = 0
    S = A[0].copy()
    M = 1
    p = _search_pooled(S, M, None)
    current = _seg_total(S, M, p)
    for t in range(1, T):
        S_ext = S + A[t]
        p_ext = _search_pooled(S_ext, M + 1, p)
        absorb = _seg_total(S_ext, M + 1, p_ext)
        p_new = _search_pooled(A[t], 1, None)
        split = current + _seg_total(A[t], 1, p_new)
        if split < absorb - EPS:
            bounds.append((start, t - 1, p))
            start, S, M, p = t, A[t].copy(), 1, p_new
            current = _seg_total(S, M, p)
        else:
            S, M, p, current = S_ext, M + 1, p_ext, absorb
    bounds.append((start, T - 1, p))
    if merge:
        bounds = _merge_segments(A, bounds)

    segments = []
    for first, last, p in bounds:
        S = A[first:last + 1].sum(axis=0)
        p = _search_pooled(S, last - first + 1, p)
        segments.append(_model(A, first, last, p, delta_t))
    return ChangePointReport(tuple(b[0] for b in bounds[1:]), tuple(segments), n, delta_t)


def _merge_segments(A: np.ndarray, bounds: list) -> list:
    def fit(first, last, init):
        S = A[first:last + 1].sum(axis=0)
        M = last - first + 1
        p = _search_pooled(S, M, init)
        return p, _seg_total(S, M, p)

    segs = []
    for first, last, p in bounds:
        p, c = fit(first, last, p)
        segs.append((first, last, p, c))
    cache: dict = {}

    def joined(a, b):
        key = (a[0], b[1])
        if key not in cache:
            # start the joint search from either side's grouping, keep the cheaper
            cache[key] = min((fit(a[0], b[1], a[2]), fit(a[0], b[1], b[2])), key=lambda r: r[1])
        return cache[key]

    while len(segs) > 1:
        best = None
        for i in range(len(segs) - 1):
            pm, cm = joined(segs[i], segs[i + 1])
            gain = segs[i][3] + segs[i + 1][3] - cm
            if gain > EPS and (best is None or gain > best[0]):
                best = (gain, i, (segs[i][0], segs[i + 1][1], pm, cm))
        if best is None:
            break
        _, i, seg = best
        segs[i:i + 2] = [seg]
    return [(f, l, p) for f, l, p, _ in segs]


@functools.lru_cache(maxsize=None)
def set_partitions(n: int) -> tuple[tuple[int, ...], ...]:
    """Every partition of ``n`` items as a restricted growth string, in lexicographic order."""
    out: list[tuple[int, ...]] = []

    def rec(prefix: list[int], m: int) -> None:
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for g in range(m + 1):
            rec(prefix + [g], m + 1 if g == m else m)

    if n:
        rec([0], 1)
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _enumeration_tables(n: int):
    parts = set_partitions(n)
    ind = np.zeros((len(parts), n, n))
    for a, rgs in enumerate(parts):
        ind[a, np.arange(n), rgs] = 1.0
    sizes = ind.sum(axis=1)
    groups = np.array([max(rgs) + 1 for rgs in parts])
    head = np.array([lstar(g) + log2_comb(n - 1, g - 1) for g in groups])
    return parts, ind, sizes, head


def exhaustive_partition(matrices) -> tuple[Partitioning, float]:
    """Cheapest grouping by enumerating every row and column set partition (n <= 6)."""
    A = as_stack(matrices)
    n = A.shape[1]
    if n > ORACLE_MAX_N:
        raise OracleLimitError(f"exhaustive enumeration limited to n <= {ORACLE_MAX_N}, got {n}")
    return _exhaustive_pooled(A.sum(axis=0), A.shape[0])


def _exhaustive_pooled(S: np.ndarray, M: int) -> tuple[Partitioning, float]:
    parts, ind, sizes, head = _enumeration_tables(S.shape[0])
    ones = np.einsum("aik,ij,bjl->abkl", ind, S.astype(float), ind, optimize=True)
    size = np.einsum("ak,bl->abkl", sizes, sizes) * M
    blocks = np.where(size > 0, _count_bits(size) + _data_bits(ones, size), 0.0).sum(axis=(2, 3))
    total = blocks + head[:, None] + head[None, :]
    a, b = np.unravel_index(int(np.argmin(total)), total.shape)
    p = Partitioning(parts[a], parts[b])
    # re-evaluate through the reference path so the value matches block_encoding_cost exactly
    return p, _pooled_cost(S, M, p.row_group, p.col_group, p.k, p.l).total


def brute_force_segmentation(series, max_n: int = ORACLE_MAX_N, max_T: int = ORACLE_MAX_T,
                             delta_t: float | None = None) -> ChangePointReport:
    """Exact minimum-cost segmentation: dynamic programming over boundaries with
    exhaustive groupings per segment. Desk-scale only."""
    A, delta_t = _series_stack(series, delta_t)
    T, n = A.shape[0], A.shape[1]
    max_n = min(max_n, ORACLE_MAX_N)
    max_T = min(max_T, ORACLE_MAX_T)
    if n > max_n or T > max_T:
        raise OracleLimitError(f"oracle limited to n <= {max_n}, T <= {max_T}; got n={n}, T={T}")
    if T == 0:
        raise ValueError("series has no snapshots")

    csum = np.concatenate([np.zeros((1, n, n), dtype=np.int64), np.cumsum(A, axis=0)])
    seg: dict[tuple[int, int], tuple[Partitioning, float]] = {}
    for i in range(T):
        for j in range(i + 1, T + 1):
            p, cost = _exhaustive_pooled(csum[j] - csum[i], j - i)
            seg[i, j] = (p, cost + lstar(j - i))

    best = [0.0] + [math.inf] * T
    back = [0] * (T + 1)
    for j in range(1, T + 1):
        for i in range(j):
            c = best[i] + seg[i, j][1]
            if c < best[j] - EPS:
                best[j], back[j] = c, i
    cuts = []
    j = T
    while j > 0:
        cuts.append((back[j], j))
        j = back[j]
    cuts.reverse()
    segments = tuple(_model(A, i, j - 1, seg[i, j][0], delta_t) for i, j in cuts)
    return ChangePointReport(tuple(i for i, _ in cuts[1:]), segments, n, delta_t)


class Block(NamedTuple):
    row_group: int
    col_group: int
    rows: tuple[int, ...]
    cols: tuple[int, ...]
    ones: int
    size: int

    @property
    def density(self) -> float:
        return self.ones / self.size if self.size else 0.0

    @property
    def shape(self) -> str:
        if len(self.cols) == 1 and len(self.rows) > 1:
            return "many-to-one"
        if len(self.rows) == 1 and len(self.cols) > 1:
            return "one-to-many"
        return "block"


def blocks(matrices, p: Partitioning) -> list[Block]:
    """Pooled ones count and size of every (row group, column group) block."""
    A = as_stack(matrices)
    _check(p, A.shape[1])
    S = A.sum(axis=0)
    out = []
    for rp in range(p.k):
        rows = p.row_members(rp)
        for cq in range(p.l):
            cols = p.col_members(cq)
            ones = int(S[np.ix_(rows, cols)].sum())
            out.append(Block(rp, cq, tuple(rows), tuple(cols), ones, len(rows) * len(cols) * A.shape[0]))
    return out


def format_partitioned_matrix(matrices, p: Partitioning) -> str:
    """Text grid of the pooled matrix with rows and columns ordered by group.

    Entries are the number of snapshots carrying the edge ('.' for none,
    '+' above 9); '|' and '-' separate groups.
    """
    A = as_stack(matrices)
    _check(p, A.shape[1])
    S = A.sum(axis=0)
    row_order = sorted(range(p.n), key=lambda v: (p.row_group[v], v))
    col_order = sorted(range(p.n), key=lambda v: (p.col_group[v], v))
    width = len(str(p.n - 1))

    def glyph(c: int) -> str:
        return "." if c == 0 else (str(c) if c < 10 else "+")

    col_cells = []
    for idx, v in enumerate(col_order):
        if idx and p.col_group[v] != p.col_group[col_order[idx - 1]]:
            col_cells.append("|")
        col_cells.append(v)
    lines = [f"# k={p.k} l={p.l} slices={A.shape[0]}"]
    for idx, r in enumerate(row_order):
        if idx and p.row_group[r] != p.row_group[row_order[idx - 1]]:
            lines.append(" " * (width + 1) + "".join("+" if c == "|" else "-" for c in col_cells))
        body = "".join("|" if c == "|" else glyph(int(S[r, c])) for c in col_cells)
        lines.append(f"{r:>{width}} {body}")
    return "\n".join(lines) + "\n"


def segment_matrices(series, report: ChangePointReport) -> Iterable[tuple[SegmentModel, np.ndarray]]:
    A, _ = _series_stack(series, None)
    for s in report.segments:
        yield s, A[s.first_slice:s.last_slice + 1]
