"""Per-feature discretization into half-open intervals.

Two strategies produce the base bins of a feature:

* ``kmeans``: exact one-dimensional k-means for each candidate K, the K with
  the smallest BIC wins, and cut points are midpoints between adjacent
  centroids.
* ``tercile``: two order-statistic cut points giving roughly equal counts.

Either way, every run of two or more consecutive base bins (short of the full
line) is added as a merged bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

BIC_SSE_FLOOR = 1e-12
DEFAULT_K_CANDIDATES = range(2, 7)
STRATEGIES = ("kmeans", "tercile")


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open interval ``[lower, upper)``; ``lower`` may be -inf, ``upper`` may be +inf."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper})")

    def contains(self, x) -> np.ndarray | bool:
        return (x >= self.lower) & (x < self.upper)

    @property
    def is_full(self) -> bool:
        return math.isinf(self.lower) and math.isinf(self.upper)

    def to_json(self) -> dict:
        return {
            "lower": None if math.isinf(self.lower) else self.lower,
            "upper": None if math.isinf(self.upper) else self.upper,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Interval":
        lo = -math.inf if d["lower"] is None else float(d["lower"])
        hi = math.inf if d["upper"] is None else float(d["upper"])
        return cls(lo, hi)


FULL_LINE = Interval(-math.inf, math.inf)


@dataclass(frozen=True)
class BinSet:
    feature_index: int
    base: tuple[Interval, ...]
    merged: tuple[Interval, ...]
    k_selected: Optional[int] = None

    @property
    def bins(self) -> tuple[Interval, ...]:
        """Base bins followed by merged bins, the node order of a feature layer."""
        return self.base + self.merged

    def to_json(self) -> dict:
        return {
            "feature": self.feature_index,
            "base": [b.to_json() for b in self.base],
            "merged": [b.to_json() for b in self.merged],
            "k_selected": self.k_selected,
        }

    @classmethod
    def from_json(cls, d: dict) -> "BinSet":
        return cls(
            int(d["feature"]),
            tuple(Interval.from_json(b) for b in d["base"]),
            tuple(Interval.from_json(b) for b in d["merged"]),
            d.get("k_selected"),
        )


@dataclass(frozen=True)
class KMeans1DResult:
    centroids: np.ndarray
    assignment: np.ndarray
    sse: float

    @property
    def k(self) -> int:
        return len(self.centroids)


def _segment_sse(values: np.ndarray) -> float:
    if len(values) == 0:
        return 0.0
    return float(np.sum((values - values.mean()) ** 2))


def kmeans_1d(values: Sequence[float], k: int) -> KMeans1DResult:
    """Globally optimal k-means on a line via dynamic programming.

    Optimal 1-D clusters are contiguous runs of the sorted values, so the DP
    runs over distinct values weighted by multiplicity; equal values always
    share a cluster. Ties between split points resolve to the leftmost split.
    """
    x = np.asarray(values, dtype=float).ravel()
    if k < 1:
        raise ValueError("k must be positive")
    uniq, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    m = len(uniq)
    if k > m:
        raise ValueError(f"k={k} exceeds the number of distinct values ({m})")

    # centre before prefix sums to limit cancellation
    shift = float(np.mean(uniq))
    u = uniq - shift
    w = counts.astype(float)
    cw = np.concatenate(([0.0], np.cumsum(w)))
    cs = np.concatenate(([0.0], np.cumsum(w * u)))
    cq = np.concatenate(([0.0], np.cumsum(w * u * u)))

    def seg_cost(i: np.ndarray, j: int) -> np.ndarray:
        # cost of distinct values i..j-1 (vector over i)
        n = cw[j] - cw[i]
        s = cs[j] - cs[i]
        return np.maximum(cq[j] - cq[i] - s * s / n, 0.0)

    inf = math.inf
    cost = np.full((k + 1, m + 1), inf)
    split = np.zeros((k + 1, m + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    for c in range(1, k + 1):
        for j in range(c, m + 1):
            i = np.arange(c - 1, j)
            total = cost[c - 1, i] + seg_cost(i, j)
            best = int(np.argmin(total))
            cost[c, j] = total[best]
            split[c, j] = i[best]

    bounds = [m]
    for c in range(k, 0, -1):
        bounds.append(int(split[c, bounds[-1]]))
    bounds.reverse()  # bounds[c]..bounds[c+1] is cluster c in distinct-value space

    group_of_unique = np.empty(m, dtype=np.int64)
    centroids = np.empty(k)
    for c in range(k):
        lo, hi = bounds[c], bounds[c + 1]
        group_of_unique[lo:hi] = c
        centroids[c] = np.sum(uniq[lo:hi] * counts[lo:hi]) / np.sum(counts[lo:hi])
    assignment = group_of_unique[inverse]
    sse = float(sum(_segment_sse(x[assignment == c]) for c in range(k)))
    return KMeans1DResult(centroids, assignment, sse)


def bic(n: int, sse: float, k: int) -> float:
    """``n log(SSE/n) + k log(n)``, with SSE floored so zero-error fits stay finite."""
    return n * math.log(max(sse, BIC_SSE_FLOOR) / n) + k * math.log(n)


def select_k(values: Sequence[float], k_candidates: Iterable[int] = DEFAULT_K_CANDIDATES):
    """Pick the K with minimal BIC; returns ``(k, KMeans1DResult)``.

    Candidates above the distinct-value count are skipped. Ties go to the
    smaller K.
    """
    x = np.asarray(values, dtype=float).ravel()
    n_distinct = len(np.unique(x))
    cands = sorted(set(int(k) for k in k_candidates))
    if not cands:
        raise ValueError("k_candidates is empty")
    usable = [k for k in cands if 1 <= k <= n_distinct]
    if not usable:
        k = max(n_distinct, 1)
        return k, kmeans_1d(x, k)
    best = None
    for k in usable:
        res = kmeans_1d(x, k)
        score = bic(len(x), res.sse, k)
        if best is None or score < best[0]:
            best = (score, k, res)
    return best[1], best[2]


def boundaries(centroids: Sequence[float]) -> np.ndarray:
    c = np.asarray(centroids, dtype=float)
    if len(c) < 2:
        raise ValueError("need at least two centroids for a boundary")
    if np.any(np.diff(c) <= 0):
        raise ValueError("centroids must be strictly increasing")
    return (c[:-1] + c[1:]) / 2.0


def intervals_from_cuts(cuts: Sequence[float]) -> tuple[Interval, ...]:
    """``(-inf, c1), [c1, c2), ..., [c_last, inf)``."""
    edges = [-math.inf, *(float(c) for c in cuts), math.inf]
    return tuple(Interval(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))


def tercile_bins(values: Sequence[float]) -> tuple[Interval, ...]:
    """Tercile base bins using sorted order statistics at floor(N/3) and floor(2N/3).

    A cut point equal to the minimum would leave the first bin empty, and equal
    cut points would leave the middle bin empty; both are dropped, so a column
    can degrade to two bins or one.
    """
    x = np.sort(np.asarray(values, dtype=float).ravel())
    n = len(x)
    if n == 0:
        return (FULL_LINE,)
    q1, q2 = x[n // 3], x[(2 * n) // 3]
    cuts = sorted({float(q) for q in (q1, q2) if q > x[0]})
    return intervals_from_cuts(cuts)


def merge_adjacent(base: Sequence[Interval]) -> tuple[Interval, ...]:
    """Every union of >= 2 consecutive base bins except the full line.

    Ordered by run length, then by start position.
    """
    b = list(base)
    out = []
    for length in range(2, len(b)):
        for start in range(0, len(b) - length + 1):
            out.append(Interval(b[start].lower, b[start + length - 1].upper))
    return tuple(out)


def discretize_feature(
    values: Sequence[float],
    strategy: str = "kmeans",
    k_candidates: Iterable[int] = DEFAULT_K_CANDIDATES,
    feature_index: int = 0,
) -> BinSet:
    x = np.asarray(values, dtype=float).ravel()
    if strategy == "kmeans":
        k, res = select_k(x, k_candidates)
        base = intervals_from_cuts(boundaries(res.centroids)) if k >= 2 else (FULL_LINE,)
        return BinSet(feature_index, base, merge_adjacent(base), k)
    if strategy == "tercile":
        base = tercile_bins(x)
        return BinSet(feature_index, base, merge_adjacent(base), None)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def discretize(points: np.ndarray, strategy: str = "kmeans", k_candidates=DEFAULT_K_CANDIDATES) -> list[BinSet]:
    """Discretize every column of an N x p matrix."""
    pts = np.asarray(points, dtype=float)
    ks = list(k_candidates)
    return [discretize_feature(pts[:, f], strategy, ks, f) for f in range(pts.shape[1])]
