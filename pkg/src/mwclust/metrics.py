"""Cluster validity: silhouette and Dunn (internal), Rand and adjusted Rand (external).

Points labelled ``UNASSIGNED`` are left out of every metric. Distances are
Euclidean on whatever coordinates are passed in (normalized features in the
pipeline).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .dataset import UNASSIGNED


class MetricError(ValueError):
    pass


def _assigned(points, labels):
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels)
    if len(x) != len(y):
        raise MetricError(f"{len(x)} points but {len(y)} labels")
    keep = y != UNASSIGNED
    return x[keep], y[keep]


def _dense(labels) -> tuple[np.ndarray, int]:
    _, ids = np.unique(np.asarray(labels), return_inverse=True)
    ids = ids.ravel()
    return ids, int(ids.max()) + 1 if len(ids) else 0


def silhouette_samples(points, labels) -> np.ndarray:
    """Per-point ``s(i) = (b - a) / max(a, b)``; members of singleton clusters get 0.

    Only assigned points are returned, in their original order.
    """
    x, y = _assigned(points, labels)
    ids, k = _dense(y)
    if k < 2:
        raise MetricError(f"silhouette needs at least 2 clusters, got {k}")
    dist = squareform(pdist(x))
    onehot = np.zeros((len(ids), k))
    onehot[np.arange(len(ids)), ids] = 1.0
    sizes = onehot.sum(axis=0)
    sums = dist @ onehot  # summed distance from each point to each cluster
    own = sizes[ids]
    a = np.where(own > 1, sums[np.arange(len(ids)), ids] / np.maximum(own - 1, 1), 0.0)
    means = sums / sizes
    means[np.arange(len(ids)), ids] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[own == 1] = 0.0
    return s


def silhouette(points, labels) -> float:
    """Mean silhouette over assigned points."""
    return float(np.mean(silhouette_samples(points, labels)))


def dunn(points, labels) -> Optional[float]:
    """Smallest single-linkage gap between clusters over the largest cluster diameter.

    Returns None (undefined) when every cluster has zero diameter.
    """
    x, y = _assigned(points, labels)
    ids, k = _dense(y)
    if k < 2:
        raise MetricError(f"Dunn index needs at least 2 clusters, got {k}")
    groups = [x[ids == c] for c in range(k)]
    diameter = max(float(pdist(g).max()) if len(g) > 1 else 0.0 for g in groups)
    if diameter == 0.0:
        return None
    gap = min(
        float(cdist(groups[i], groups[j]).min()) for i in range(k) for j in range(i + 1, k)
    )
    return gap / diameter


def contingency(pred, truth) -> np.ndarray:
    p = np.asarray(pred)
    t = np.asarray(truth)
    if len(p) != len(t):
        raise MetricError(f"label vectors differ in length ({len(p)} vs {len(t)})")
    pi, kp = _dense(p)
    ti, kt = _dense(t)
    table = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def _comb2(v):
    v = np.asarray(v, dtype=np.int64)
    return v * (v - 1) // 2


def pair_counts(pred, truth) -> tuple[int, int, int, int]:
    """``(a, b, c, d)``: pairs together in both, only in pred, only in truth, in neither."""
    table = contingency(pred, truth)
    n = int(table.sum())
    if n < 2:
        raise MetricError("need at least 2 points")
    same_both = int(_comb2(table).sum())
    same_pred = int(_comb2(table.sum(axis=1)).sum())
    same_truth = int(_comb2(table.sum(axis=0)).sum())
    total = n * (n - 1) // 2
    a = same_both
    b = same_pred - same_both
    c = same_truth - same_both
    return a, b, c, total - a - b - c


def rand_index(pred, truth) -> float:
    a, b, c, d = pair_counts(pred, truth)
    return (a + d) / (a + b + c + d)


def ari(pred, truth) -> float:
    """Adjusted Rand index from the contingency table.

    When the expected and maximal index coincide (e.g. both partitions are a
    single cluster, or both all singletons) the result is 1 for identical
    partitions and 0 otherwise.
    """
    table = contingency(pred, truth)
    n = int(table.sum())
    if n < 2:
        raise MetricError("need at least 2 points")
    index = int(_comb2(table).sum())
    sum_rows = int(_comb2(table.sum(axis=1)).sum())
    sum_cols = int(_comb2(table.sum(axis=0)).sum())
    total = n * (n - 1) // 2
    # (index - expected) / (max - expected), scaled by 2 * total to stay in integers
    num = 2 * index * total - 2 * sum_rows * sum_cols
    den = (sum_rows + sum_cols) * total - 2 * sum_rows * sum_cols
    if den == 0:
        identical = table.shape[0] == table.shape[1] and np.count_nonzero(table) == table.shape[0]
        return 1.0 if identical else 0.0
    return num / den


@dataclass(frozen=True)
class MetricReport:
    n_evaluated: int
    n_clusters: int
    silhouette: Optional[float]
    dunn: Optional[float]
    ari: Optional[float] = None
    rand_index: Optional[float] = None

    def to_json(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [
            ("points evaluated", str(self.n_evaluated)),
            ("clusters", str(self.n_clusters)),
            ("silhouette", _fmt(self.silhouette)),
            ("dunn", _fmt(self.dunn)),
            ("ari", _fmt(self.ari)),
            ("rand index", _fmt(self.rand_index)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v:>10}" for k, v in rows)


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def evaluate(points, labels, truth=None) -> MetricReport:
    """All metrics at once; internal ones are None when fewer than 2 clusters are assigned."""
    y = np.asarray(labels)
    keep = y != UNASSIGNED
    k = len(np.unique(y[keep]))
    sil = dunn_value = None
    if k >= 2:
        sil = silhouette(points, y)
        dunn_value = dunn(points, y)
    ari_value = ri = None
    if truth is not None:
        t = np.asarray(truth)
        if len(t) != len(y):
            raise MetricError(f"{len(y)} labels but {len(t)} ground-truth entries")
        if keep.sum() >= 2:
            ari_value = ari(y[keep], t[keep])
            ri = rand_index(y[keep], t[keep])
    return MetricReport(int(keep.sum()), k, sil, dunn_value, ari_value, ri)
