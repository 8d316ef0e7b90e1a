"""Layered feature graph, candidate-path enumeration and redundancy pruning.

Coverage sets are Python ints used as packed bitsets: bit ``i`` is point ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset
from .discretize import BinSet, Interval

DEFAULT_PATH_LIMIT = 5_000_000
DEFAULT_MAX_DEPTH = 3


class PathLimitExceeded(RuntimeError):
    pass


def mask_from_bool(flags) -> int:
    flags = np.asarray(flags, dtype=bool)
    return int.from_bytes(np.packbits(flags, bitorder="little").tobytes(), "little")


def bool_from_mask(mask: int, n: int) -> np.ndarray:
    raw = np.frombuffer(mask.to_bytes((n + 7) // 8, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little", count=n).astype(bool)


def masks_to_matrix(masks: Sequence[int], n: int) -> np.ndarray:
    """Stack coverage bitsets into a ``len(masks) x n`` uint8 0/1 matrix."""
    nb = max(1, (n + 7) // 8)
    if not masks:
        return np.zeros((0, n), dtype=np.uint8)
    raw = np.frombuffer(b"".join(m.to_bytes(nb, "little") for m in masks), dtype=np.uint8)
    return np.unpackbits(raw.reshape(len(masks), nb), axis=1, bitorder="little")[:, :n]


def indices_from_mask(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


@dataclass(frozen=True)
class FeatureGraph:
    """One layer per feature: its bins (base then merged) followed by a Skip node.

    Edges are implicit: every node of a layer connects to every node of the next.
    """

    layers: tuple[BinSet, ...]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def layer_sizes(self) -> list[int]:
        """Node counts per layer, Skip included."""
        return [len(bs.bins) + 1 for bs in self.layers]

    def skip_index(self, layer: int) -> int:
        return len(self.layers[layer].bins)


def build_graph(binsets: Sequence[BinSet]) -> FeatureGraph:
    layers = tuple(sorted(binsets, key=lambda b: b.feature_index))
    if [b.feature_index for b in layers] != list(range(len(layers))):
        raise ValueError("need exactly one BinSet per feature, indexed 0..p-1")
    return FeatureGraph(layers)


@dataclass(eq=False)
class Path:
    """A conjunction of (feature, interval) conditions and the points satisfying it.

    ``nodes`` holds the chosen node index for each condition, aligned with
    ``conditions``; together with the feature indices it identifies the path.
    """

    conditions: tuple[tuple[int, Interval], ...]
    nodes: tuple[int, ...]
    coverage: int
    n_covered: int
    cost: Optional[float] = None
    order: int = field(default=0, compare=False)

    @property
    def key(self) -> tuple[tuple[int, int], ...]:
        return tuple((f, b) for (f, _), b in zip(self.conditions, self.nodes))

    @property
    def depth(self) -> int:
        return len(self.conditions)

    def covers(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership of each row of ``points`` (evaluated from the conditions)."""
        pts = np.atleast_2d(points)
        ok = np.ones(len(pts), dtype=bool)
        for f, iv in self.conditions:
            ok &= iv.contains(pts[:, f])
        return ok

    def to_json(self) -> dict:
        return {
            "conditions": [{"feature": f, **iv.to_json()} for f, iv in self.conditions],
            "n_covered": self.n_covered,
            "cost": self.cost,
        }


def node_masks(graph: FeatureGraph, data: Dataset) -> list[list[int]]:
    """Coverage bitset of every bin node, per layer."""
    out = []
    for bs in graph.layers:
        col = data.points[:, bs.feature_index]
        out.append([mask_from_bool(iv.contains(col)) for iv in bs.bins])
    return out


def _enumerate(
    graph: FeatureGraph,
    data: Dataset,
    max_depth: int,
    drop_empty: bool,
    path_limit: int,
) -> list[tuple[tuple[tuple[int, int], ...], int]]:
    """``(key, coverage)`` records in enumeration order; see :func:`enumerate_paths`."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    masks = node_masks(graph, data)
    p = graph.n_layers
    out: list = []

    def visit(f: int, key: tuple, mask: int) -> None:
        if f == p:
            if key and (mask or not drop_empty):
                if len(out) >= path_limit:
                    raise PathLimitExceeded(
                        f"more than {path_limit} candidate paths; raise the path limit or lower max_depth"
                    )
                out.append((key, mask))
            return
        if len(key) < max_depth:
            for b, node_mask in enumerate(masks[f]):
                sub = mask & node_mask
                if drop_empty and not sub:
                    continue
                visit(f + 1, key + ((f, b),), sub)
        visit(f + 1, key, mask)

    visit(0, (), (1 << data.n_points) - 1)
    return out


def _materialize(graph: FeatureGraph, records) -> list[Path]:
    bins = [bs.bins for bs in graph.layers]
    out = []
    for order, (key, mask) in enumerate(records):
        conds = tuple((f, bins[f][b]) for f, b in key)
        out.append(Path(conds, tuple(b for _, b in key), mask, mask.bit_count(), order=order))
    return out


def enumerate_paths(
    graph: FeatureGraph,
    data: Dataset,
    max_depth: int = DEFAULT_MAX_DEPTH,
    drop_empty: bool = True,
    path_limit: int = DEFAULT_PATH_LIMIT,
) -> list[Path]:
    """Depth-first Source-to-Sink enumeration.

    Paths use between 1 and ``max_depth`` non-Skip nodes. Order is
    lexicographic in the per-layer node indices, Skip being the last node of
    each layer.
    """
    return _materialize(graph, _enumerate(graph, data, max_depth, drop_empty, path_limit))


def _prune(records) -> list[int]:
    """Positions of the records surviving both redundancy criteria."""
    cov_by_key = dict(records)
    single = {k[0]: c for k, c in cov_by_key.items() if len(k) == 1}

    def coverage_of(key) -> Optional[int]:
        got = cov_by_key.get(key)
        if got is not None:
            return got
        acc = -1
        for cond in key:
            m = single.get(cond)
            if m is None:
                return None
            acc &= m
        return acc

    minimal = []
    for pos, (key, cov) in enumerate(records):
        depth = len(key)
        removable = False
        if depth >= 2:
            for drop in range(depth):
                if coverage_of(key[:drop] + key[drop + 1:]) == cov:
                    removable = True
                    break
        if not removable:
            minimal.append(pos)

    keep: dict[int, int] = {}
    for pos in minimal:
        key, cov = records[pos]
        cur = keep.get(cov)
        if cur is None or len(key) < len(records[cur][0]):
            keep[cov] = pos
    chosen = set(keep.values())
    return [pos for pos in minimal if pos in chosen]


def prune_redundant(paths: Sequence[Path]) -> list[Path]:
    """Drop paths with a removable condition, then keep one path per coverage set.

    A condition is removable when the path without it (itself a candidate,
    i.e. with at least one condition left) covers the same points. Among
    equal coverages the path with fewest conditions, then the earliest one,
    survives. Enumeration order is preserved.
    """
    records = [(pt.key, pt.coverage) for pt in paths]
    return [paths[pos] for pos in _prune(records)]


def path_cost(path: Path, data: Dataset) -> float:
    """Within-cluster sum of squared Euclidean distances to the mean of the covered points."""
    if path.n_covered == 0:
        raise ValueError("path covers no points")
    pts = data.points[bool_from_mask(path.coverage, data.n_points)]
    if np.all(pts == pts[0]):
        return 0.0  # the mean of equal values can round away from them
    return float(np.sum((pts - pts.mean(axis=0)) ** 2))


def compute_costs(paths: Sequence[Path], data: Dataset, batch: int = 2048) -> None:
    """Fill ``cost`` on every path (vectorized two-pass SSE, in batches)."""
    x = data.points
    n = data.n_points
    for start in range(0, len(paths), batch):
        chunk = paths[start:start + batch]
        m = masks_to_matrix([pt.coverage for pt in chunk], n).astype(float)
        counts = m.sum(axis=1)
        if np.any(counts == 0):
            raise ValueError("path covers no points")
        mu = (m @ x) / counts[:, None]
        diff = x[None, :, :] - mu[:, None, :]
        sse = np.einsum("bi,bij->b", m, diff * diff)
        for pt, c in zip(chunk, sse):
            # only identical rows leave a residue this small; path_cost zeroes those exactly
            pt.cost = float(c) if c > 1e-12 else path_cost(pt, data)


def candidate_paths(
    binsets: Sequence[BinSet],
    data: Dataset,
    max_depth: int = DEFAULT_MAX_DEPTH,
    path_limit: int = DEFAULT_PATH_LIMIT,
) -> list[Path]:
    """Graph construction, enumeration, pruning and costing in one call."""
    graph = build_graph(binsets)
    records = _enumerate(graph, data, max_depth, True, path_limit)
    paths = _materialize(graph, [records[pos] for pos in _prune(records)])
    compute_costs(paths, data)
    return paths
