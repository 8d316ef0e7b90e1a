"""Tabular numeric data: CSV ingestion, 0-1 scaling and label handling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

UNASSIGNED = -1


class DatasetError(ValueError):
    """Raised when a CSV file cannot be turned into a valid dataset."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """N x p real matrix with column names.

    ``offset`` and ``scale`` record the affine map back to raw units, so that
    ``raw = offset + scale * points`` column-wise. For raw data they are 0 and 1.
    """

    points: np.ndarray
    feature_names: tuple[str, ...]
    offset: np.ndarray = field(default=None)  # type: ignore[assignment]
    scale: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DatasetError(f"points must be a non-empty 2-D matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DatasetError("points contain missing or non-finite values")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != pts.shape[1]:
            raise DatasetError(f"{len(names)} feature names for {pts.shape[1]} columns")
        p = pts.shape[1]
        offset = np.zeros(p) if self.offset is None else self.offset
        scale = np.ones(p) if self.scale is None else self.scale
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "offset", _frozen(offset))
        object.__setattr__(self, "scale", _frozen(scale))

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return self.points.shape[1]

    def to_raw(self, feature: int, value: float) -> float:
        """Map a value of column ``feature`` back to raw units (infinities pass through)."""
        if math.isinf(value):
            return value
        return float(self.offset[feature] + self.scale[feature] * value)


def load_csv(path, label_column: Optional[str] = None) -> tuple[Dataset, Optional[np.ndarray]]:
    """Read a headed, comma-separated numeric file.

    The label column, if named, is removed from the features and mapped to
    dense integer ids in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    seen = set()
    for name in header:
        if name in seen:
            raise DatasetError(f"{path}: duplicate column name {name!r}")
        seen.add(name)
    if label_column is not None and label_column not in header:
        raise DatasetError(f"{path}: label column {label_column!r} not found in header")
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise DatasetError(f"{path}: no data rows")

    label_idx = header.index(label_column) if label_column is not None else None
    feat_idx = [j for j in range(len(header)) if j != label_idx]
    if not feat_idx:
        raise DatasetError(f"{path}: no feature columns")

    values = np.empty((len(body), len(feat_idx)))
    raw_labels = []
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DatasetError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
        for c, j in enumerate(feat_idx):
            cell = row[j].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(
                    f"{path}: row {r}, column {header[j]!r}: non-numeric value {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise DatasetError(f"{path}: row {r}, column {header[j]!r}: missing or non-finite value {cell!r}")
            values[r - 1, c] = v
        if label_idx is not None:
            cell = row[label_idx].strip()
            if cell == "":
                raise DatasetError(f"{path}: row {r}, column {label_column!r}: missing label")
            raw_labels.append(cell)

    data = Dataset(values, [header[j] for j in feat_idx])
    labels = dense_labels(raw_labels) if label_idx is not None else None
    return data, labels


def dense_labels(values: Sequence) -> np.ndarray:
    """Map arbitrary hashable labels to 0..k-1 by first appearance."""
    ids: dict = {}
    out = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        out[i] = ids.setdefault(v, len(ids))
    return out


def normalize(raw: Dataset) -> Dataset:
    """Min-max scale each column to [0, 1]; constant columns become all zeros."""
    x = raw.points
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    pts = np.where(span > 0, (x - lo) / safe, 0.0)
    # compose with any earlier scaling so to_raw still reaches the original units
    offset = raw.offset + raw.scale * lo
    scale = raw.scale * np.where(span > 0, span, 0.0)
    return Dataset(pts, raw.feature_names, offset, scale)


def apply_scaling(raw: Dataset, offset, scale) -> Dataset:
    """Scale ``raw`` with a previously fitted 0-1 map (used when re-evaluating a stored model)."""
    offset = np.asarray(offset, dtype=float)
    scale = np.asarray(scale, dtype=float)
    safe = np.where(scale > 0, scale, 1.0)
    pts = np.where(scale > 0, (raw.points - offset) / safe, 0.0)
    return Dataset(pts, raw.feature_names, offset, scale)


def seeds_path() -> Path:
    """Location of the bundled UCI Seeds file (label column ``varieties_of_wheat``)."""
    return Path(str(resources.files("mwclust") / "data" / "seeds.csv"))


SEEDS_LABEL = "varieties_of_wheat"
