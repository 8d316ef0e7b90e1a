"""Multiway-split tree built from a set of selected paths.

Every selected path becomes one leaf. Conditions are laid out in feature
(column) order; a path that does not condition on a feature takes an "any"
edge there. Features on which no path conditions are left out, and so is
any node whose only child is an "any" edge.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import UNASSIGNED, Dataset
from .discretize import Interval
from .graph import Path

ANY = None  # edge label of a skipped feature


@dataclass
class Leaf:
    cluster: int
    n_points: int

    def to_json(self) -> dict:
        return {"cluster": self.cluster, "n_points": self.n_points}


@dataclass
class Node:
    """Internal node testing one feature; children are ``(interval or ANY, subtree)``."""

    feature: int
    children: list = field(default_factory=list)

    def child(self, label):
        for lab, sub in self.children:
            if lab == label:
                return sub
        return None

    def to_json(self) -> dict:
        return {
            "feature": self.feature,
            "children": [
                {"interval": None if lab is ANY else lab.to_json(), "node": sub.to_json()}
                for lab, sub in self.children
            ],
        }


@dataclass
class MultiwayTree:
    root: object  # Node, or a Leaf for a single unconditional cluster
    leaves: tuple[Path, ...]
    feature_names: tuple[str, ...]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def depth(self) -> int:
        return max((p.depth for p in self.leaves), default=0)

    def leaf_conditions(self, k: int) -> tuple[tuple[int, Interval], ...]:
        return self.leaves[k].conditions


def reconstruct(selected: Sequence[Path], feature_names: Sequence[str]) -> MultiwayTree:
    """Trie over the column-ordered conditions of ``selected``; leaf k is ``selected[k]``."""
    paths = tuple(selected)
    used = sorted({f for p in paths for f, _ in p.conditions})
    root = Node(-1)  # placeholder parent so the first layer can be compressed like any other

    for k, path in enumerate(paths):
        by_feature = dict(path.conditions)
        if len(by_feature) != len(path.conditions):
            raise ValueError(f"path {k} conditions a feature twice")
        holder = root
        label = ANY
        for f in used:
            sub = holder.child(label)
            if sub is None:
                sub = Node(f)
                holder.children.append((label, sub))
            holder = sub
            label = by_feature.get(f, ANY)
        if holder.child(label) is not None:
            raise ValueError(f"path {k} duplicates another path's conditions")
        holder.children.append((label, Leaf(k, path.n_covered)))

    top = _compress(root.children[0][1]) if root.children else Node(-1)
    return MultiwayTree(top, paths, tuple(feature_names))


def _compress(node):
    if isinstance(node, Leaf):
        return node
    node.children = [(lab, _compress(sub)) for lab, sub in node.children]
    if len(node.children) == 1 and node.children[0][0] is ANY:
        return node.children[0][1]
    return node


def assign(tree: MultiwayTree, data: Dataset) -> np.ndarray:
    """Cluster id of the first leaf whose conditions hold, else ``UNASSIGNED``.

    Selected paths are disjoint on the training data, so there the first
    match is the only match.
    """
    return assign_points(tree, data.points)


def assign_points(tree: MultiwayTree, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.full(len(pts), UNASSIGNED, dtype=np.int64)
    for k in reversed(range(tree.n_leaves)):
        labels[tree.leaves[k].covers(pts)] = k
    return labels


# ---------------------------------------------------------------- rendering

def _num(v: float, precision: Optional[int]) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v)) if precision is None else f"{v:.{precision}g}"


def interval_text(iv: Interval, precision: Optional[int] = 6) -> str:
    left = "(" if math.isinf(iv.lower) else "["
    return f"{left}{_num(iv.lower, precision)}, {_num(iv.upper, precision)})"


def _to_units(iv, f: int, data: Optional[Dataset]):
    if iv is ANY or data is None:
        return iv
    return _RawInterval(data.to_raw(f, iv.lower), data.to_raw(f, iv.upper))


@dataclass(frozen=True)
class _RawInterval:
    lower: float
    upper: float


def render_text(tree: MultiwayTree, data: Optional[Dataset] = None, precision: Optional[int] = 6) -> str:
    """Indented rules ``feature ∈ [a, b) → cluster k (n points)``.

    With ``data`` the bounds are mapped back to its raw units; without it
    they stay normalized. ``precision=None`` prints full round-trip floats.
    """
    names = tree.feature_names
    lines: list[str] = []

    def edge(f, lab):
        if lab is ANY:
            return f"{names[f]} ∈ any"
        return f"{names[f]} ∈ {interval_text(_to_units(lab, f, data), precision)}"

    def leaf_text(leaf: Leaf) -> str:
        return f"cluster {leaf.cluster} ({leaf.n_points} points)"

    def walk(node, indent: int):
        pad = "  " * indent
        for lab, sub in node.children:
            if isinstance(sub, Leaf):
                lines.append(f"{pad}{edge(node.feature, lab)} → {leaf_text(sub)}")
            else:
                lines.append(f"{pad}{edge(node.feature, lab)}")
                walk(sub, indent + 1)

    if isinstance(tree.root, Leaf):
        lines.append(f"any → {leaf_text(tree.root)}")
    elif tree.root.children:
        walk(tree.root, 0)
    return "\n".join(lines) + "\n"


_RULE = re.compile(r"^(?P<pad> *)(?P<name>.+?) ∈ (?P<cond>any|[\[(]\S+, \S+\))(?: → cluster (?P<k>\d+) \(\d+ points\))?$")


def parse_text(text: str, feature_names: Sequence[str]) -> list[tuple[int, tuple[tuple[int, Interval], ...]]]:
    """Read :func:`render_text` output back as ``[(cluster, conditions), ...]``."""
    index = {n: i for i, n in enumerate(feature_names)}
    stack: list[Optional[tuple[int, Interval]]] = []
    rules = []
    for line in text.splitlines():
        if not line.strip():
            continue
        m = re.match(r"^any → cluster (\d+) \(\d+ points\)$", line)
        if m:
            rules.append((int(m.group(1)), ()))
            continue
        m = _RULE.match(line)
        if m is None:
            raise ValueError(f"cannot parse rule line {line!r}")
        depth = len(m.group("pad")) // 2
        f = index[m.group("name")]
        cond = None
        if m.group("cond") != "any":
            lo, hi = m.group("cond")[1:-1].split(", ")
            cond = (f, Interval(float(lo), float(hi)))
        del stack[depth:]
        stack.append(cond)
        if m.group("k") is not None:
            rules.append((int(m.group("k")), tuple(c for c in stack if c is not None)))
    return sorted(rules)


def render_dot(tree: MultiwayTree, data: Optional[Dataset] = None, precision: Optional[int] = 6) -> str:
    """Graphviz digraph; condition nodes read ``f: [a, b)``, leaves ``cluster k\\nn=...``."""
    names = tree.feature_names
    out = ["digraph tree {", '  node [shape=box, fontname="Helvetica"];', '  n0 [label="root", shape=ellipse];']
    counter = [0]

    def new_id() -> str:
        counter[0] += 1
        return f"n{counter[0]}"

    def label(f, lab) -> str:
        text = "any" if lab is ANY else interval_text(_to_units(lab, f, data), precision)
        return f"{names[f]}: {text}".replace("\\", "\\\\").replace('"', '\\"')

    def leaf(parent: str, lf: Leaf) -> None:
        nid = new_id()
        out.append(f'  {nid} [label="cluster {lf.cluster}\\nn={lf.n_points}", shape=ellipse];')
        out.append(f"  {parent} -> {nid};")

    def walk(parent: str, node) -> None:
        for lab, sub in node.children:
            nid = new_id()
            out.append(f'  {nid} [label="{label(node.feature, lab)}"];')
            out.append(f"  {parent} -> {nid};")
            if isinstance(sub, Leaf):
                leaf(nid, sub)
            else:
                walk(nid, sub)

    if isinstance(tree.root, Leaf):
        leaf("n0", tree.root)
    else:
        walk("n0", tree.root)
    out.append("}")
    return "\n".join(out) + "\n"


def tree_to_json(tree: MultiwayTree) -> dict:
    return {
        "depth": tree.depth,
        "n_leaves": tree.n_leaves,
        "root": tree.root.to_json(),
        "leaves": [p.to_json() for p in tree.leaves],
    }


def tree_from_json(d: dict, feature_names: Sequence[str]) -> MultiwayTree:
    """Rebuild from the ``leaves`` list (the trie itself is derived data)."""
    paths = []
    for k, leaf in enumerate(d["leaves"]):
        conds = tuple((int(c["feature"]), Interval.from_json(c)) for c in leaf["conditions"])
        paths.append(Path(conds, (), 0, int(leaf["n_covered"]), leaf.get("cost"), order=k))
    return reconstruct(paths, feature_names)
