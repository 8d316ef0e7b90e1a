"""Exact selection of disjoint candidate paths.

Problem: choose a set S of paths minimizing the summed cost, with pairwise
disjoint coverage, ``|S| <= l`` and at least ``ceil(rho * N)`` points covered.
Among optimal sets the lexicographically smallest sorted index tuple wins.

The search branches on a point: either one compatible path covering it is
selected, or the point is left uncovered (when the coverage target still
allows it). Every feasible selection is reached exactly once, so exploring
every node whose bound does not exceed the incumbent (plus a small float
tolerance) gives the optimum together with the tie-break.

Bounds come from Lagrangian relaxation. For point prices ``w``, a leaf price
``lam >= 0`` and a coverage price ``mu >= 0`` with ``w_i <= mu``, and reduced
costs ``rc_j = cost_j + lam - sum_{i in j} w_i``, any selection satisfies::

    cost(S) >= sum_{j in S} max(rc_j, 0) + sum_j min(rc_j, 0)
               + sum_i w_i - mu (N - T) - lam l

The same holds below a node with the undecided points, the points still
needed and the leaves left. The prices come from maximizing a smoothed
version of the right-hand side with L-BFGS at decreasing temperatures. They
only steer the search: every bound is evaluated exactly from the formula
above, so imperfect prices can make the search slower but never wrong.
Paths whose reduced cost exceeds the gap to the incumbent are fixed out.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.special import expit

BRUTE_FORCE_LIMIT = 25
DEFAULT_NODE_LIMIT = 5_000_000
_TOL = 1e-9
_TEMPERATURES = (1e-2, 1e-3, 1e-4)
_WINDOW = 40.0
_WIDENINGS = 20
_DIVES = (1e-3, 1e-2)
_DIVE_NODES = 20_000


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ProblemInstance:
    costs: tuple[float, ...]
    coverages: tuple[int, ...]
    n_points: int
    l: int
    rho: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        object.__setattr__(self, "coverages", tuple(int(m) for m in self.coverages))
        if len(self.costs) != len(self.coverages):
            raise ValueError("costs and coverages differ in length")
        if self.n_points < 0:
            raise ValueError("n_points must be non-negative")
        if any(c < 0 or not math.isfinite(c) for c in self.costs):
            raise ValueError("path costs must be finite and non-negative")
        limit = 1 << self.n_points
        if any(m <= 0 or m >= limit for m in self.coverages):
            raise ValueError("every coverage must be a non-empty subset of the points")
        if self.l < 0:
            raise ValueError("l must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(m.bit_count() for m in self.coverages)

    @property
    def n_paths(self) -> int:
        return len(self.costs)

    @property
    def target(self) -> int:
        """Integer coverage requirement ``ceil(rho * N)``."""
        return coverage_target(self.n_points, self.rho)

    @classmethod
    def from_paths(cls, paths, n_points: int, l: int, rho: float = 1.0) -> "ProblemInstance":
        return cls(tuple(p.cost for p in paths), tuple(p.coverage for p in paths), n_points, l, rho)

    def to_json(self) -> dict:
        from .graph import indices_from_mask

        return {
            "n_points": self.n_points,
            "l": self.l,
            "rho": self.rho,
            "paths": [
                {"cost": c, "covered_indices": indices_from_mask(m)}
                for c, m in zip(self.costs, self.coverages)
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ProblemInstance":
        masks = []
        for p in d["paths"]:
            m = 0
            for i in p["covered_indices"]:
                m |= 1 << int(i)
            masks.append(m)
        return cls(tuple(p["cost"] for p in d["paths"]), tuple(masks), int(d["n_points"]), int(d["l"]), float(d["rho"]))

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "ProblemInstance":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def coverage_target(n_points: int, rho: float) -> int:
    return min(n_points, max(0, math.ceil(rho * n_points - _TOL)))


@dataclass(frozen=True)
class Selection:
    chosen: tuple[int, ...]
    total_cost: float
    covered: int
    status: str  # "optimal" | "infeasible" | "aborted"
    nodes: int = field(default=0, compare=False)
    root_bound: Optional[float] = field(default=None, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _better(cost: float, chosen: tuple[int, ...], best) -> bool:
    if best is None:
        return True
    return cost < best[0] or (cost == best[0] and chosen < best[1])


def _check(costs, masks, l: int, target: int, chosen: tuple[int, ...]):
    """``(total, covered)`` if ``chosen`` is feasible, else None."""
    if len(chosen) > l or len(set(chosen)) != len(chosen):
        return None
    cov = 0
    for j in chosen:
        m = masks[j]
        if cov & m:
            return None
        cov |= m
    if cov.bit_count() < target:
        return None
    return math.fsum(costs[j] for j in chosen), cov


def verify(instance: ProblemInstance, selection: Selection) -> bool:
    """Re-check disjointness, leaf budget, coverage and the reported cost."""
    if any(not 0 <= j < instance.n_paths for j in selection.chosen):
        return False
    got = _check(instance.costs, instance.coverages, instance.l, instance.target, tuple(selection.chosen))
    return got is not None and got == (selection.total_cost, selection.covered)


def brute_force_solve(instance: ProblemInstance) -> Selection:
    """Exhaustive search over all subsets; the reference for :func:`solve`."""
    J = instance.n_paths
    if J > BRUTE_FORCE_LIMIT:
        raise InstanceTooLarge(f"brute force handles at most {BRUTE_FORCE_LIMIT} paths, got {J}")
    best = None
    for size in range(0, min(instance.l, J) + 1):
        for chosen in itertools.combinations(range(J), size):
            got = _check(instance.costs, instance.coverages, instance.l, instance.target, chosen)
            if got is not None and _better(got[0], chosen, best):
                best = (got[0], chosen, got[1])
    if best is None:
        return Selection((), 0.0, 0, "infeasible")
    return Selection(best[1], best[0], best[2], "optimal")


def _dominance_filter(costs: Sequence[float], masks: Sequence[int]) -> list[int]:
    """Indices surviving identical-coverage dominance (cheaper, then lower index, wins)."""
    keep: dict[int, int] = {}
    for j, (c, m) in enumerate(zip(costs, masks)):
        cur = keep.get(m)
        if cur is None or c < costs[cur]:
            keep[m] = j
    return sorted(keep.values())


def incidence_matrix(masks: Sequence[int], n: int) -> csr_matrix:
    """Paths x points 0/1 matrix of the coverage bitsets."""
    from .graph import masks_to_matrix

    if not masks:
        return csr_matrix((0, n))
    return csr_matrix(masks_to_matrix(masks, n), dtype=np.float64)


@dataclass(frozen=True)
class Multipliers:
    """Point prices ``w``, leaf price ``lam``, coverage price ``mu`` and their bound."""

    w: np.ndarray
    lam: float
    mu: float
    bound: float


def lagrangian_bound(costs, A, n: int, target: int, l: int, w, lam: float, mu: float) -> float:
    """``sum_j min(0, rc_j) + sum_i w_i + sum_i min(0, mu - w_i) - mu (N - T) - lam l``."""
    w = np.asarray(w, dtype=float)
    rc = np.asarray(costs, dtype=float) + lam - A @ w
    extra = float(np.sum(np.minimum(0.0, mu - w))) if target < n else 0.0
    slack = mu * (n - target) if target < n else 0.0
    return math.fsum(rc[rc < 0]) + math.fsum(w) + extra - slack - lam * l


class _Exceeded(Exception):
    def __init__(self, x):
        self.x = x


def _soft_min(r: np.ndarray, tau: float):
    """Smooth lower approximation of ``min(0, r)`` and its derivative."""
    z = -r / tau
    return -tau * np.logaddexp(0.0, z), expit(z)


class _DualAscent:
    """Multipliers by maximizing a smoothed Lagrangian dual with L-BFGS.

    ``min(0, rc_j)`` is replaced by a softplus of temperature ``tau``, which
    is lowered in stages; warm starts skip the first one. After the first
    stage only paths with small reduced cost take part (the rest contribute
    almost nothing); the working set is widened whenever the full check finds new near-zero paths. The point of
    all this is speed: the bound handed to the search is always evaluated
    exactly over every path, and the best one seen is kept.
    """

    def __init__(self, costs: np.ndarray, A: csr_matrix, n: int, target: int):
        self.costs = costs
        self.A = A
        self.n = n
        self.target = target
        self.partial = target < n
        # x = [w_1..w_n, lam] (+ [mu] when rho < 1); reused across leaf budgets
        self.x = np.zeros(n + 1 + (1 if self.partial else 0))
        self.fresh = True
        # no feasible selection costs more than all paths together
        self.cap = math.fsum(costs) * (1.0 + _TOL) + 1.0

    def split(self, x):
        n = self.n
        w = x[:n]
        lam = float(x[n])
        mu = float(x[n + 1]) if self.partial else 0.0
        if self.partial:
            w = np.minimum(w, mu)
        return w, lam, mu

    def value(self, x, l: int) -> float:
        w, lam, mu = self.split(x)
        return lagrangian_bound(self.costs, self.A, self.n, self.target, l, w, lam, mu)

    def _objective(self, cols: np.ndarray, l: int, tau: float):
        n = self.n
        c = self.costs[cols]
        A = self.A[cols]
        AT = A.T.tocsr()
        slack = float(self.n - self.target)
        partial = self.partial
        cap = self.cap

        def f(x):
            w = x[:n]
            lam = x[n]
            val, p = _soft_min(c + lam - A @ w, tau)
            g = np.empty_like(x)
            g[:n] = 1.0 - AT @ p
            g[n] = p.sum() - l
            total = val.sum() + w.sum() - lam * l
            if partial:
                mu = x[n + 1]
                v2, q = _soft_min(mu - w, tau)
                total += v2.sum() - mu * slack
                g[:n] -= q
                g[n + 1] = q.sum() - slack
            if total > cap:
                raise _Exceeded(x.copy())
            return -total, -g

        return f

    def solve(self, l: int) -> Multipliers:
        from scipy.optimize import minimize

        n = self.n
        bounds = [(None, None)] * n + [(0.0, None)] * (len(self.x) - n)
        best_x = self.x.copy()
        best_v = self.value(best_x, l)
        x = best_x
        for stage, tau in enumerate(_TEMPERATURES):
            if stage == 0:
                if not self.fresh:
                    continue  # a warm start is already past what the coarsest stage finds
                active = np.arange(len(self.costs))
            else:
                prev = _TEMPERATURES[max(stage - 1, 0)]
                w, lam, _ = self.split(x)
                active = np.flatnonzero(self.costs + lam - self.A @ w < _WINDOW * prev)
            for _ in range(_WIDENINGS):
                try:
                    cand = minimize(
                        self._objective(active, l, tau), x, jac=True, method="L-BFGS-B", bounds=bounds,
                        options={"maxiter": 300, "gtol": 1e-9, "ftol": 1e-13},
                    ).x
                except _Exceeded as stop:
                    cand = stop.x
                v = self.value(cand, l)
                if v > best_v:
                    best_x, best_v = cand, v
                if best_v > self.cap:
                    break
                w, lam, _ = self.split(cand)
                near = np.flatnonzero(self.costs + lam - self.A @ w < _WINDOW * tau / 2)
                grown = np.union1d(active, near)
                if len(grown) == len(active):
                    x = cand
                    break
                active = grown
                x = best_x  # a shrunk working set can overshoot; restart from the best point
            if best_v > self.cap:
                break
        self.fresh = False
        self.x = best_x
        w, lam, mu = self.split(best_x)
        return Multipliers(w.copy(), lam, mu, best_v)


class PreparedPaths:
    """Path data prepared once and reused by every :meth:`solve` call.

    Useful when the same candidate paths are solved for several leaf
    budgets: the dominance filter, the incidence matrix and the dual
    multipliers (as a warm start) carry over.
    """

    def __init__(self, costs: Sequence[float], coverages: Sequence[int], n_points: int, rho: float = 1.0):
        probe = ProblemInstance(tuple(costs), tuple(coverages), n_points, 0, rho)
        self.costs = probe.costs
        self.masks = probe.coverages
        self.n = n_points
        self.rho = rho
        self.target = probe.target
        self.cols = _dominance_filter(self.costs, self.masks)
        self.col_costs = np.asarray([self.costs[j] for j in self.cols], dtype=float)
        self.A = incidence_matrix([self.masks[j] for j in self.cols], n_points)
        self._dual: Optional[_DualAscent] = None

    @classmethod
    def from_instance(cls, instance: ProblemInstance) -> "PreparedPaths":
        return cls(instance.costs, instance.coverages, instance.n_points, instance.rho)

    def instance(self, l: int) -> ProblemInstance:
        return ProblemInstance(self.costs, self.masks, self.n, l, self.rho)

    def multipliers(self, l: int) -> Optional[Multipliers]:
        """Multipliers for leaf budget ``l``, warm-started from the previous call."""
        if not self.cols:
            return None
        if self._dual is None:
            self._dual = _DualAscent(self.col_costs, self.A, self.n, self.target)
        return self._dual.solve(l)

    def solve(
        self,
        l: int,
        node_limit: int = DEFAULT_NODE_LIMIT,
        time_limit: Optional[float] = None,
        incumbent: Optional[Sequence[int]] = None,
    ) -> Selection:
        if l < 0:
            raise ValueError("l must be non-negative")
        if self.target == 0:
            return Selection((), 0.0, 0, "optimal", 0, 0.0)
        if l == 0 or not self.cols:
            return Selection((), 0.0, 0, "infeasible", 0, math.inf)
        search = _Search(self, l, node_limit, time_limit, incumbent)
        best = search.run()
        if best is None:
            status = "aborted" if search.aborted else "infeasible"
            return Selection((), 0.0, 0, status, search.nodes, search.root_bound)
        status = "aborted" if search.aborted else "optimal"
        return Selection(best[1], best[0], best[2], status, search.nodes, search.root_bound)


class _Search:
    def __init__(self, prep: PreparedPaths, l: int, node_limit: int, time_limit: Optional[float], incumbent):
        self.prep = prep
        self.l = l
        self.node_limit = node_limit
        self.deadline = None if time_limit is None else time.monotonic() + time_limit
        self.n = prep.n
        self.target = prep.target
        self.full = (1 << self.n) - 1
        self.nodes = 0
        self.best = None
        self.aborted = False
        self.cost = prep.costs
        self.mask = prep.masks

        if incumbent is not None:
            self._offer(tuple(incumbent))
        mults = prep.multipliers(l)
        if mults is None:
            mults = Multipliers(np.zeros(self.n), 0.0, 0.0, -math.inf)
        self.w = [float(v) for v in mults.w]
        self.lam = mults.lam
        self.mu = mults.mu
        rc = prep.col_costs + self.lam - prep.A @ mults.w
        self.sum_w = math.fsum(self.w)
        self.root_raw = self._bound_total(self.sum_w, self.n, self.target, l) + math.fsum(rc[rc < 0])
        self.root_bound = max(self.root_raw, 0.0)

        self.rc_all = rc
        self.total_cap = math.fsum(prep.col_costs) * (1.0 + _TOL) + 1.0
        self.by_point: list[list[int]] = [[] for _ in range(self.n)]
        self.rc: dict[int, float] = {}
        self.neg: list[tuple[int, float]] = []
        self.stop = False
        self.cap = node_limit

    def _restrict(self, keep: np.ndarray) -> None:
        """Limit the search to the prepared columns ``keep`` (positions into ``prep.cols``)."""
        prep = self.prep
        cols = [prep.cols[k] for k in keep]
        rc_keep = self.rc_all[keep].tolist()
        self.rc = dict(zip(cols, rc_keep))
        self.neg = [(j, r) for j, r in zip(cols, rc_keep) if r < 0]
        sub = prep.A[keep].tocoo()
        order = np.lexsort((sub.row, self.rc_all[keep][sub.row], sub.col))
        pts = sub.col[order]
        glob = np.asarray(cols, dtype=np.int64)[sub.row[order]].tolist() if cols else []
        cuts = np.searchsorted(pts, np.arange(self.n + 1)).tolist()
        self.by_point = [glob[cuts[i]:cuts[i + 1]] for i in range(self.n)]

    def _gap(self) -> float:
        return self._limit() - self.root_raw

    def _bound_total(self, sum_w: float, n_undecided: int, need: int, leaves: int) -> float:
        return sum_w - self.mu * (n_undecided - need) - self.lam * leaves

    def _offer(self, chosen: tuple[int, ...]) -> None:
        key = tuple(sorted(chosen))
        got = _check(self.cost, self.mask, self.l, self.target, key)
        if got is not None and _better(got[0], key, self.best):
            self.best = (got[0], key, got[1])

    def _limit(self) -> float:
        if self.best is None:
            return math.inf
        return self.best[0] + _TOL * (1.0 + abs(self.best[0]))

    def node_bound(self, blocked: int, n_undecided: int, sum_w: float, need: int, leaves: int) -> float:
        """Lagrangian value below a node (may be negative; selecting path j adds ``max(rc_j, 0)``)."""
        if need <= 0:
            return 0.0
        if leaves <= 0:
            return math.inf
        total = self._bound_total(sum_w, n_undecided, need, leaves)
        mask = self.mask
        for j, r in self.neg:
            if not (mask[j] & blocked):
                total += r
        return total

    def run(self):
        if self.root_bound > self._limit() or self.root_raw > self.total_cap:
            return self.best
        scale = 1.0 + abs(self.root_raw)
        # dives over near-zero reduced-cost paths, only to find a good incumbent
        for frac in _DIVES:
            if self._gap() <= frac * scale:
                break
            self._restrict(np.flatnonzero(self.rc_all <= frac * scale))
            self.cap = self.nodes + _DIVE_NODES
            self._visit(0, 0, (), 0.0, self.sum_w)
            self.stop = False
        # complete search; paths whose reduced cost exceeds the gap are fixed out
        slack = _TOL * (1.0 + abs(self.best[0])) if self.best is not None else 0.0
        self._restrict(np.flatnonzero(self.rc_all <= self._gap() + slack))
        self.cap = self.node_limit
        self._visit(0, 0, (), 0.0, self.sum_w)
        self.aborted = self.stop
        return self.best

    def _visit(self, covered: int, excluded: int, chosen: tuple[int, ...], cost: float, sum_w: float):
        self.nodes += 1
        if self.nodes > self.cap or (
            self.deadline is not None and self.nodes % 256 == 0 and time.monotonic() > self.deadline
        ):
            self.stop = True
            return
        n_cov = covered.bit_count()
        if n_cov >= self.target:
            self._offer(chosen)
        blocked = covered | excluded
        undecided = self.full & ~blocked
        if not undecided:
            return
        n_und = undecided.bit_count()
        leaves = self.l - len(chosen)
        need = self.target - n_cov
        slack = (self.n - self.target) - excluded.bit_count()
        lb = cost + self.node_bound(blocked, n_und, sum_w, need, leaves)
        limit = self._limit()
        if lb > limit or cost > limit:
            return
        mask, rc, by_point = self.mask, self.rc, self.by_point

        if need > 0:
            # most constrained point: fewest viable paths (plus the exclusion option)
            point, fewest = -1, math.inf
            u = undecided
            while u:
                low = u & -u
                i = low.bit_length() - 1
                u ^= low
                cnt = 1 if slack > 0 else 0
                for j in by_point[i]:
                    if cnt >= fewest:
                        break
                    r = rc[j]
                    if lb + (r if r > 0 else 0.0) > limit:
                        break
                    if not (mask[j] & blocked):
                        cnt += 1
                if cnt < fewest:
                    point, fewest = i, cnt
                    if cnt == 0:
                        return
        else:
            point = (undecided & -undecided).bit_length() - 1
        w = self.w
        if leaves > 0:
            for j in by_point[point]:
                r = rc[j]
                if lb + (r if r > 0 else 0.0) > limit:
                    break
                if mask[j] & blocked:
                    continue
                c = cost + self.cost[j]
                if c > limit:
                    continue
                m = mask[j]
                sw = sum_w
                while m:
                    low = m & -m
                    sw -= w[low.bit_length() - 1]
                    m ^= low
                self._visit(covered | mask[j], excluded, chosen + (j,), c, sw)
                if self.stop:
                    return
                limit = self._limit()
        if slack > 0 and not self.stop:
            self._visit(covered, excluded | (1 << point), chosen, cost, sum_w - w[point])


def solve(
    instance: ProblemInstance,
    node_limit: int = DEFAULT_NODE_LIMIT,
    time_limit: Optional[float] = None,
    incumbent: Optional[Sequence[int]] = None,
) -> Selection:
    """Provably optimal selection, ``infeasible``, or ``aborted`` on a resource limit.

    ``incumbent`` may name any feasible selection to seed pruning; it cannot
    change the result, only the effort.
    """
    return PreparedPaths.from_instance(instance).solve(instance.l, node_limit, time_limit, incumbent)


def root_lower_bound(instance: ProblemInstance) -> float:
    """The bound :func:`solve` starts from (inf when no selection can meet the target)."""
    prep = PreparedPaths.from_instance(instance)
    if prep.target == 0:
        return 0.0
    if instance.l == 0 or not prep.cols:
        return math.inf
    return _Search(prep, instance.l, 0, None, None).root_bound
