"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL/SKIP line that is printed in the terminal
summary (and to stdout, visible with ``-s``).
"""

from __future__ import annotations

import io
import math
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mwclust import cli
from mwclust.dataset import SEEDS_LABEL, Dataset, load_csv, seeds_path
from mwclust.discretize import (
    Interval,
    boundaries,
    discretize,
    intervals_from_cuts,
    kmeans_1d,
    merge_adjacent,
    tercile_bins,
)
from mwclust.graph import build_graph, compute_costs, enumerate_paths, prune_redundant
from mwclust.metrics import ari, dunn, silhouette, silhouette_samples
from mwclust.solver import PreparedPaths, ProblemInstance, solve
from oracles import brute_force, pair_count_ari, random_instance

REPO = Path(__file__).resolve().parents[1]
REAL_ESTATE = REPO / "datasets" / "real_estate.csv"
REAL_ESTATE_TARGET = "Y house price of unit area"


def record(n: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_01_solver_matches_brute_force():
    rng = random.Random(20240601)
    mismatches = feasible = 0
    solve_seconds = 0.0
    for _ in range(200):
        costs, masks, n, l, rho = random_instance(rng, max_n=30, max_paths=20, max_l=5, rhos=(0.8, 1.0))
        inst = ProblemInstance(costs, masks, n, l, rho)
        start = time.perf_counter()
        got = solve(inst)
        solve_seconds += time.perf_counter() - start
        ref = brute_force(costs, masks, n, l, rho)
        if ref is None:
            mismatches += got.status != "infeasible"
            continue
        feasible += 1
        mismatches += got.status != "optimal" or (got.total_cost, got.chosen) != ref
    ok = mismatches == 0 and solve_seconds < 10.0
    record(1, ok, f"200 instances ({feasible} feasible), {mismatches} mismatches, solver time {solve_seconds:.2f}s (< 10s)")
    assert mismatches == 0
    assert solve_seconds < 10.0


@pytest.fixture(scope="module")
def seeds_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep_a")
    config = cli.RunConfig(input=str(seeds_path()), label_column=SEEDS_LABEL, strategy="kmeans", max_depth=3,
                           sweep=tuple(range(2, 11)), metric="silhouette")
    start = time.perf_counter()
    code = cli.cmd_sweep(config, out, "text", io.StringIO())
    seconds = time.perf_counter() - start
    return config, out, code, seconds


def test_02_seeds_sweep(seeds_sweep):
    _, out, code, seconds = seeds_sweep
    import json

    model = json.loads((out / "model.json").read_text())
    clusters = model["tree"]["n_leaves"]
    depth = model["tree"]["depth"]
    score = model["metrics"]["ari"]
    checks = {
        "3 clusters": clusters == 3,
        "depth 1": depth == 1,
        "ARI in [0.55, 0.70]": 0.55 <= score <= 0.70,
        "< 10s": seconds < 10.0,
    }
    detail = ", ".join(f"{k}: {'ok' if v else 'no'}" for k, v in checks.items())
    record(
        2,
        code == 0 and all(checks.values()),
        f"selected l={model['l']} -> {clusters} clusters, depth {depth}, ARI {score:.4f}, "
        f"silhouette {model['metrics']['silhouette']:.4f}, {seconds:.2f}s ({detail})",
    )
    assert code == 0
    assert clusters == 3
    assert depth == 1
    assert 0.55 <= score <= 0.70
    assert seconds < 10.0


def test_03_real_estate_boundaries():
    if not REAL_ESTATE.is_file():
        line = f"[SKIP] criterion 3: {REAL_ESTATE.relative_to(REPO)} not present (run scripts/fetch_datasets.py)"
        ACCEPTANCE_LINES.append(line)
        print(line)
        pytest.skip("Real Estate data not fetched")
    data, _ = load_csv(REAL_ESTATE)
    target = data.points[:, data.feature_names.index(REAL_ESTATE_TARGET)]
    b = boundaries(kmeans_1d(target, 3).centroids)
    ok = abs(b[0] - 32) <= 1 and abs(b[1] - 49) <= 1
    record(3, ok, f"K=3 boundaries {b[0]:.2f}, {b[1]:.2f} (targets 32 and 49, tolerance 1)")
    assert ok


def exact_sse(groups):
    total = Fraction(0)
    for g in groups:
        mu = sum(g, Fraction(0)) / len(g)
        total += sum((v - mu) ** 2 for v in g)
    return total


def exact_best(values, k):
    import itertools

    x = sorted(values)
    n = len(x)
    best = None
    for cuts in itertools.combinations(range(1, n), k - 1):
        edges = (0, *cuts, n)
        s = exact_sse([x[a:b] for a, b in zip(edges[:-1], edges[1:])])
        best = s if best is None or s < best else best
    return best


def test_04_kmeans_dp_is_exact():
    rng = random.Random(404)
    bad = 0
    for _ in range(1000):
        n = rng.randint(1, 12)
        vals = [rng.choice([round(rng.uniform(0, 10), 3), float(rng.randint(0, 5))]) for _ in range(n)]
        k = rng.randint(1, min(4, len(set(vals))))
        res = kmeans_1d(vals, k)
        exact = [Fraction(v) for v in vals]
        groups = [[exact[i] for i in range(n) if res.assignment[i] == c] for c in range(k)]
        bad += exact_sse(groups) != exact_best(exact, k)
    record(4, bad == 0, f"1000 trials (n <= 12, K <= 4), {bad} differ from the exhaustive optimum (exact rational SSE)")
    assert bad == 0


def test_05_ari():
    rng = random.Random(505)
    worst = 0.0
    for _ in range(500):
        n = rng.randint(2, 50)
        a = [rng.randrange(rng.randint(1, 6)) for _ in range(n)]
        b = [rng.randrange(rng.randint(1, 6)) for _ in range(n)]
        worst = max(worst, abs(ari(a, b) - pair_count_ari(a, b)))
    identical = all(ari(y, y) == 1.0 for y in ([0, 0, 1, 1], [3, 1, 2, 0, 0], [0, 0, 0]))
    cross = ari([0, 0, 1, 1], [0, 1, 0, 1])
    ok = worst <= 1e-10 and identical and cross == -0.5
    record(5, ok, f"max |contingency - pair count| = {worst:.2e} (<= 1e-10), identical -> 1: {identical}, cross -> {cross}")
    assert worst <= 1e-10
    assert identical
    assert cross == -0.5


def test_06_internal_metrics():
    rng = np.random.default_rng(606)
    out_of_range = 0
    for _ in range(200):
        n = int(rng.integers(3, 40))
        x = rng.random((n, int(rng.integers(1, 4))))
        y = rng.integers(0, int(rng.integers(2, 6)), size=n)
        if len(np.unique(y)) < 2:
            y[0] = 1 - y[1]
        s = silhouette(x, y)
        out_of_range += not -1.0 <= s <= 1.0
    x = np.array([[0.0], [0.1], [0.2], [5.0]])
    singleton = silhouette_samples(x, [0, 0, 0, 1])[3] == 0.0
    zero_sep = dunn(np.array([[0.0], [1.0], [1.0], [2.0]]), [0, 0, 1, 1])
    all_single = dunn(np.array([[0.0], [1.0], [2.0]]), [0, 1, 2])
    ok = out_of_range == 0 and singleton and zero_sep == 0.0 and all_single is None
    record(
        6,
        ok,
        f"silhouette outside [-1, 1]: {out_of_range}/200, singleton contributes 0: {singleton}, "
        f"Dunn zero separation = {zero_sep}, Dunn all singletons = {'undefined' if all_single is None else all_single}",
    )
    assert out_of_range == 0
    assert singleton
    assert zero_sep == 0.0
    assert all_single is None


def test_07_tercile_and_merge_law():
    base = tercile_bins(range(1, 10))
    merged = merge_adjacent(base)
    tercile_ok = len(base) == 3 and len(merged) == 2 and base[0] == Interval(-math.inf, 4) and base[2] == Interval(7, math.inf)
    law = []
    for B in range(1, 7):
        bins = intervals_from_cuts([float(i) for i in range(1, B)])
        law.append(len(merge_adjacent(bins)) == max(0, B * (B + 1) // 2 - B - 1))
    ok = tercile_ok and all(law)
    record(7, ok, f"1..9 -> {len(base)} base + {len(merged)} merged, merged-count law for B=1..6: {all(law)}")
    assert tercile_ok
    assert all(law)


def test_08_pruning_soundness():
    rng = np.random.default_rng(808)
    differ = 0
    ran = 0
    for _ in range(100):
        n = int(rng.integers(4, 41))
        p = int(rng.integers(1, 5))
        pts = np.round(rng.random((n, p)), 2)
        data = Dataset(pts, [f"f{i}" for i in range(p)])
        strategy = ["kmeans", "tercile"][int(rng.integers(2))]
        depth = int(rng.integers(1, 4))
        l = int(rng.integers(1, 6))
        rho = [1.0, 0.9, 0.8][int(rng.integers(3))]
        graph = build_graph(discretize(pts, strategy, range(2, 5)))
        every = enumerate_paths(graph, data, depth)
        compute_costs(every, data)
        kept = prune_redundant(every)
        full = PreparedPaths([q.cost for q in every], [q.coverage for q in every], n, rho).solve(l)
        pruned = PreparedPaths([q.cost for q in kept], [q.coverage for q in kept], n, rho).solve(l)
        ran += 1
        same = full.status == pruned.status and (
            full.status != "optimal"
            or math.isclose(full.total_cost, pruned.total_cost, rel_tol=1e-12, abs_tol=1e-12)
        )
        differ += not same
    record(8, differ == 0, f"{ran} random pipelines (N <= 40, p <= 4), {differ} optimum changes after pruning")
    assert differ == 0


def test_09_sweep_is_deterministic(seeds_sweep, tmp_path):
    config, out, _, _ = seeds_sweep
    cli.cmd_sweep(config, tmp_path, "text", io.StringIO())
    first = (out / "model.json").read_bytes()
    second = (tmp_path / "model.json").read_bytes()
    same = first == second
    record(9, same, f"two Seeds sweeps -> model.json {'byte-identical' if same else 'DIFFER'} ({len(first)} bytes)")
    assert same


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
