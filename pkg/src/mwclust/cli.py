"""Command line entry point: ``fit``, ``sweep`` and ``eval``.

Exit codes: 0 optimal, 1 bad input or usage, 2 infeasible, 3 aborted on the
node limit.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dataset import DatasetError, apply_scaling, load_csv, normalize
from .discretize import DEFAULT_K_CANDIDATES, STRATEGIES, BinSet, discretize
from .graph import DEFAULT_MAX_DEPTH, DEFAULT_PATH_LIMIT, PathLimitExceeded, candidate_paths
from .metrics import MetricReport, evaluate
from .solver import DEFAULT_NODE_LIMIT, PreparedPaths, Selection
from .tree import assign, render_dot, render_text, reconstruct, tree_from_json, tree_to_json

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_ABORTED = 0, 1, 2, 3
METRICS = ("silhouette", "dunn")
FORMATS = ("text", "dot", "json")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    input: str
    label_column: Optional[str] = None
    strategy: str = "kmeans"
    k_candidates: tuple[int, ...] = tuple(DEFAULT_K_CANDIDATES)
    max_depth: int = DEFAULT_MAX_DEPTH
    rho: float = 1.0
    leaves: Optional[int] = None
    sweep: tuple[int, ...] = tuple(range(2, 11))
    metric: str = "silhouette"
    path_limit: int = DEFAULT_PATH_LIMIT
    node_limit: int = DEFAULT_NODE_LIMIT

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise UsageError(f"unknown strategy {self.strategy!r}")
        if self.metric not in METRICS:
            raise UsageError(f"unknown metric {self.metric!r}")
        if not self.k_candidates or min(self.k_candidates) < 1:
            raise UsageError("k candidates must be a non-empty range of positive integers")
        if not self.sweep or min(self.sweep) < 0:
            raise UsageError("sweep range must be non-empty and non-negative")
        if self.leaves is not None and self.leaves < 0:
            raise UsageError("leaves must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            raise UsageError("rho must lie in [0, 1]")
        if self.max_depth < 1:
            raise UsageError("max depth must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["k_candidates"] = list(self.k_candidates)
        d["sweep"] = list(self.sweep)
        return d


@dataclass
class Pipeline:
    config: RunConfig
    raw: object
    data: object
    truth: Optional[np.ndarray]
    binsets: list[BinSet]
    paths: list
    prepared: PreparedPaths
    prep_seconds: float


@dataclass
class Fit:
    l: int
    selection: Selection
    tree: object = None
    labels: Optional[np.ndarray] = None
    report: Optional[MetricReport] = None
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def usable(self) -> bool:
        return self.tree is not None


def build_pipeline(config: RunConfig) -> Pipeline:
    """Load, normalize, discretize and build the costed candidate paths once."""
    start = time.perf_counter()
    raw, truth = load_csv(config.input, config.label_column)
    data = normalize(raw)
    binsets = discretize(data.points, config.strategy, config.k_candidates)
    paths = candidate_paths(binsets, data, config.max_depth, config.path_limit)
    prepared = PreparedPaths([p.cost for p in paths], [p.coverage for p in paths], data.n_points, config.rho)
    return Pipeline(config, raw, data, truth, binsets, paths, prepared, time.perf_counter() - start)


def fit_leaves(pipe: Pipeline, l: int, incumbent: Optional[Sequence[int]] = None) -> Fit:
    start = time.perf_counter()
    sel = pipe.prepared.solve(l, node_limit=pipe.config.node_limit, incumbent=incumbent)
    fit = Fit(l, sel)
    if sel.chosen or sel.status == "optimal":
        fit.tree = reconstruct([pipe.paths[j] for j in sel.chosen], pipe.data.feature_names)
        fit.labels = assign(fit.tree, pipe.data)
        fit.report = evaluate(pipe.data.points, fit.labels, pipe.truth)
    fit.seconds = time.perf_counter() - start
    return fit


def metric_value(fit: Fit, metric: str) -> Optional[float]:
    if fit.report is None:
        return None
    return getattr(fit.report, metric)


def choose(fits: Sequence[Fit], metric: str) -> Optional[Fit]:
    """Best optimal fit by ``metric``; ties go to the smaller l; undefined values never win."""
    best = None
    for fit in sorted(fits, key=lambda f: f.l):
        if fit.selection.status != "optimal":
            continue
        v = metric_value(fit, metric)
        if v is None:
            continue
        if best is None or v > metric_value(best, metric):
            best = fit
    return best


def sweep_row(fit: Fit, metric: str) -> dict:
    rep = fit.report
    return {
        "l": fit.l,
        "status": fit.selection.status,
        "metric": metric_value(fit, metric),
        "ari": None if rep is None else rep.ari,
        "depth": None if fit.tree is None else fit.tree.depth,
        "clusters": None if fit.tree is None else fit.tree.n_leaves,
        "total_cost": fit.selection.total_cost if fit.usable else None,
    }


def model_json(pipe: Pipeline, fit: Fit, sweep: Optional[Sequence[dict]] = None) -> dict:
    data = pipe.data
    model = {
        "schema_version": SCHEMA_VERSION,
        "generator": f"mwclust {__version__}",
        "config": pipe.config.to_json(),
        "features": list(data.feature_names),
        "scaling": {"offset": data.offset.tolist(), "scale": data.scale.tolist()},
        "binsets": [b.to_json() for b in pipe.binsets],
        "n_candidates": len(pipe.paths),
        "l": fit.l,
        "status": fit.selection.status,
        "total_cost": fit.selection.total_cost,
        "selected": list(fit.selection.chosen),
        "tree": tree_to_json(fit.tree),
        "assignments": fit.labels.tolist(),
        "metrics": fit.report.to_json(),
    }
    if sweep is not None:
        model["sweep"] = [{k: v for k, v in row.items()} for row in sweep]
    return model


def dumps(model: dict) -> str:
    return json.dumps(model, indent=2, ensure_ascii=False) + "\n"


def load_model(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            model = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read model {path}: {exc}") from None
    if model.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"{path}: unsupported model schema_version {model.get('schema_version')!r}")
    for key in ("features", "scaling", "tree"):
        if key not in model:
            raise DatasetError(f"{path}: model is missing {key!r}")
    return model


def write_outputs(out_dir, pipe: Pipeline, fit: Fit, model: dict, sweep: Optional[Sequence[dict]] = None) -> None:
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(dumps(model), encoding="utf-8")
    (out / "tree.txt").write_text(render_text(fit.tree, pipe.data), encoding="utf-8")
    (out / "tree.dot").write_text(render_dot(fit.tree, pipe.data), encoding="utf-8")
    (out / "metrics.json").write_text(json.dumps(fit.report.to_json(), indent=2) + "\n", encoding="utf-8")
    if sweep is not None:
        write_sweep_csv(out / "sweep.csv", sweep)


def write_sweep_csv(path, rows: Sequence[dict]) -> None:
    fields = ["l", "status", "metric", "ari", "depth", "clusters", "total_cost", "solve_seconds"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow({k: "" if row.get(k) is None else row.get(k) for k in fields})


def _show(fit: Fit, pipe: Pipeline, model: dict, fmt: str, out) -> None:
    if fmt == "json":
        out.write(dumps(model))
        return
    out.write(render_dot(fit.tree, pipe.data) if fmt == "dot" else render_text(fit.tree, pipe.data))
    out.write("\n" + fit.report.table() + "\n")


def _status_code(status: str) -> int:
    return {"optimal": EXIT_OK, "infeasible": EXIT_INFEASIBLE}.get(status, EXIT_ABORTED)


def cmd_fit(config: RunConfig, out_dir=None, fmt: str = "text", out=None) -> int:
    out = out or sys.stdout
    if config.leaves is None:
        raise UsageError("fit needs --leaves")
    pipe = build_pipeline(config)
    fit = fit_leaves(pipe, config.leaves)
    if not fit.usable:
        out.write(f"l={fit.l}: {fit.selection.status}, no model\n")
        return _status_code(fit.selection.status)
    model = model_json(pipe, fit)
    if out_dir is not None:
        write_outputs(out_dir, pipe, fit, model)
    _show(fit, pipe, model, fmt, out)
    return _status_code(fit.selection.status)


def run_sweep(config: RunConfig):
    """Fit every l of the sweep on shared candidates; returns ``(pipe, fits, best)``."""
    pipe = build_pipeline(config)
    fits = []
    incumbent = None
    for l in sorted(set(config.sweep)):
        fit = fit_leaves(pipe, l, incumbent)
        if fit.selection.status == "optimal":
            incumbent = fit.selection.chosen  # still feasible with one more leaf
        fits.append(fit)
    return pipe, fits, choose(fits, config.metric)


def cmd_sweep(config: RunConfig, out_dir=None, fmt: str = "text", out=None) -> int:
    out = out or sys.stdout
    pipe, fits, best = run_sweep(config)
    rows = [sweep_row(f, config.metric) for f in fits]
    timed = [dict(r, solve_seconds=round(f.seconds, 4)) for r, f in zip(rows, fits)]
    out.write(sweep_table(timed, config.metric) + "\n")
    if best is None:
        if out_dir is not None:
            FsPath(out_dir).mkdir(parents=True, exist_ok=True)
            write_sweep_csv(FsPath(out_dir) / "sweep.csv", timed)
        aborted = any(f.selection.status == "aborted" for f in fits)
        out.write("no optimal model in the sweep\n")
        return EXIT_ABORTED if aborted else EXIT_INFEASIBLE
    model = model_json(pipe, best, rows)
    if out_dir is not None:
        write_outputs(out_dir, pipe, best, model)
        write_sweep_csv(FsPath(out_dir) / "sweep.csv", timed)
    out.write(f"\nselected l={best.l} by {config.metric}\n")
    _show(best, pipe, model, fmt, out)
    return EXIT_OK


def sweep_table(rows: Sequence[dict], metric: str) -> str:
    head = f"{'l':>3}  {'status':<10}  {metric:>10}  {'ari':>8}  {'depth':>5}  {'clusters':>8}  {'seconds':>8}"
    lines = [head]
    for r in rows:
        def f(v, fmt):
            return "-" if v is None else format(v, fmt)
        lines.append(
            f"{r['l']:>3}  {r['status']:<10}  {f(r['metric'], '10.4f')}  {f(r['ari'], '8.4f')}  "
            f"{f(r['depth'], '5d')}  {f(r['clusters'], '8d')}  {f(r.get('solve_seconds'), '8.3f')}"
        )
    return "\n".join(lines)


def cmd_eval(model_path, input_path, label_column=None, out_dir=None, out=None) -> MetricReport:
    """Re-assign a CSV through a stored model and report metrics."""
    out = out or sys.stdout
    model = load_model(model_path)
    names = list(model["features"])
    if label_column is None:
        label_column = model.get("config", {}).get("label_column")
    raw, truth = load_csv(input_path, label_column)
    index = {n: i for i, n in enumerate(raw.feature_names)}
    missing = [n for n in names if n not in index]
    if missing:
        raise DatasetError(f"{input_path}: missing feature {missing[0]!r} required by the model")
    cols = [index[n] for n in names]
    from .dataset import Dataset

    picked = Dataset(raw.points[:, cols], names)
    data = apply_scaling(picked, model["scaling"]["offset"], model["scaling"]["scale"])
    tree = tree_from_json(model["tree"], names)
    labels = assign(tree, data)
    report = evaluate(data.points, labels, truth)
    if out_dir is not None:
        FsPath(out_dir).mkdir(parents=True, exist_ok=True)
        (FsPath(out_dir) / "metrics.json").write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    out.write(report.table() + "\n")
    return report


# ------------------------------------------------------------------ parsing

def int_range(text: str) -> tuple[int, ...]:
    """``"2..6"`` (inclusive) or ``"2,3,5"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            vals = tuple(range(int(lo), int(hi) + 1))
        else:
            vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a..b' or a comma list of integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return vals


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", required=True, help="CSV file with a header row")
    common.add_argument("--label-column", default=None, help="ground-truth column, excluded from features")
    common.add_argument("--out-dir", default=None, help="write model.json, tree.txt, tree.dot, metrics.json here")
    common.add_argument("--format", choices=FORMATS, default="text", help="what to print on stdout")

    model = _Parser(add_help=False)
    model.add_argument("--strategy", choices=STRATEGIES, default="kmeans")
    model.add_argument("--k-candidates", type=int_range, default=tuple(DEFAULT_K_CANDIDATES), help="e.g. 2..6")
    model.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH)
    model.add_argument("--rho", type=float, default=1.0, help="minimum covered fraction of points")
    model.add_argument("--path-limit", type=int, default=DEFAULT_PATH_LIMIT)
    model.add_argument("--node-limit", type=int, default=DEFAULT_NODE_LIMIT)

    parser = _Parser(prog="mwclust", description="Interpretable clustering with optimal multiway-split trees.")
    parser.add_argument("--version", action="version", version=f"mwclust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", parents=[common, model], help="fit a tree with at most L leaves")
    fit.add_argument("--leaves", type=int, required=True)

    sw = sub.add_parser("sweep", parents=[common, model], help="fit a range of leaf budgets, keep the best")
    sw.add_argument("--sweep", type=int_range, default=tuple(range(2, 11)), help="leaf budgets, e.g. 2..10")
    sw.add_argument("--metric", choices=METRICS, default="silhouette")

    ev = sub.add_parser("eval", help="re-assign a CSV through a stored model.json")
    ev.add_argument("--model", required=True)
    ev.add_argument("--input", required=True)
    ev.add_argument("--label-column", default=None)
    ev.add_argument("--out-dir", default=None)
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(
        input=args.input,
        label_column=args.label_column,
        strategy=args.strategy,
        k_candidates=tuple(args.k_candidates),
        max_depth=args.max_depth,
        rho=args.rho,
        leaves=getattr(args, "leaves", None),
        sweep=tuple(getattr(args, "sweep", range(2, 11))),
        metric=getattr(args, "metric", "silhouette"),
        path_limit=args.path_limit,
        node_limit=args.node_limit,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            cmd_eval(args.model, args.input, args.label_column, args.out_dir)
            return EXIT_OK
        config = config_from_args(args)
        if args.command == "fit":
            return cmd_fit(config, args.out_dir, args.format)
        return cmd_sweep(config, args.out_dir, args.format)
    except (DatasetError, UsageError, PathLimitExceeded, ValueError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"mwclust: error ({module}): {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
