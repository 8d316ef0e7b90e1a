import json

import numpy as np
import pytest

from mwclust import cli
from mwclust.cli import EXIT_ABORTED, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, RunConfig, UsageError, main
from mwclust.dataset import UNASSIGNED


@pytest.fixture
def toy(write_csv):
    """Two tight, well separated groups in two features."""
    rng = np.random.default_rng(0)
    a = rng.normal([0.1, 0.2], 0.01, size=(12, 2))
    b = rng.normal([0.9, 0.8], 0.01, size=(12, 2))
    rows = [(round(x, 4), round(y, 4), "left") for x, y in a] + [(round(x, 4), round(y, 4), "right") for x, y in b]
    return write_csv("toy.csv", ["x", "y", "side"], rows)


@pytest.fixture
def blobs(write_csv):
    rng = np.random.default_rng(4)
    centers = np.array([[0.2, 0.2, 0.5], [0.8, 0.3, 0.1], [0.5, 0.9, 0.9]])
    rows = []
    for c, center in enumerate(centers):
        for x in rng.normal(center, 0.08, size=(15, 3)):
            rows.append((*[round(v, 4) for v in x], c))
    return write_csv("blobs.csv", ["u", "v", "w", "group"], rows)


def run(argv, capsys):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_separable_toy(toy, tmp_path, capsys):
    out = tmp_path / "out"
    code, text, _ = run(["fit", "--input", toy, "--label-column", "side", "--leaves", 2, "--out-dir", out], capsys)
    assert code == EXIT_OK
    model = json.loads((out / "model.json").read_text())
    assert model["tree"]["n_leaves"] == 2
    assert model["metrics"]["ari"] == 1.0
    assert model["metrics"]["silhouette"] > 0.95
    assert UNASSIGNED not in model["assignments"]
    for name in ("tree.txt", "tree.dot", "metrics.json"):
        assert (out / name).is_file()
    assert (out / "tree.txt").read_text() in text
    assert "silhouette" in text


def test_fit_formats(toy, capsys):
    code, dot, _ = run(["fit", "--input", toy, "--label-column", "side", "--leaves", 2, "--format", "dot"], capsys)
    assert code == EXIT_OK and dot.startswith("digraph tree {")
    code, blob, _ = run(["fit", "--input", toy, "--label-column", "side", "--leaves", 2, "--format", "json"], capsys)
    model = json.loads(blob)
    assert model["schema_version"] == cli.SCHEMA_VERSION
    assert set(model) >= {"config", "features", "scaling", "binsets", "selected", "tree", "assignments", "metrics"}
    assert all("k_selected" in b for b in model["binsets"])


def test_single_leaf_is_infeasible(toy, tmp_path, capsys):
    code, text, _ = run(["fit", "--input", toy, "--label-column", "side", "--leaves", 1, "--out-dir", tmp_path / "o"], capsys)
    assert code == EXIT_INFEASIBLE
    assert "infeasible" in text
    assert not (tmp_path / "o" / "model.json").exists()


def test_sweep_with_every_budget_infeasible(toy, tmp_path, capsys):
    code, text, _ = run(["sweep", "--input", toy, "--label-column", "side", "--sweep", "0..1", "--out-dir", tmp_path / "o"], capsys)
    assert code == EXIT_INFEASIBLE
    lines = text.splitlines()
    assert lines[1].split()[:2] == ["0", "infeasible"] and lines[2].split()[:2] == ["1", "infeasible"]
    assert (tmp_path / "o" / "sweep.csv").is_file()


def test_node_limit_abort_exit_code(blobs, capsys):
    code, _, _ = run(["fit", "--input", blobs, "--label-column", "group", "--leaves", 6, "--node-limit", 1], capsys)
    assert code == EXIT_ABORTED


def test_sweep_best_matches_a_direct_fit(blobs, tmp_path, capsys):
    out = tmp_path / "s"
    code, text, _ = run(["sweep", "--input", blobs, "--label-column", "group", "--sweep", "2..5", "--out-dir", out], capsys)
    assert code == EXIT_OK
    swept = json.loads((out / "model.json").read_text())
    l = swept["l"]
    rows = swept["sweep"]
    best = max((r for r in rows if r["status"] == "optimal"), key=lambda r: (r["metric"], -r["l"]))
    assert best["l"] == l
    assert (out / "sweep.csv").read_text().splitlines()[0].startswith("l,status,metric,ari,depth,clusters")
    code, _, _ = run(["fit", "--input", blobs, "--label-column", "group", "--leaves", l, "--out-dir", tmp_path / "f"], capsys)
    fitted = json.loads((tmp_path / "f" / "model.json").read_text())
    for key in ("selected", "total_cost", "tree", "assignments", "metrics"):
        assert fitted[key] == swept[key]


def test_runs_are_byte_identical(blobs, tmp_path, capsys):
    for name in ("a", "b"):
        run(["sweep", "--input", blobs, "--label-column", "group", "--sweep", "2..4", "--out-dir", tmp_path / name], capsys)
    assert (tmp_path / "a" / "model.json").read_bytes() == (tmp_path / "b" / "model.json").read_bytes()


def test_eval_on_training_data_reproduces_fit(blobs, tmp_path, capsys):
    out = tmp_path / "m"
    run(["fit", "--input", blobs, "--label-column", "group", "--leaves", 3, "--out-dir", out], capsys)
    model = json.loads((out / "model.json").read_text())
    code, text, _ = run(["eval", "--model", out / "model.json", "--input", blobs, "--out-dir", tmp_path / "e"], capsys)
    assert code == EXIT_OK
    assert json.loads((tmp_path / "e" / "metrics.json").read_text()) == model["metrics"]


def test_eval_is_invariant_to_truth_relabeling(blobs, tmp_path, write_csv, capsys):
    out = tmp_path / "m"
    run(["fit", "--input", blobs, "--label-column", "group", "--leaves", 3, "--out-dir", out], capsys)
    lines = blobs.read_text().splitlines()
    rename = {"0": "two", "1": "zero", "2": "one"}
    rows = [line.rsplit(",", 1) for line in lines[1:]]
    relabeled = write_csv("relabeled.csv", lines[0].split(","), [(a, rename[b]) for a, b in rows])
    report = cli.cmd_eval(out / "model.json", relabeled, "group")
    model = json.loads((out / "model.json").read_text())
    assert report.ari == model["metrics"]["ari"]


def test_eval_reorders_columns_and_names_missing_ones(blobs, tmp_path, write_csv, capsys):
    out = tmp_path / "m"
    run(["fit", "--input", blobs, "--label-column", "group", "--leaves", 3, "--out-dir", out], capsys)
    model = json.loads((out / "model.json").read_text())
    lines = [line.split(",") for line in blobs.read_text().splitlines()]
    swapped = write_csv("swapped.csv", ["group", "w", "u", "v"], [(g, w, u, v) for u, v, w, g in lines[1:]])
    assert cli.cmd_eval(out / "model.json", swapped, "group").to_json() == model["metrics"]
    broken = write_csv("broken.csv", ["u", "vv", "w", "group"], lines[1:])
    code, _, err = run(["eval", "--model", out / "model.json", "--input", broken, "--label-column", "group"], capsys)
    assert code == EXIT_INPUT
    assert "'v'" in err


def test_usage_errors_exit_one(toy, capsys):
    assert run(["fit", "--input", toy], capsys)[0] == EXIT_INPUT
    assert run(["fit", "--input", toy, "--label-column", "side", "--leaves", 2, "--rho", 1.5], capsys)[0] == EXIT_INPUT
    assert run(["sweep", "--input", toy, "--label-column", "side", "--sweep", "x..y"], capsys)[0] == EXIT_INPUT
    assert run(["fit", "--input", toy, "--leaves", 2, "--label-column", "nope"], capsys)[0] == EXIT_INPUT
    code, _, err = run(["fit", "--input", "/no/such.csv", "--leaves", 2], capsys)
    assert code == EXIT_INPUT and "dataset" in err


def test_run_config_invariants():
    with pytest.raises(UsageError):
        RunConfig(input="x", max_depth=0)
    with pytest.raises(UsageError):
        RunConfig(input="x", sweep=())
    with pytest.raises(UsageError):
        RunConfig(input="x", k_candidates=())
    assert cli.int_range("2..6") == (2, 3, 4, 5, 6)
    assert cli.int_range("3,5") == (3, 5)


def test_seeds_three_leaves(seeds_pipeline):
    fit = cli.fit_leaves(seeds_pipeline, 3)
    assert fit.selection.status == "optimal"
    assert fit.tree.n_leaves == 3
    assert fit.tree.depth == 1


def test_seeds_dunn_and_silhouette_pick_the_same_model(seeds_pipeline):
    fits = []
    incumbent = None
    for l in range(2, 11):
        fit = cli.fit_leaves(seeds_pipeline, l, incumbent)
        incumbent = fit.selection.chosen
        fits.append(fit)
    assert cli.choose(fits, "dunn").l == cli.choose(fits, "silhouette").l
