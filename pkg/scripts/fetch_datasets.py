#!/usr/bin/env python3
"""Fetch the optional benchmark datasets into ``datasets/`` as plain CSV.

    python3 scripts/fetch_datasets.py                    # Statlog Vehicle + Real Estate (UCI)
    python3 scripts/fetch_datasets.py --customer FILE   # convert a Kaggle download

Seeds ships inside the package and needs no fetching. The Real Estate sheet
is an .xlsx file, so that step needs ``pandas`` and ``openpyxl``
(``pip install pandas openpyxl``). The customer purchasing behaviour data
sits behind a Kaggle login; download ``Customer Purchasing Behaviors.csv``
by hand and pass it with ``--customer``.

Outputs (label column in parentheses):
    statlog_vehicle.csv        18 shape features (class)
    real_estate.csv            the raw sheet, target "Y house price of unit area" kept
    real_estate_labeled.csv    6 features (price_band: 1-D K-means, K=3, on the raw target)
    customer_purchasing.csv    4 features (loyalty: integer part of loyalty_score)
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "datasets"

VEHICLE_URL = "https://archive.ics.uci.edu/static/public/149/statlog+vehicle+silhouettes.zip"
ESTATE_URL = "https://archive.ics.uci.edu/static/public/477/real+estate+valuation+data+set.zip"

VEHICLE_COLUMNS = [
    "COMPACTNESS", "CIRCULARITY", "DISTANCE CIRCULARITY", "RADIUS RATIO",
    "PR.AXIS ASPECT RATIO", "MAX.LENGTH ASPECT RATIO", "SCATTER RATIO", "ELONGATEDNESS",
    "PR.AXIS RECTANGULARITY", "MAX.LENGTH RECTANGULARITY", "SCALED VARIANCE ALONG MAJOR AXIS",
    "SCALED VARIANCE ALONG MINOR AXIS", "SCALED RADIUS OF GYRATION", "SKEWNESS ABOUT MAJOR AXIS",
    "SKEWNESS ABOUT MINOR AXIS", "KURTOSIS ABOUT MINOR AXIS", "KURTOSIS ABOUT MAJOR AXIS",
    "HOLLOWS RATIO",
]
ESTATE_TARGET = "Y house price of unit area"
CUSTOMER_FEATURES = ["age", "annual_income", "purchase_amount", "purchase_frequency"]


def download(url: str) -> bytes:
    print(f"downloading {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read()


def write(name: str, header, rows) -> Path:
    OUT.mkdir(exist_ok=True)
    path = OUT / name
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return path


def vehicle_rows(archive: bytes) -> list[list[str]]:
    """The UCI zip holds xaa.dat .. xai.dat: 18 integers and a class name per line."""
    rows = []
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        for name in sorted(n for n in zf.namelist() if n.endswith(".dat")):
            for line in zf.read(name).decode("ascii").splitlines():
                cells = line.split()
                if len(cells) == 19:
                    rows.append(cells)
    return rows


def fetch_vehicle() -> None:
    rows = vehicle_rows(download(VEHICLE_URL))
    write("statlog_vehicle.csv", VEHICLE_COLUMNS + ["class"], rows)


def fetch_estate() -> None:
    try:
        import pandas as pd
    except ImportError:
        sys.exit("Real Estate needs pandas and openpyxl: pip install pandas openpyxl")
    archive = download(ESTATE_URL)
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        sheet = next(n for n in zf.namelist() if n.endswith(".xlsx"))
        frame = pd.read_excel(io.BytesIO(zf.read(sheet)))
    frame = frame.drop(columns=[c for c in frame.columns if str(c).strip() == "No"])
    frame.columns = [str(c).strip() for c in frame.columns]
    write("real_estate.csv", list(frame.columns), frame.astype(str).values.tolist())

    from mwclust.discretize import kmeans_1d

    target = frame[ESTATE_TARGET].to_numpy(dtype=float)
    res = kmeans_1d(target, 3)
    features = [c for c in frame.columns if c != ESTATE_TARGET]
    rows = [[*map(str, r), int(b)] for r, b in zip(frame[features].values.tolist(), res.assignment)]
    write("real_estate_labeled.csv", features + ["price_band"], rows)


def convert_customer(path: Path) -> None:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [[r[c] for c in CUSTOMER_FEATURES] + [int(float(r["loyalty_score"]))] for r in reader]
    write("customer_purchasing.csv", CUSTOMER_FEATURES + ["loyalty"], rows)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--customer", type=Path, help="path to the Kaggle customer purchasing CSV")
    ap.add_argument("--skip-uci", action="store_true", help="do not download the UCI datasets")
    args = ap.parse_args(argv)
    failed = False
    if not args.skip_uci:
        for step in (fetch_vehicle, fetch_estate):
            try:
                step()
            except OSError as exc:
                print(f"{step.__name__}: {exc}", file=sys.stderr)
                failed = True
    if args.customer is not None:
        convert_customer(args.customer)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
