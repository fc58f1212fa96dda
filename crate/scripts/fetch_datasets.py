#!/usr/bin/env python3
"""Fetch the public benchmark datasets used by the acceptance suite.

Adult Income is taken from the `responsibly` wheel (UCI adult.data, 32,561 rows).
California Housing is taken from the `pytorch-widedeep` wheel (StatLib/sklearn
layout, 20,640 rows); the target is rescaled from units of $100,000 to dollars.

Both wheels are fetched with `pip download --no-deps`, so any configured PyPI
mirror works. Reading the housing parquet file requires pandas with pyarrow.

Usage: python3 scripts/fetch_datasets.py [--out datasets/data] [--wheel-dir DIR]
"""

import argparse
import csv
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]

HOUSING_COLUMNS = [
    "MedInc", "HouseAge", "AveRooms", "AveBedrms", "Population", "AveOccup",
    "Latitude", "Longitude",
]


def download(package, dest):
    wheels = glob.glob(os.path.join(dest, package.replace("-", "_") + "-*.whl"))
    if wheels:
        return zipfile.ZipFile(wheels[0])
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "--timeout", "120",
         "--retries", "10", package, "-d", dest],
        check=True,
    )
    wheels = glob.glob(os.path.join(dest, package.replace("-", "_") + "-*.whl"))
    if not wheels:
        sys.exit(f"no wheel found for {package}")
    return zipfile.ZipFile(wheels[0])


def write_adult(wheel, out):
    raw = wheel.read("responsibly/dataset/adult/adult.data").decode("utf-8")
    path = os.path.join(out, "adult.csv")
    n = 0
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ADULT_COLUMNS)
        for line in raw.splitlines():
            if not line.strip():
                continue
            cells = [c.strip() for c in line.split(",")]
            cells[-1] = "1" if cells[-1].startswith(">50K") else "0"
            w.writerow(cells)
            n += 1
    print(f"wrote {path} ({n} rows)")


def write_housing(wheel, out):
    import pandas as pd

    blob = wheel.read("pytorch_widedeep/datasets/data/california_housing.parquet.brotli")
    df = pd.read_parquet(io.BytesIO(blob))
    path = os.path.join(out, "cal_housing.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(HOUSING_COLUMNS + ["median_house_value"])
        for row in df.itertuples(index=False):
            values = [repr(float(getattr(row, c))) for c in HOUSING_COLUMNS]
            values.append(str(int(round(row.MedHouseVal * 100000))))
            w.writerow(values)
    print(f"wrote {path} ({len(df)} rows)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "datasets", "data"))
    parser.add_argument("--wheel-dir", help="reuse (or keep) downloaded wheels in this directory")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheels = args.wheel_dir or tmp
        os.makedirs(wheels, exist_ok=True)
        write_adult(download("responsibly", wheels), args.out)
        write_housing(download("pytorch-widedeep", wheels), args.out)


if __name__ == "__main__":
    main()
