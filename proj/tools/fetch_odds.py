#!/usr/bin/env python3
"""Convert ODDS-style .mat benchmark files into the tiws CSV layout.

Each .mat file must hold a feature matrix ``X`` and a 0/1 vector ``y``
(1 = anomaly). Sources may be local paths or http(s) URLs; downloads are
cached in the output directory. Files saved as MATLAB v7.3 are read with
h5py, older ones with scipy.

    python3 tools/fetch_odds.py --out data/ path/to/cardio.mat https://host/cover.mat
"""

import argparse
import csv
import pathlib
import sys
import urllib.parse
import urllib.request

import numpy as np


def load_mat(path: pathlib.Path):
    try:
        from scipy.io import loadmat

        mat = loadmat(path)
        return np.asarray(mat["X"], dtype=float), np.asarray(mat["y"]).ravel()
    except NotImplementedError:
        import h5py

        with h5py.File(path, "r") as f:
            # v7.3 stores matrices transposed.
            return np.asarray(f["X"], dtype=float).T, np.asarray(f["y"]).ravel()


def fetch(source: str, cache: pathlib.Path) -> pathlib.Path:
    parsed = urllib.parse.urlparse(source)
    if parsed.scheme not in ("http", "https"):
        return pathlib.Path(source)
    target = cache / pathlib.Path(parsed.path).name
    if not target.exists():
        print(f"downloading {source}", file=sys.stderr)
        urllib.request.urlretrieve(source, target)
    return target


def write_csv(x: np.ndarray, y: np.ndarray, out: pathlib.Path) -> None:
    labels = y.astype(int)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError(f"{out.name}: labels must be 0/1")
    with out.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{j}" for j in range(x.shape[1])] + ["label"])
        for row, label in zip(x, labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("sources", nargs="+", help=".mat paths or URLs")
    ap.add_argument("--out", type=pathlib.Path, required=True, help="output directory")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    for source in args.sources:
        mat_path = fetch(source, args.out)
        x, y = load_mat(mat_path)
        if not np.isfinite(x).all():
            print(f"{mat_path.name}: non-finite features, skipped", file=sys.stderr)
            continue
        out = args.out / (mat_path.stem + ".csv")
        write_csv(x, y, out)
        print(f"{out}: n={x.shape[0]} d={x.shape[1]} anomalies={int(y.sum())} "
              f"({100.0 * y.mean():.2f}%)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
