"""Convert a USPS download to the CSV layout read by the package (256 pixels, then 'label').

Supported inputs:
  * LIBSVM files (usps, usps.t, optionally .bz2): labels 1..10, pixels in [-1, 1]
  * HDF5 (usps.h5) with train/ and test/ groups holding 'data' and 'target'; needs h5py

    python scripts/convert_usps.py usps.bz2 usps_train.csv
    python scripts/convert_usps.py usps.h5 usps_train.csv --split train
"""

import argparse
import bz2
from pathlib import Path

import numpy as np

from labelalign.datasets import save_matrix_csv

N_PIXELS = 256


def read_libsvm(path):
    opener = bz2.open if str(path).endswith(".bz2") else open
    labels, rows = [], []
    with opener(path, "rt") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            row = np.zeros(N_PIXELS)
            for item in parts[1:]:
                idx, val = item.split(":")
                row[int(idx) - 1] = float(val)
            labels.append(int(float(parts[0])) - 1)  # LIBSVM numbers digits 1..10
            rows.append(row)
    return np.array(rows), np.array(labels)


def read_h5(path, split):
    import h5py

    with h5py.File(path, "r") as fh:
        return np.asarray(fh[split]["data"], dtype=np.float64), np.asarray(fh[split]["target"])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source")
    ap.add_argument("dest")
    ap.add_argument("--split", choices=("train", "test"), default="train", help="HDF5 group")
    args = ap.parse_args()
    if Path(args.source).suffix == ".h5":
        x, y = read_h5(args.source, args.split)
    else:
        x, y = read_libsvm(args.source)
    if x.shape[1] != N_PIXELS:
        raise SystemExit(f"expected {N_PIXELS} pixels per image, got {x.shape[1]}")
    save_matrix_csv(args.dest, x.reshape(len(x), -1), y, names=[f"p{i}" for i in range(N_PIXELS)])
    print(f"wrote {len(y)} images to {args.dest}")


if __name__ == "__main__":
    main()
