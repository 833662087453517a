#!/usr/bin/env python3
"""Write MNIST digits 3 and 5 as CSV for `upal` and the acceptance run.

Usage: python3 scripts/fetch_mnist35.py OUT_DIR

Downloads the standard 60k/10k split through keras (falls back to OpenML via
scikit-learn), keeps digits 3 and 5, scales pixels to [0, 1] and writes
OUT_DIR/train.csv and OUT_DIR/test.csv: 784 pixel columns then the digit.
Prints the SHA-256 of both files so a local copy can be pinned.
"""

import hashlib
import sys
from pathlib import Path

import numpy as np


def load():
    try:
        from tensorflow.keras.datasets import mnist

        (xtr, ytr), (xte, yte) = mnist.load_data()
        return xtr.reshape(len(xtr), -1), ytr, xte.reshape(len(xte), -1), yte
    except Exception as err:  # noqa: BLE001
        print(f"keras download failed ({err}); trying OpenML", file=sys.stderr)
    from sklearn.datasets import fetch_openml

    x, y = fetch_openml("mnist_784", version=1, return_X_y=True, as_frame=False)
    y = y.astype(int)
    return x[:60000], y[:60000], x[60000:], y[60000:]


def write(path, x, y):
    keep = (y == 3) | (y == 5)
    rows = np.column_stack([x[keep] / 255.0, y[keep]])
    fmt = ["%.6g"] * x.shape[1] + ["%d"]
    np.savetxt(path, rows, delimiter=",", fmt=fmt)
    return int(keep.sum())


def main():
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    xtr, ytr, xte, yte = load()
    for name, x, y in [("train.csv", xtr, ytr), ("test.csv", xte, yte)]:
        n = write(out / name, x, y)
        digest = hashlib.sha256((out / name).read_bytes()).hexdigest()
        print(f"{name}: {n} rows, sha256 {digest}")


if __name__ == "__main__":
    main()
