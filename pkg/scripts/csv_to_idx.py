"""Convert a CSV of MNIST digits (784 pixel columns, then a label column) to IDX files.

Useful when only a CSV subset is at hand, e.g. the 5000-image subset that
ships inside the ``mlxtend`` wheel at ``mlxtend/data/data/mnist_5k.csv.gz``::

    python scripts/csv_to_idx.py mnist_5k.csv.gz OUT_DIR

writes ``train-images-idx3-ubyte`` and ``train-labels-idx1-ubyte`` to OUT_DIR.
"""

import argparse
import gzip
from pathlib import Path

import numpy as np

from metarep.mnist import make_idx


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("out_dir")
    ap.add_argument("--label-first", action="store_true", help="label is the first column")
    args = ap.parse_args(argv)
    opener = gzip.open if args.csv.endswith(".gz") else open
    with opener(args.csv, "rt") as fh:
        table = np.loadtxt(fh, delimiter=",")
    if args.label_first:
        labels, pixels = table[:, 0], table[:, 1:]
    else:
        labels, pixels = table[:, -1], table[:, :-1]
    if pixels.shape[1] != 784:
        raise SystemExit(f"expected 784 pixel columns, got {pixels.shape[1]}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = pixels.reshape(-1, 28, 28).astype(np.uint8)
    (out / "train-images-idx3-ubyte").write_bytes(make_idx(images).to_bytes())
    (out / "train-labels-idx1-ubyte").write_bytes(make_idx(labels.astype(np.uint8)).to_bytes())
    print(f"wrote {images.shape[0]} images to {out}")


if __name__ == "__main__":
    main()
