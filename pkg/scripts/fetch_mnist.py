"""Download the MNIST training IDX files and check their headers.

    python scripts/fetch_mnist.py OUT_DIR [--base-url URL]

The default base URL is a public mirror of the original files. Pass
``--base-url`` for another mirror that serves the same ``*.gz`` names.
Without network access, copy the files by hand or convert a CSV subset with
``scripts/csv_to_idx.py``.
"""

import argparse
import sys
import urllib.request
from pathlib import Path

from metarep.mnist import read_idx

DEFAULT_BASE = "https://ossci-datasets.s3.amazonaws.com/mnist/"
FILES = ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--base-url", default=DEFAULT_BASE)
    args = ap.parse_args(argv)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        dest = out / name
        if not dest.exists():
            url = args.base_url.rstrip("/") + "/" + name
            print(f"fetching {url}")
            urllib.request.urlretrieve(url, dest)
        idx = read_idx(dest)
        print(f"{dest}: dims {idx.dims}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
