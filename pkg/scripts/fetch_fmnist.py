#!/usr/bin/env python3
"""Download and decompress the Fashion-MNIST IDX files.

Usage: python scripts/fetch_fmnist.py [target_dir]

Defaults to ./data/fmnist. Needs outbound network access; the acceptance
suite (criteria 7-9) picks the files up from RETROSPECT_FMNIST_DIR or the
default location.
"""

import gzip
import sys
import urllib.request
from pathlib import Path

MIRROR = "https://storage.googleapis.com/tensorflow/tf-keras-datasets"
FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def main() -> int:
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/fmnist")
    target.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        dest = target / name
        if dest.exists():
            print(f"{dest} already present")
            continue
        url = f"{MIRROR}/{name}.gz"
        print(f"fetching {url}")
        with urllib.request.urlopen(url) as resp:
            compressed = resp.read()
        dest.write_bytes(gzip.decompress(compressed))
        print(f"wrote {dest} ({dest.stat().st_size} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
