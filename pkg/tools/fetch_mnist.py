"""Download the MNIST training files and unpack them to plain IDX.

Usage: python tools/fetch_mnist.py OUT_DIR [--base-url URL]

Writes ``train-images-idx3-ubyte`` and ``train-labels-idx1-ubyte`` to
OUT_DIR. Only the 60000-image training pair is fetched; the experiments draw
every split from it. The package itself never downloads anything.
"""

import argparse
import gzip
import hashlib
import shutil
import urllib.request
from pathlib import Path

DEFAULT_BASE = "https://ossci-datasets.s3.amazonaws.com/mnist/"
FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch(out_dir, base_url=DEFAULT_BASE):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        target = out / name
        if not target.exists():
            gz = out / (name + ".gz")
            with urllib.request.urlopen(base_url + name + ".gz") as resp, open(gz, "wb") as fh:
                shutil.copyfileobj(resp, fh)
            with gzip.open(gz, "rb") as src, open(target, "wb") as dst:
                shutil.copyfileobj(src, dst)
            gz.unlink()
        print(f"{target}  sha256={sha256(target)}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir")
    parser.add_argument("--base-url", default=DEFAULT_BASE)
    args = parser.parse_args()
    fetch(args.out_dir, args.base_url)
