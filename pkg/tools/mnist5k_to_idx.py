"""Convert the 5000-image MNIST subset bundled with mlxtend into IDX files.

Usage: python tools/mnist5k_to_idx.py OUT_DIR

Writes ``mnist5k-images-idx3-ubyte`` and ``mnist5k-labels-idx1-ubyte``.
Requires ``mlxtend`` to be installed (only its data file is read).
"""

import importlib.util
import os
import sys

import numpy as np

from bilevel_tune.data_io import write_idx

IMAGES = "mnist5k-images-idx3-ubyte"
LABELS = "mnist5k-labels-idx1-ubyte"


def bundled_csv():
    spec = importlib.util.find_spec("mlxtend")
    if spec is None:
        raise FileNotFoundError("mlxtend is not installed")
    path = os.path.join(os.path.dirname(spec.origin), "data", "data", "mnist_5k.csv.gz")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return path


def convert(out_dir):
    table = np.loadtxt(bundled_csv(), delimiter=",", dtype=np.int64)
    pixels, labels = table[:, :-1], table[:, -1]
    os.makedirs(out_dir, exist_ok=True)
    images_path = os.path.join(out_dir, IMAGES)
    labels_path = os.path.join(out_dir, LABELS)
    write_idx(images_path, pixels.reshape(-1, 28, 28).astype(np.uint8))
    write_idx(labels_path, labels.astype(np.uint8))
    return images_path, labels_path


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    for p in convert(sys.argv[1]):
        print(p)
