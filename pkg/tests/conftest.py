import importlib.util
import os
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tools"))

# Full MNIST (train-images-idx3-ubyte, train-labels-idx1-ubyte) may be supplied
# through this variable; otherwise the 5000-image subset shipped with mlxtend
# is converted to IDX once per session.
MNIST_ENV = "BILEVEL_TUNE_MNIST_DIR"


def full_mnist_paths():
    root = os.environ.get(MNIST_ENV)
    if not root:
        return None
    images = Path(root) / "train-images-idx3-ubyte"
    labels = Path(root) / "train-labels-idx1-ubyte"
    if images.exists() and labels.exists():
        return str(images), str(labels)
    return None


@pytest.fixture(scope="session")
def mnist_paths(tmp_path_factory):
    full = full_mnist_paths()
    if full:
        return full
    if importlib.util.find_spec("mlxtend") is None:
        pytest.skip(f"no MNIST data: install mlxtend or set {MNIST_ENV}")
    import mnist5k_to_idx

    return mnist5k_to_idx.convert(str(tmp_path_factory.mktemp("mnist")))


@pytest.fixture(scope="session")
def mnist(mnist_paths):
    from bilevel_tune.data_io import load_mnist

    return load_mnist(*mnist_paths)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(module.RESULTS, key=lambda k: int(k[1:])):
        terminalreporter.write_line(module.RESULTS[key][1])
