"""Write a small MNIST sample as standard IDX files.

The full MNIST archives are not always reachable; ``mlxtend`` ships a
5000-image sample (500 per digit) that we re-encode as
``train-images-idx3-ubyte.gz`` etc. so that the regular IDX loader is used.
Train and test rows are disjoint.

    python -m pupolicy.mnist_subset OUT_DIR [--n-test 1500] [--seed 0]
"""

import argparse
import gzip
from pathlib import Path

import numpy as np

from .data import encode_idx

FILENAMES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}


def load_sample():
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise RuntimeError("the MNIST sample needs the optional 'mlxtend' package") from exc
    x, y = mnist_data()
    return np.rint(x).astype(np.uint8).reshape(-1, 28, 28), y.astype(np.uint8)


def write_mnist_subset(out_dir, n_test=1500, seed=0):
    """Shuffle the sample with ``seed``, hold out ``n_test`` rows, write four IDX files."""
    images, labels = load_sample()
    order = np.random.default_rng(seed).permutation(len(labels))
    test_idx, train_idx = order[:n_test], order[n_test:]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads = {
        "train_images": images[train_idx],
        "train_labels": labels[train_idx],
        "test_images": images[test_idx],
        "test_labels": labels[test_idx],
    }
    paths = {}
    for key, array in payloads.items():
        path = out / FILENAMES[key]
        # fixed mtime keeps the gzip bytes reproducible
        path.write_bytes(gzip.compress(encode_idx(array), mtime=0))
        paths[key] = path
    return paths


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir")
    parser.add_argument("--n-test", type=int, default=1500)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    for key, path in write_mnist_subset(args.out_dir, args.n_test, args.seed).items():
        print(f"{key}: {path}")


if __name__ == "__main__":
    main()
