"""Export scikit-learn's bundled 8x8 handwritten digits as IDX files.

The output mirrors the MNIST file layout (idx3 images, idx1 labels) so the
same loader handles both. Pixel intensities 0..16 are rescaled to 0..255.
A fixed stratified 80/20 split is used for train/test.
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    images = np.rint(digits.images * 255.0 / 16.0).clip(0, 255)
    labels = digits.target
    rng = np.random.default_rng(20240601)
    train_idx, test_idx = [], []
    for label in range(10):
        idx = np.flatnonzero(labels == label)
        rng.shuffle(idx)
        cut = int(round(0.8 * len(idx)))
        train_idx.extend(idx[:cut])
        test_idx.extend(idx[cut:])
    train_idx = np.sort(np.array(train_idx))
    test_idx = np.sort(np.array(test_idx))
    write_images(out / "train-images-idx3-ubyte", images[train_idx])
    write_labels(out / "train-labels-idx1-ubyte", labels[train_idx])
    write_images(out / "t10k-images-idx3-ubyte", images[test_idx])
    write_labels(out / "t10k-labels-idx1-ubyte", labels[test_idx])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/digits")
