#!/usr/bin/env python3
"""Rebuild the bundled MNIST files in data/mnist.

Source: npm package `mnist-data` 1.2.6, which ships the original MNIST IDX
files. The test split (t10k, 10,000 images) is copied verbatim; the training
split keeps the first 10,000 of the 60,000 training images.

Usage:
  npm pack mnist-data@1.2.6
  python3 scripts/build_mnist_subset.py mnist-data-1.2.6.tgz data/mnist
"""
import hashlib
import os
import struct
import sys
import tarfile

TRAIN_COUNT = 10_000


def main(tgz, out):
    os.makedirs(out, exist_ok=True)
    with tarfile.open(tgz) as tar:
        read = lambda name: tar.extractfile(f"package/data/{name}").read()
        for name in ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"):
            with open(os.path.join(out, name), "wb") as f:
                f.write(read(name))

        images = read("train-images-idx3-ubyte")
        magic, _, rows, cols = struct.unpack(">IIII", images[:16])
        assert magic == 0x803
        with open(os.path.join(out, "train-images-idx3-ubyte"), "wb") as f:
            f.write(struct.pack(">IIII", magic, TRAIN_COUNT, rows, cols))
            f.write(images[16 : 16 + TRAIN_COUNT * rows * cols])

        labels = read("train-labels-idx1-ubyte")
        magic, _ = struct.unpack(">II", labels[:8])
        assert magic == 0x801
        with open(os.path.join(out, "train-labels-idx1-ubyte"), "wb") as f:
            f.write(struct.pack(">II", magic, TRAIN_COUNT))
            f.write(labels[8 : 8 + TRAIN_COUNT])

    for name in sorted(os.listdir(out)):
        data = open(os.path.join(out, name), "rb").read()
        print(f"{hashlib.sha256(data).hexdigest()}  {name}  ({len(data)} bytes)")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
