#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the npm `mnist` package into
gzipped IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset.py package/src/digits data/mnist-subset

Pixels are stored in the package as byte/255 rounded to three decimals, so
round(v * 255) recovers the original byte. Samples are interleaved with a
fixed permutation (seed 20240917) so the trailing 10% validation split is
class-balanced.
"""
import gzip
import json
import os
import random
import struct
import sys


def main(src, dst):
    samples = []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as fh:
            raw = json.load(fh)["data"]
        assert len(raw) % 784 == 0
        for i in range(len(raw) // 784):
            px = bytes(round(v * 255) for v in raw[i * 784:(i + 1) * 784])
            samples.append((px, digit))
    random.Random(20240917).shuffle(samples)
    os.makedirs(dst, exist_ok=True)
    n = len(samples)
    with gzip.GzipFile(os.path.join(dst, "images-idx3-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for px, _ in samples:
            fh.write(px)
    with gzip.GzipFile(os.path.join(dst, "labels-idx1-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {dst}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
