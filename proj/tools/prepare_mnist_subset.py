#!/usr/bin/env python3
"""Writes a 5000-image MNIST subset as gzipped IDX files.

The subset (500 images per digit) ships inside the mlxtend wheel as
mnist_5k.csv.gz. The first 400 images of each digit go to the train files,
the remaining 100 to the t10k files.

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 tools/prepare_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist5k
"""
import argparse
import gzip
import io
import pathlib
import struct
import zipfile

import numpy as np

TRAIN_PER_CLASS = 400


def write_idx(path, array):
    dtype_code = 0x08  # unsigned byte
    header = struct.pack(">BBBB", 0, 0, dtype_code, array.ndim)
    header += b"".join(struct.pack(">I", d) for d in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + array.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("wheel")
    parser.add_argument("out_dir")
    args = parser.parse_args()

    with zipfile.ZipFile(args.wheel) as z:
        raw = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",", dtype=np.int64)
    pixels, labels = table[:, :-1].reshape(-1, 28, 28), table[:, -1]

    train_idx, test_idx = [], []
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        train_idx.extend(idx[:TRAIN_PER_CLASS])
        test_idx.extend(idx[TRAIN_PER_CLASS:])
    train_idx, test_idx = np.sort(train_idx), np.sort(test_idx)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte.gz", pixels[train_idx])
    write_idx(out / "train-labels-idx1-ubyte.gz", labels[train_idx])
    write_idx(out / "t10k-images-idx3-ubyte.gz", pixels[test_idx])
    write_idx(out / "t10k-labels-idx1-ubyte.gz", labels[test_idx])
    print(f"train {len(train_idx)}  test {len(test_idx)}")


if __name__ == "__main__":
    main()
