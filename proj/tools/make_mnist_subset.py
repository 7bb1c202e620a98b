#!/usr/bin/env python3
"""Build a small MNIST split in IDX format from the 5000-sample subset bundled with mlxtend.

Usage: make_mnist_subset.py <mlxtend wheel or mnist_5k.csv.gz> <out dir>

The csv rows are sorted by class; each class contributes its first 400 rows to
the training split and the remaining 100 to the test split. Both splits are
interleaved with a fixed permutation so any prefix is close to class balanced.
"""
import gzip
import io
import random
import struct
import sys
import zipfile
from pathlib import Path


def read_rows(src: Path):
    if src.suffix == ".whl":
        raw = zipfile.ZipFile(src).read("mlxtend/data/data/mnist_5k.csv.gz")
    else:
        raw = src.read_bytes()
    text = gzip.decompress(raw).decode()
    rows = []
    for line in io.StringIO(text):
        vals = [int(float(v)) for v in line.strip().split(",")]
        rows.append((vals[:-1], vals[-1]))
    return rows


def write_idx(out: Path, stem: str, rows):
    with open(out / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(bytes(pixels))
    with open(out / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    by_class = {}
    for pixels, label in read_rows(src):
        by_class.setdefault(label, []).append((pixels, label))
    train, test = [], []
    for label in sorted(by_class):
        train += by_class[label][:400]
        test += by_class[label][400:]
    rng = random.Random(20240229)
    rng.shuffle(train)
    rng.shuffle(test)
    write_idx(out, "train", train)
    write_idx(out, "t10k", test)
    print(f"train={len(train)} test={len(test)} -> {out}")


if __name__ == "__main__":
    main()
