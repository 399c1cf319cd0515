#!/usr/bin/env python3
"""Build the desk-scale MNIST subset (IDX files) used by the acceptance suite.

Source: the `mnist` npm package (10,000 MNIST digits stored as JSON arrays of
intensities in [0,1], grouped by label). Fetch it with `npm pack mnist` and
point --package at the unpacked `package/` directory.

Samples are pooled, shuffled with a fixed seed and split into the first
`--train` images (train-*) and the next `--test` images (t10k-*).
"""
import argparse
import json
import random
import struct
from pathlib import Path


def write_idx_images(path, images, rows=28, cols=28):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), rows, cols))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--package", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=500)
    ap.add_argument("--seed", type=int, default=20200612)
    args = ap.parse_args()

    pool = []
    for digit in range(10):
        data = json.loads((args.package / "src" / "digits" / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for k in range(len(data) // 784):
            px = data[k * 784:(k + 1) * 784]
            pool.append((digit, [min(255, max(0, round(v * 255))) for v in px]))

    random.Random(args.seed).shuffle(pool)
    train = pool[:args.train]
    test = pool[args.train:args.train + args.test]

    args.out.mkdir(parents=True, exist_ok=True)
    write_idx_images(args.out / "train-images-idx3-ubyte", [p for _, p in train])
    write_idx_labels(args.out / "train-labels-idx1-ubyte", [d for d, _ in train])
    write_idx_images(args.out / "t10k-images-idx3-ubyte", [p for _, p in test])
    write_idx_labels(args.out / "t10k-labels-idx1-ubyte", [d for d, _ in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {args.out}")


if __name__ == "__main__":
    main()
