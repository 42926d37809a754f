#!/usr/bin/env python3
"""Convert the digit JSON files shipped by the `mnist` npm package into IDX files.

The npm package stores 10,000 MNIST digits as float arrays (3-decimal
precision) grouped by class. This writes them back out as an IDX image/label
pair, interleaving classes in a fixed order so that any prefix is roughly
balanced. Pixel floats are mapped back to bytes with round(v * 255).

usage: mnist_json_to_idx.py <npm-package-dir> <out-dir>
"""
import json
import os
import struct
import sys


def main():
    pkg, out = sys.argv[1], sys.argv[2]
    per_class = []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            raw = json.load(f)["data"]
        n = len(raw) // 784
        per_class.append([raw[i * 784:(i + 1) * 784] for i in range(n)])

    images, labels = [], []
    cursor = [0] * 10
    while any(cursor[d] < len(per_class[d]) for d in range(10)):
        for d in range(10):
            if cursor[d] < len(per_class[d]):
                images.append(per_class[d][cursor[d]])
                labels.append(d)
                cursor[d] += 1

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(max(0, min(255, round(v * 255))) for v in img))
    with open(os.path.join(out, "labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} samples to {out}")


if __name__ == "__main__":
    main()
