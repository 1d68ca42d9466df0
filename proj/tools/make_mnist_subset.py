#!/usr/bin/env python3
"""Build the 10k MNIST subset used by the desk-scale training runs.

Source: the `mnist` npm package (1.1.0), which ships 10,000 MNIST digits as
JSON arrays of pixel/255 values rounded to three decimals.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_subset.py package data/mnist10k

Writes train/test IDX files (8000/2000 split, seeded shuffle).
"""
import json
import random
import struct
import sys
from pathlib import Path

SIDE = 28
TRAIN = 8000
SEED = 20211


def main() -> None:
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    samples = []
    for digit in range(10):
        raw = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        count = len(raw) // (SIDE * SIDE)
        for k in range(count):
            pixels = raw[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            samples.append((bytes(min(255, max(0, round(v * 255))) for v in pixels), digit))
    random.Random(SEED).shuffle(samples)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", samples[:TRAIN]), ("test", samples[TRAIN:])):
        with open(out / f"{name}-images.idx", "wb") as f:
            f.write(struct.pack(">IIII", 0x00000803, len(part), SIDE, SIDE))
            for pixels, _ in part:
                f.write(pixels)
        with open(out / f"{name}-labels.idx", "wb") as f:
            f.write(struct.pack(">II", 0x00000801, len(part)))
            f.write(bytes(label for _, label in part))
    print(f"wrote {len(samples)} samples to {out}")


if __name__ == "__main__":
    main()
