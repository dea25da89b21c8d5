#!/usr/bin/env python3
"""Build a 10,000-image MNIST subset in gzipped IDX format.

The digits come from the `mnist` npm package (10k real MNIST digits stored as
byte/255 floats). Images are shuffled with a fixed seed and split 8000/2000
into the standard four IDX files:

    train-images-idx3-ubyte.gz  train-labels-idx1-ubyte.gz
    t10k-images-idx3-ubyte.gz   t10k-labels-idx1-ubyte.gz

Usage: scripts/make_mnist_subset.py [OUT_DIR] [--package DIR]
"""
import argparse
import gzip
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

TRAIN = 8000
SEED = 0


def fetch_package(workdir):
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL)
    with tarfile.open(os.path.join(workdir, "mnist-1.1.0.tgz")) as tar:
        tar.extractall(workdir)
    return os.path.join(workdir, "package")


def load_digits(package_dir):
    samples = []
    for digit in range(10):
        path = os.path.join(package_dir, "src", "digits", f"{digit}.json")
        with open(path) as f:
            raw = json.load(f)["data"]
        assert len(raw) % 784 == 0
        for i in range(len(raw) // 784):
            pixels = bytes(round(v * 255) for v in raw[i * 784:(i + 1) * 784])
            samples.append((pixels, digit))
    return samples


def write_gz(path, payload):
    with open(path, "wb") as raw:
        with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
            gz.write(payload)


def write_split(out_dir, prefix, samples):
    images = struct.pack(">IIII", 2051, len(samples), 28, 28)
    images += b"".join(p for p, _ in samples)
    labels = struct.pack(">II", 2049, len(samples)) + bytes(d for _, d in samples)
    write_gz(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte.gz"), images)
    write_gz(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte.gz"), labels)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("out_dir", nargs="?", default="data/mnist-10k")
    parser.add_argument("--package", help="extracted npm `mnist` package dir")
    args = parser.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        package = args.package or fetch_package(tmp)
        samples = load_digits(package)
    if len(samples) != 10000:
        sys.exit(f"expected 10000 digits, found {len(samples)}")
    random.Random(SEED).shuffle(samples)
    write_split(args.out_dir, "train", samples[:TRAIN])
    write_split(args.out_dir, "t10k", samples[TRAIN:])
    print(f"wrote {TRAIN} train / {len(samples) - TRAIN} test images to {args.out_dir}")


if __name__ == "__main__":
    main()
