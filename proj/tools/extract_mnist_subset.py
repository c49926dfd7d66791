#!/usr/bin/env python3
"""Write the 5000-sample MNIST subset bundled with mlxtend as an IDX pair.

Usage: extract_mnist_subset.py <mlxtend wheel or site-packages dir> <out dir>

Produces <out>/images-idx3-ubyte and <out>/labels-idx1-ubyte (500 per class).
"""
import gzip
import io
import os
import struct
import sys
import zipfile

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv_gz(src):
    if zipfile.is_zipfile(src):
        raw = zipfile.ZipFile(src).read(MEMBER)
    else:
        with open(os.path.join(src, MEMBER), "rb") as f:
            raw = f.read()
    return np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    table = read_csv_gz(sys.argv[1])
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    os.makedirs(sys.argv[2], exist_ok=True)
    with open(os.path.join(sys.argv[2], "images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(pixels), 28, 28))
        f.write(pixels.tobytes())
    with open(os.path.join(sys.argv[2], "labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main()
