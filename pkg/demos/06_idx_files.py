"""
Reading and writing IDX files
=============================

MNIST ships as big-endian IDX files.  This builds a tiny two-image file by
hand, reads it, writes it back, and compares bytes.  Point MNIST_DIR at a
directory holding ``train-images-idx3-ubyte`` and ``train-labels-idx1-ubyte``
(optionally gzipped) to repeat the check on real data.
"""
import os
import tempfile
from pathlib import Path

from hyperproto.data import read_idx, write_idx

tmp = Path(tempfile.mkdtemp())
header = bytes.fromhex("00000803" "00000002" "00000002" "00000002")
(tmp / "images.idx").write_bytes(header + bytes([0, 255, 128, 7, 1, 2, 3, 254]))

ds = read_idx(tmp / "images.idx")
print("pixels scaled to [0, 1]:")
print(ds.images())
write_idx(ds, tmp / "again.idx")
print("byte-identical:", (tmp / "again.idx").read_bytes() == (tmp / "images.idx").read_bytes())

mnist = os.environ.get("MNIST_DIR")
if mnist:
    for stem in ["train-images-idx3-ubyte", "train-images.idx3-ubyte"]:
        for suffix in ["", ".gz"]:
            path = Path(mnist) / (stem + suffix)
            if path.exists():
                real = read_idx(path)
                write_idx(real, tmp / "real.idx")
                import gzip
                raw = gzip.open(path).read() if suffix else path.read_bytes()
                print(f"{path.name}: {len(real)} images, round trip identical:",
                      (tmp / "real.idx").read_bytes() == raw)
