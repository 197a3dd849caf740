"""Reader and writer for the big-endian IDX image/label layout.

IDX3 image files: 32-bit big-endian magic 0x00000803, then the image
count, row count, and column count as 32-bit big-endian integers, then
one unsigned byte per pixel, row-major.  IDX1 label files use magic
0x00000801 followed by the item count and one byte per label.
"""

import struct

import numpy as np

from .errors import IdxFormatError

IDX3_MAGIC = 0x00000803
IDX1_MAGIC = 0x00000801


def read_idx_images(path):
    """Load an IDX3 file as a (n, rows, cols) uint8 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise IdxFormatError(f"{path}: truncated IDX3 header", len(raw))
    magic, n, rows, cols = struct.unpack_from(">IIII", raw, 0)
    if magic != IDX3_MAGIC:
        raise IdxFormatError(f"{path}: bad IDX3 magic {magic:#010x}", 0)
    expected = 16 + n * rows * cols
    if len(raw) != expected:
        raise IdxFormatError(
            f"{path}: payload is {len(raw) - 16} bytes, header promises {expected - 16}",
            min(len(raw), expected),
        )
    data = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    return data.reshape(n, rows, cols).copy()


def read_idx_labels(path):
    """Load an IDX1 file as a (n,) uint8 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: truncated IDX1 header", len(raw))
    magic, n = struct.unpack_from(">II", raw, 0)
    if magic != IDX1_MAGIC:
        raise IdxFormatError(f"{path}: bad IDX1 magic {magic:#010x}", 0)
    if len(raw) != 8 + n:
        raise IdxFormatError(
            f"{path}: payload is {len(raw) - 8} bytes, header promises {n}",
            min(len(raw), 8 + n),
        )
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).copy()


def write_idx_images(images, path):
    """Write a (n, rows, cols) uint8 array in IDX3 layout."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX3_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def normalize_images(images):
    """Map uint8 pixels to float64 in [0, 1] (pixel / 255)."""
    return np.asarray(images, dtype=np.float64) / 255.0
