"""Raster handling for schematic tracing: masks, thresholding, PGM files.

Schematic images arrive as grayscale rasters with dark wires on a light
background.  Binarization keeps the dark pixels and punches out component
bounding-box interiors so that symbol artwork never takes part in wire
traversal; the boundary ring of each box is kept, because that is where
wires make contact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RasterError(Exception):
    pass


@dataclass(frozen=True)
class WireMask:
    """Boolean wire grid; True marks a traversable wire pixel."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise RasterError("mask must be a non-empty 2-D grid")
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    def count(self) -> int:
        return int(self.bits.sum())


def binarize(image: np.ndarray, threshold: int = 128,
             boxes=()) -> WireMask:
    """Dark-on-light thresholding: pixel < threshold becomes wire.

    Every box rectangle has its strict interior cleared; the one-pixel
    boundary ring survives so wires that stop at a box edge keep their
    contact pixel.
    """
    img = np.asarray(image)
    if img.ndim != 2 or img.size == 0:
        raise RasterError("image must be a non-empty 2-D grayscale array")
    if not 0 <= threshold <= 255:
        raise RasterError(f"threshold {threshold} outside 0..255")
    bits = img < threshold
    height, width = bits.shape
    for box in boxes:
        x0, y0, x1, y1 = box.rect
        if not (0 <= x0 <= x1 < width and 0 <= y0 <= y1 < height):
            raise RasterError(f"box {box.id!r} rect {box.rect} outside "
                              f"{width}x{height} image")
        if x1 - x0 >= 2 and y1 - y0 >= 2:
            bits[y0 + 1:y1, x0 + 1:x1] = False
    return WireMask(bits)


# ---------------------------------------------------------------------------
# portable graymap files


def write_pgm(image: np.ndarray, path, binary: bool = True) -> None:
    """Write an 8-bit grayscale array as P5 (binary) or P2 (ASCII) PGM."""
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise RasterError("image must be 2-D")
    height, width = img.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
            fh.write(img.tobytes())
    else:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"P2\n{width} {height}\n255\n")
            for row in img:
                fh.write(" ".join(str(int(v)) for v in row) + "\n")


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 PGM with maxval up to 255."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P2", b"P5"):
        raise RasterError("not a PGM file (want P2 or P5)")
    magic = data[:2].decode("ascii")

    # header tokens may be interleaved with '#' comments
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise RasterError("truncated PGM header")
        tokens.append(data[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise RasterError(f"malformed PGM header: {exc}") from exc
    if width < 1 or height < 1 or not 0 < maxval <= 255:
        raise RasterError(f"unsupported PGM geometry {width}x{height} "
                          f"maxval {maxval}")
    if magic == "P5":
        pos += 1  # single whitespace after maxval
        raw = data[pos:pos + width * height]
        if len(raw) != width * height:
            raise RasterError("PGM pixel data truncated")
        img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    else:
        values = data[pos:].split()
        if len(values) != width * height:
            raise RasterError(f"expected {width * height} ASCII pixels, "
                              f"got {len(values)}")
        img = np.array([int(v) for v in values],
                       dtype=np.uint8).reshape(height, width)
    return img.copy()
