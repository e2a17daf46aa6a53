"""Wire-mask extraction and PGM file handling."""

import numpy as np
import pytest

from analogkit.netlist import DeviceKind
from analogkit.trace import (
    LabeledBox,
    Orientation,
    RasterError,
    WireMask,
    binarize,
    read_pgm,
    write_pgm,
)


def _white(w, h):
    return np.full((h, w), 255, dtype=np.uint8)


def _box(bid, rect):
    return LabeledBox(id=bid, kind=DeviceKind.RESISTOR,
                      orientation=Orientation.R0, rect=rect)


def test_blank_image_has_no_wire():
    mask = binarize(_white(40, 30))
    assert mask.count() == 0
    assert mask.width == 40 and mask.height == 30


def test_single_line_counted_exactly():
    img = _white(50, 20)
    img[10, 5:45] = 0
    mask = binarize(img)
    assert mask.count() == 40
    assert mask.bits[10, 5] and mask.bits[10, 44]
    assert not mask.bits[10, 45]


def test_threshold_is_strict_less_than():
    img = _white(4, 4)
    img[1, 1] = 127
    img[2, 2] = 128
    mask = binarize(img, threshold=128)
    assert mask.bits[1, 1]
    assert not mask.bits[2, 2]


def test_threshold_range_checked():
    with pytest.raises(RasterError):
        binarize(_white(4, 4), threshold=300)


def test_rejects_non_2d_image():
    with pytest.raises(RasterError):
        binarize(np.zeros((3, 3, 3), dtype=np.uint8))


def test_box_interior_cleared_ring_kept():
    img = _white(30, 30)
    img[5:16, 5:16] = 0  # filled block covering the whole box
    mask = binarize(img, boxes=[_box("B", (5, 5, 15, 15))])
    # ring survives: 4 sides of an 11x11 square
    assert mask.count() == 4 * 11 - 4
    assert mask.bits[5, 10] and mask.bits[15, 10]
    assert mask.bits[10, 5] and mask.bits[10, 15]
    assert not mask.bits[10, 10]
    assert not mask.bits[6, 6]


def test_wire_touching_ring_survives_clearing():
    img = _white(40, 20)
    img[10, 0:31] = 0  # wire running into the box edge at x=30
    img[8:13, 31:36] = 0  # symbol artwork inside the box
    mask = binarize(img, boxes=[_box("B", (30, 7, 38, 13))])
    assert mask.bits[10, 30]  # contact pixel on the ring
    assert not mask.bits[10, 33]  # artwork gone
    assert mask.bits[10, 29]


def test_box_outside_image_rejected():
    with pytest.raises(RasterError):
        binarize(_white(20, 20), boxes=[_box("B", (10, 10, 25, 15))])


def test_mask_validates_shape():
    with pytest.raises(RasterError):
        WireMask(np.zeros((0, 5), dtype=bool))
    with pytest.raises(RasterError):
        WireMask(np.zeros(7, dtype=bool))


def test_pgm_binary_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    img = rng.integers(0, 256, size=(17, 23), dtype=np.uint8)
    path = tmp_path / "img.pgm"
    write_pgm(img, path, binary=True)
    back = read_pgm(path)
    assert back.dtype == np.uint8
    assert np.array_equal(back, img)


def test_pgm_ascii_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    img = rng.integers(0, 256, size=(9, 13), dtype=np.uint8)
    path = tmp_path / "img.pgm"
    write_pgm(img, path, binary=False)
    assert np.array_equal(read_pgm(path), img)


def test_pgm_header_comments_ignored(tmp_path):
    path = tmp_path / "commented.pgm"
    path.write_text("P2\n# made by hand\n3 # width then height\n2\n255\n"
                    "0 10 20\n30 40 50\n")
    img = read_pgm(path)
    assert img.shape == (2, 3)
    assert img[1, 2] == 50


def test_pgm_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P9\n2 2\n255\n\x00\x00\x00\x00")
    with pytest.raises(RasterError):
        read_pgm(path)


def test_pgm_rejects_wide_maxval(tmp_path):
    path = tmp_path / "deep.pgm"
    path.write_text("P2\n2 1\n65535\n0 1\n")
    with pytest.raises(RasterError):
        read_pgm(path)


def test_pgm_rejects_truncated_pixels(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n\x00\x01\x02")
    with pytest.raises(RasterError):
        read_pgm(path)
