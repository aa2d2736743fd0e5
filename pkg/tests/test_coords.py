import numpy as np
import pytest

from pyseqhand.coords import CROP_SCALE, Box, crop_square, in_frame, to_pixel


def test_to_pixel_rounds_half_up():
    points = [[2.49, 3.0], [2.5, 3.0], [-0.5, -0.51], [0.0, 223.6]]
    assert to_pixel(points).tolist() == [[2, 3], [3, 3], [0, -1], [0, 224]]


def test_in_frame():
    pixels = np.array([[0, 0], [223, 223], [224, 0], [-1, 5], [5, 224]])
    assert in_frame(pixels, 224, 224).tolist() == [True, True, False, False, False]


def test_box():
    box = Box.around([[10, 20], [30, 25], [15, 60]])
    assert box == Box(10, 20, 30, 60)
    assert (box.width, box.height, box.long_edge) == (20, 40, 40)
    assert box.center == (20, 40)
    with pytest.raises(ValueError):
        Box(5, 0, 1, 1)


def test_crop_square():
    crop = crop_square((10, 20, 30, 60))
    assert crop.width == pytest.approx(CROP_SCALE * 40)
    assert crop.height == pytest.approx(CROP_SCALE * 40)
    assert crop.center == pytest.approx((20, 40))
