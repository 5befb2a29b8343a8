from __future__ import annotations

import numpy as np
import pytest

from weakpanoptic.errors import DegenerateBoxError
from weakpanoptic.geometry import BoundingBox, mask_iou
from weakpanoptic.grabcut import GrabCutParams, grabcut

from scene_helpers import two_region_scene


def _noiseless_square_scene():
    img = np.zeros((64, 64, 3), dtype=np.uint8)
    img[:, :] = (40, 60, 200)  # blue background
    mask = np.zeros((64, 64), dtype=bool)
    mask[22:42, 18:38] = True
    img[mask] = (210, 40, 35)  # red square
    box = BoundingBox(16, 20, 40, 44)  # square dilated by 2 px
    return img, mask, box


def test_noiseless_square_recovered_exactly():
    img, mask, box = _noiseless_square_scene()
    got = grabcut(img, box, GrabCutParams(seed=0))
    assert mask_iou(got, mask) == 1.0


def test_mask_is_subset_of_box():
    img, _, box = _noiseless_square_scene()
    got = grabcut(img, box, GrabCutParams(seed=0))
    assert not got[~box.as_mask(64, 64)].any()


def test_noisy_squares_recovered():
    scores = []
    for seed in range(10):
        img, mask, box = two_region_scene(seed)
        got = grabcut(img, box, GrabCutParams(seed=0))
        scores.append(mask_iou(got, mask))
    assert np.mean(np.asarray(scores) >= 0.95) >= 0.9, scores


def test_deterministic_given_seed():
    img, _, box = two_region_scene(7)
    a = grabcut(img, box, GrabCutParams(seed=5))
    b = grabcut(img, box, GrabCutParams(seed=5))
    assert (a == b).all()


def test_whole_image_box_rejected():
    img, _, _ = _noiseless_square_scene()
    with pytest.raises(DegenerateBoxError):
        grabcut(img, BoundingBox(0, 0, 64, 64))


def test_box_outside_extent_rejected():
    img, _, _ = _noiseless_square_scene()
    with pytest.raises(DegenerateBoxError):
        grabcut(img, BoundingBox(10, 10, 80, 20))
