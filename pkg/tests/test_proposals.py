from __future__ import annotations

import numpy as np
import pytest

from weakpanoptic.errors import EmptyProposalSetError
from weakpanoptic.geometry import BoundingBox
from weakpanoptic.proposals import ProposalParams, generate_proposals
from weakpanoptic.boxgt import select_proposal


def test_uniform_image_single_proposal():
    img = np.full((16, 16, 3), 120, dtype=np.uint8)
    masks = generate_proposals(img, ProposalParams(min_size=1))
    assert len(masks) == 1
    assert masks[0].all()


def test_two_color_halves_recovered():
    img = np.zeros((16, 16, 3), dtype=np.uint8)
    img[:, 8:] = (200, 30, 30)
    masks = generate_proposals(img, ProposalParams(min_size=1))
    # Oracle: connected components of exact color quantization.
    left = np.zeros((16, 16), dtype=bool)
    left[:, :8] = True
    keys = {m.tobytes() for m in masks}
    assert left.tobytes() in keys
    assert (~left).tobytes() in keys


def test_proposals_deterministic():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)
    a = generate_proposals(img)
    b = generate_proposals(img)
    assert len(a) == len(b)
    for ma, mb in zip(a, b):
        assert (ma == mb).all()


def test_no_duplicate_masks():
    img = np.full((12, 12, 3), 7, dtype=np.uint8)
    masks = generate_proposals(img, ProposalParams(scales=(50.0, 100.0, 200.0), min_size=1))
    keys = [m.tobytes() for m in masks]
    assert len(keys) == len(set(keys))


def test_select_proposal_prefers_best_iou():
    h = w = 10
    box = BoundingBox(2, 2, 6, 6)
    near = box.as_mask(h, w)
    far = BoundingBox(6, 6, 10, 10).as_mask(h, w)
    assert select_proposal([far, near], box, h, w) == 1


def test_select_proposal_tie_takes_lowest_index():
    h = w = 8
    box = BoundingBox(0, 0, 4, 4)
    same = box.as_mask(h, w)
    assert select_proposal([same, same.copy()], box, h, w) == 0


def test_select_proposal_empty_set():
    with pytest.raises(EmptyProposalSetError):
        select_proposal([], BoundingBox(0, 0, 2, 2), 4, 4)
