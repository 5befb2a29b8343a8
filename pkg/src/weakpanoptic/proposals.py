"""Segment proposal pool from graph-based color segmentation.

A deterministic stand-in for learned proposal generators: the image is
segmented at several granularities and every connected segment becomes one
candidate mask.  Duplicate masks are dropped, keeping first occurrence, so
indices are stable for a given image and parameter set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.segmentation import felzenszwalb


@dataclass(frozen=True)
class ProposalParams:
    scales: tuple[float, ...] = (50.0, 150.0, 400.0)
    sigma: float = 0.0
    min_size: int = 8


def generate_proposals(image: np.ndarray, params: ProposalParams | None = None) -> list[np.ndarray]:
    """Return boolean candidate masks ordered by (scale, segment label)."""
    params = params or ProposalParams()
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("proposal generation expects an RGB image")
    masks: list[np.ndarray] = []
    seen: set[bytes] = set()
    for scale in params.scales:
        seg = felzenszwalb(image, scale=scale, sigma=params.sigma, min_size=params.min_size)
        for label in np.unique(seg):
            mask = seg == label
            key = mask.tobytes()
            if key in seen:
                continue
            seen.add(key)
            masks.append(mask)
    return masks
