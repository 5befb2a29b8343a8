"""Synthetic scenes shared by unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from weakpanoptic.geometry import BoundingBox


def two_region_scene(seed: int, noise_sigma: float = 10.0,
                     size: int = 64, side: int = 20, min_gap: float = 60.0):
    """One uniform square on a uniform background, colors at least min_gap apart.

    Returns (uint8 image, true foreground mask, box dilated by 2 px).
    """
    rng = np.random.default_rng(seed)
    while True:
        bg = rng.integers(0, 256, size=3).astype(np.float64)
        fg = rng.integers(0, 256, size=3).astype(np.float64)
        if np.linalg.norm(fg - bg) >= min_gap:
            break
    y0 = int(rng.integers(3, size - side - 3))
    x0 = int(rng.integers(3, size - side - 3))
    img = np.tile(bg, (size, size, 1))
    mask = np.zeros((size, size), dtype=bool)
    mask[y0 : y0 + side, x0 : x0 + side] = True
    img[mask] = fg
    if noise_sigma > 0:
        img = img + rng.normal(scale=noise_sigma, size=img.shape)
    img = np.clip(np.round(img), 0, 255).astype(np.uint8)
    box = BoundingBox(x0, y0, x0 + side, y0 + side).dilated(2, size, size)
    return img, mask, box
