"""Approximate ground truth from image-level tags and class heatmaps.

Each tagged class contributes the pixels where its heatmap clears a fraction
of its own peak; where thresholded regions overlap, the smaller region wins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ZeroHeatmapError
from .labels import IGNORE, LabelMap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Heatmap:
    class_id: int
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"heatmap must be 2-D, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("heatmap contains non-finite values")
        if arr.size and arr.min() < 0:
            raise ValueError("heatmap activations must be non-negative")
        object.__setattr__(self, "data", arr)


def threshold_heatmap(heatmap: Heatmap, tau: float = 0.5) -> np.ndarray:
    """Pixels whose activation reaches ``tau`` times the heatmap's peak."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    peak = float(heatmap.data.max()) if heatmap.data.size else 0.0
    if peak <= 0.0:
        raise ZeroHeatmapError(f"heatmap for class {heatmap.class_id} is identically zero")
    return heatmap.data >= tau * peak


def fabricate_tag_gt(heatmaps: list[Heatmap], tau: float = 0.5) -> LabelMap:
    """Merge thresholded heatmaps into a semantic raster.

    Smaller thresholded regions take precedence on overlaps (area ties break
    toward the lower class id); pixels below every threshold stay ignore.
    Identically zero heatmaps are skipped with a warning.
    """
    if not heatmaps:
        raise ValueError("at least one heatmap required")
    seen: set[int] = set()
    extent = heatmaps[0].data.shape
    masks: list[tuple[int, int, np.ndarray]] = []
    for hm in heatmaps:
        if hm.class_id in seen:
            raise ValueError(f"duplicate heatmap for class {hm.class_id}")
        seen.add(hm.class_id)
        if hm.data.shape != extent:
            raise ValueError("heatmaps must share one extent")
        try:
            mask = threshold_heatmap(hm, tau)
        except ZeroHeatmapError:
            log.warning("skipping identically zero heatmap for class %d", hm.class_id)
            continue
        masks.append((int(mask.sum()), hm.class_id, mask))

    sem = np.full(extent, IGNORE, dtype=np.uint16)
    # Paint big regions first so smaller ones overwrite them on overlaps.
    for _, class_id, mask in sorted(masks, key=lambda t: (t[0], t[1]), reverse=True):
        sem[mask] = class_id
    return LabelMap(sem)
