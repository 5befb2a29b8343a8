"""Approximate ground truth from bounding-box annotations.

Each box is segmented twice, once by the graph-cut color model and once by
picking the candidate proposal closest to the box; a pixel is labelled only
where both masks agree.  Disagreements and overlaps degrade to the ignore
sentinel instead of guessing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyProposalSetError, FormatError
from .geometry import BoundingBox, box_from_list, mask_iou
from .grabcut import GrabCutParams, grabcut
from .labels import (
    IGNORE,
    ClassTable,
    LabelMap,
    PanopticMap,
    encode_panoptic_id,
)
from .proposals import ProposalParams, generate_proposals

UNCLAIMED_IGNORE = "ignore"
UNCLAIMED_BACKGROUND = "voc-background"


@dataclass(frozen=True)
class BoxAnnotation:
    class_id: int
    box: BoundingBox


def load_annotations(path: str | Path) -> list[BoxAnnotation]:
    rows = json.loads(Path(path).read_text())
    if not isinstance(rows, list):
        raise FormatError(f"{path}: annotations must be a JSON list")
    out = []
    for row in rows:
        try:
            out.append(BoxAnnotation(int(row["class_id"]), box_from_list(row["box"])))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: bad annotation row {row!r}") from exc
    return out


def save_annotations(path: str | Path, annotations: list[BoxAnnotation]) -> None:
    rows = [{"class_id": a.class_id, "box": list(a.box.as_tuple())} for a in annotations]
    Path(path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


def select_proposal(proposals: list[np.ndarray], box: BoundingBox,
                    height: int, width: int) -> int:
    """Index of the proposal with the highest IoU against the box's own mask.

    Ties break toward the lowest index.
    """
    if not proposals:
        raise EmptyProposalSetError("no proposals to select from")
    box_mask = box.as_mask(height, width)
    best_idx = 0
    best_iou = -1.0
    for idx, mask in enumerate(proposals):
        iou = mask_iou(mask, box_mask)
        if iou > best_iou:
            best_idx, best_iou = idx, iou
    return best_idx


def combine_agreement_masks(
    annotations: list[BoxAnnotation],
    agreement_masks: list[np.ndarray],
    table: ClassTable,
    extent: tuple[int, int],
    unclaimed: str = UNCLAIMED_IGNORE,
) -> tuple[LabelMap, PanopticMap]:
    """Merge per-annotation claim masks into semantic and instance rasters.

    A pixel claimed by annotations of different classes becomes ignore in
    both rasters.  A pixel claimed by several same-class annotations keeps
    the class in the semantic raster but is ignore in the instance raster.
    Unclaimed pixels become the catch-all stuff class or ignore, per mode.
    """
    if unclaimed not in (UNCLAIMED_IGNORE, UNCLAIMED_BACKGROUND):
        raise ValueError(f"unknown unclaimed mode {unclaimed!r}")
    h, w = extent
    if len(annotations) != len(agreement_masks):
        raise ValueError("one agreement mask per annotation required")

    total = np.zeros((h, w), dtype=np.int32)
    owner = np.zeros((h, w), dtype=np.int64)  # valid only where total == 1
    per_class: dict[int, np.ndarray] = {}
    encoded: list[int] = []
    counters: dict[int, int] = {}
    for idx, (ann, mask) in enumerate(zip(annotations, agreement_masks)):
        if not table.is_thing(ann.class_id):
            raise ValueError(f"box annotation for non-thing class {ann.class_id}")
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (h, w):
            raise ValueError("agreement mask extent mismatch")
        total += mask
        owner[mask] = idx
        per_class.setdefault(ann.class_id, np.zeros((h, w), dtype=bool))
        per_class[ann.class_id] |= mask
        inst_index = counters.get(ann.class_id, 0)
        counters[ann.class_id] = inst_index + 1
        encoded.append(encode_panoptic_id(ann.class_id, inst_index))

    class_count = np.zeros((h, w), dtype=np.int32)
    for mask in per_class.values():
        class_count += mask

    sem = np.full((h, w), IGNORE, dtype=np.uint16)
    inst = np.full((h, w), IGNORE, dtype=np.uint16)
    for class_id, mask in per_class.items():
        sem[mask & (class_count == 1)] = class_id
    single = total == 1
    if encoded:
        enc_lookup = np.asarray(encoded, dtype=np.uint16)
        inst[single] = enc_lookup[owner[single]]

    if unclaimed == UNCLAIMED_BACKGROUND:
        bg = table.background_id()
        if bg is None:
            raise ValueError("voc-background mode needs exactly one stuff class")
        empty = total == 0
        sem[empty] = bg
        inst[empty] = encode_panoptic_id(bg, 0)
    return LabelMap(sem), PanopticMap(inst)


def fabricate_box_gt(
    image: np.ndarray,
    annotations: list[BoxAnnotation],
    table: ClassTable,
    proposals: list[np.ndarray] | None = None,
    unclaimed: str = UNCLAIMED_IGNORE,
    grabcut_params: GrabCutParams | None = None,
    proposal_params: ProposalParams | None = None,
) -> tuple[LabelMap, PanopticMap]:
    """Produce approximate semantic and instance rasters from boxes alone.

    ``proposals`` may come from an external directory; when omitted the
    built-in generator runs on the image.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    if proposals is None and annotations:
        proposals = generate_proposals(image, proposal_params)
    masks = []
    for ann in annotations:
        ann.box.validate_within(h, w)
        cut = grabcut(image, ann.box, grabcut_params)
        chosen = proposals[select_proposal(proposals, ann.box, h, w)]
        masks.append(cut & chosen)
    return combine_agreement_masks(annotations, masks, table, (h, w), unclaimed)
