"""Non-overlapping instance partitions from detections and semantic marginals.

Each pixel picks one detection out of an ordered list.  The unary cost for a
pixel/detection pair mixes a box-gated term (detection score times the
semantic probability of the detection's class, zero outside the box) with a
box-free term (the semantic probability alone), floored by a small epsilon so
the negative log stays finite.  Stuff classes enter as synthetic full-image
detections so the partition is total.  Mean-field smoothing over the shared
pairwise kernel gives the final per-pixel assignment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .densecrf import PairwiseConfig, map_labeling, run_meanfield
from .errors import (
    FormatError,
    MissingGroundTruthError,
    NoDetectionsError,
)
from .geometry import BoundingBox, box_from_list, mask_iou
from .labels import (
    IGNORE,
    ClassTable,
    PanopticMap,
    SemanticProbMap,
    check_same_extent,
    decode_panoptic_id,
    encode_panoptic_id,
)

SCORE_MODES = ("detection", "mean-confidence", "oracle")


@dataclass(frozen=True)
class Detection:
    """One scored box hypothesis; dummies stand in for stuff regions."""

    class_id: int
    score: float
    box: BoundingBox
    is_dummy: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")
        if self.is_dummy and self.score != 1.0:
            raise ValueError("dummy detections must carry score 1.0")
        if self.class_id < 0:
            raise ValueError(f"negative class id {self.class_id}")


def load_detections(path: str | Path) -> list[Detection]:
    """Read detections from JSON: [{"label", "score", "box"}, ...]."""
    with open(path, "r", encoding="utf-8") as fh:
        rows = json.load(fh)
    if not isinstance(rows, list):
        raise FormatError(f"{path}: expected a JSON list of detections")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or not {"label", "score", "box"} <= row.keys():
            raise FormatError(f"{path}: entry {i} missing label/score/box")
        try:
            out.append(
                Detection(
                    class_id=int(row["label"]),
                    score=float(row["score"]),
                    box=box_from_list(row["box"]),
                    is_dummy=bool(row.get("is_dummy", False)),
                )
            )
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}: entry {i}: {exc}") from exc
    return out


def save_detections(path: str | Path, detections: list[Detection]) -> None:
    rows = []
    for det in detections:
        row = {
            "label": det.class_id,
            "score": det.score,
            "box": list(det.box.as_tuple()),
        }
        if det.is_dummy:
            row["is_dummy"] = True
        rows.append(row)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")


def add_stuff_dummies(
    detections: list[Detection],
    stuff_present: list[int] | set[int],
    table: ClassTable,
    height: int,
    width: int,
) -> list[Detection]:
    """Append one full-image, score-1 detection per present stuff class.

    Real detections keep their order; dummies follow in ascending class id.
    """
    for class_id in stuff_present:
        if table.is_thing(class_id):
            raise ValueError(f"class {class_id} is a thing, not stuff")
    full = BoundingBox(0, 0, width, height)
    dummies = [
        Detection(class_id=c, score=1.0, box=full, is_dummy=True)
        for c in sorted(set(int(c) for c in stuff_present))
    ]
    return list(detections) + dummies


def _probs_array(probs) -> np.ndarray:
    if isinstance(probs, SemanticProbMap):
        return np.asarray(probs.data, dtype=np.float64)
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"probability map must be (H, W, L), got {arr.shape}")
    return arr


def _check_detections(detections: list[Detection], num_labels: int,
                      height: int, width: int) -> None:
    if not detections:
        raise NoDetectionsError("at least one detection (or dummy) is required")
    for det in detections:
        if det.class_id >= num_labels:
            raise ValueError(
                f"detection class {det.class_id} outside the {num_labels} channels"
            )
        det.box.validate_within(height, width)


def box_unary(probs, detections: list[Detection]) -> np.ndarray:
    """Box-gated affinity: score times class probability inside the box."""
    q = _probs_array(probs)
    h, w, num_labels = q.shape
    _check_detections(detections, num_labels, h, w)
    out = np.zeros((h, w, len(detections)))
    for k, det in enumerate(detections):
        ys, xs = det.box.slices()
        out[ys, xs, k] = det.score * q[ys, xs, det.class_id]
    return out


def global_unary(probs, detections: list[Detection]) -> np.ndarray:
    """Box-free affinity: the class probability of each detection everywhere."""
    q = _probs_array(probs)
    h, w, num_labels = q.shape
    _check_detections(detections, num_labels, h, w)
    out = np.empty((h, w, len(detections)))
    for k, det in enumerate(detections):
        out[..., k] = q[..., det.class_id]
    return out


@dataclass(frozen=True)
class InstanceCrfConfig:
    """Unary mixture weights, log floor, and smoothing settings."""

    box_weight: float = 1.0
    global_weight: float = 1.0
    epsilon: float = 1e-6
    pairwise: PairwiseConfig = field(default_factory=PairwiseConfig)
    iters: int = 5

    def __post_init__(self) -> None:
        if self.box_weight < 0 or self.global_weight < 0:
            raise ValueError("mixture weights must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")


def combined_unary(box_aff: np.ndarray, global_aff: np.ndarray,
                   config: InstanceCrfConfig) -> np.ndarray:
    """Negative log of the weighted affinity mixture, floored by epsilon."""
    mix = (config.box_weight * np.asarray(box_aff)
           + config.global_weight * np.asarray(global_aff)
           + config.epsilon)
    return -np.log(mix)


@dataclass(frozen=True)
class ScoredInstance:
    """One output segment: its packed id, class, score, and size."""

    encoded_id: int
    class_id: int
    score: float
    pixel_count: int
    det_index: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"instance score {self.score} outside [0, 1]")
        if self.pixel_count < 1:
            raise ValueError("instances must cover at least one pixel")


@dataclass(frozen=True)
class PartitionResult:
    """Total panoptic labelling plus the evidence used to build it."""

    panoptic: PanopticMap
    instances: list[ScoredInstance]
    marginals: np.ndarray
    assignment: np.ndarray


def _encode_detections(detections: list[Detection]) -> np.ndarray:
    """Packed id per detection: dummies take slot 0 of their class, real
    detections fill the remaining slots in first-appearance order."""
    taken: dict[int, set[int]] = {}
    for det in detections:
        if det.is_dummy:
            taken.setdefault(det.class_id, set()).add(0)
    counters: dict[int, int] = {}
    encoded = []
    for det in detections:
        if det.is_dummy:
            index = 0
        else:
            index = counters.get(det.class_id, 0)
            while index in taken.get(det.class_id, ()):
                index += 1
            counters[det.class_id] = index + 1
        encoded.append(encode_panoptic_id(det.class_id, index))
    return np.asarray(encoded, dtype=np.uint16)


def partition(
    probs,
    detections: list[Detection],
    image: np.ndarray,
    config: InstanceCrfConfig | None = None,
    method: str = "auto",
) -> PartitionResult:
    """Assign every pixel to one detection and emit the packed labelling.

    Instances are scored with their detection score; use score_instances to
    re-score under another mode.
    """
    config = config or InstanceCrfConfig()
    q = _probs_array(probs)
    image = np.asarray(image)
    check_same_extent(q, image)
    unary = combined_unary(box_unary(q, detections),
                           global_unary(q, detections), config)
    marginals = run_meanfield(unary, image, config.pairwise,
                              iters=config.iters, method=method)
    assignment = map_labeling(marginals)
    encoded = _encode_detections(detections)
    panoptic = PanopticMap(encoded[assignment])
    instances = []
    for k, det in enumerate(detections):
        count = int((assignment == k).sum())
        if count == 0:
            continue
        instances.append(
            ScoredInstance(
                encoded_id=int(encoded[k]),
                class_id=det.class_id,
                score=det.score,
                pixel_count=count,
                det_index=k,
            )
        )
    return PartitionResult(panoptic=panoptic, instances=instances,
                           marginals=marginals, assignment=assignment)


def score_instances(
    result: PartitionResult,
    detections: list[Detection],
    mode: str = "detection",
    ground_truth: PanopticMap | None = None,
) -> list[ScoredInstance]:
    """Re-score the partition's instances without touching the labelling.

    detection: copy the detection score.  mean-confidence: average the
    assignment marginal over the instance's pixels.  oracle: best overlap
    ratio against same-class ground-truth segments.
    """
    if mode not in SCORE_MODES:
        raise ValueError(f"unknown score mode {mode!r}")
    if mode == "oracle":
        if ground_truth is None:
            raise MissingGroundTruthError("oracle scoring needs a ground truth")
        check_same_extent(result.panoptic, ground_truth)
        gt = np.asarray(ground_truth.data)
        gt_segments: dict[int, list[np.ndarray]] = {}
        for gid in np.unique(gt):
            if gid == IGNORE:
                continue
            cls, _ = decode_panoptic_id(int(gid))
            gt_segments.setdefault(cls, []).append(gt == gid)
    out = []
    for inst in result.instances:
        if mode == "detection":
            score = detections[inst.det_index].score
        elif mode == "mean-confidence":
            mask = result.assignment == inst.det_index
            score = float(result.marginals[mask, inst.det_index].mean())
        else:
            mask = result.assignment == inst.det_index
            candidates = gt_segments.get(inst.class_id, [])
            score = max((mask_iou(mask, seg) for seg in candidates), default=0.0)
        out.append(
            ScoredInstance(
                encoded_id=inst.encoded_id,
                class_id=inst.class_id,
                score=score,
                pixel_count=inst.pixel_count,
                det_index=inst.det_index,
            )
        )
    return out
