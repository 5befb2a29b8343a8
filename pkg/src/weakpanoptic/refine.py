"""Self-training loop: refit a predictor on approximate labels, smooth its
predictions, clamp impossible thing pixels, and regenerate the labels.

The predictor here is a deliberately simple color-histogram Bayes model so
the loop runs in seconds on synthetic data; anything exposing fit/predict
with per-pixel normalized probabilities can drive the same loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .boxgt import BoxAnnotation, UNCLAIMED_BACKGROUND, UNCLAIMED_IGNORE
from .densecrf import PairwiseConfig, map_labeling, run_meanfield
from .errors import EmptySupportError
from .labels import (
    IGNORE,
    ClassTable,
    LabelMap,
    PanopticMap,
    SemanticProbMap,
    check_same_extent,
    encode_panoptic_id,
)

_PROB_FLOOR = 1e-12


def masked_cross_entropy(probs, labels: LabelMap | np.ndarray) -> tuple[float, int]:
    """Sum of negative log-probabilities of the labelled pixels.

    Ignored pixels contribute nothing; returns (loss, labelled pixel count)
    and refuses rasters with no labelled pixels at all.
    """
    p = probs.data if isinstance(probs, SemanticProbMap) else np.asarray(probs)
    gt = labels.data if isinstance(labels, LabelMap) else np.asarray(labels)
    check_same_extent(p, gt)
    support = gt != IGNORE
    count = int(support.sum())
    if count == 0:
        raise EmptySupportError("no labelled pixels to take the loss over")
    picked = p[support, gt[support].astype(np.int64)]
    loss = float(-np.log(np.clip(picked, _PROB_FLOOR, None)).sum())
    return loss, count


def clamp_things_outside_boxes(
    pred: LabelMap,
    annotations: list[BoxAnnotation],
    table: ClassTable,
    mode: str = UNCLAIMED_IGNORE,
) -> LabelMap:
    """Reset thing pixels that fall outside every box of their class.

    A thing class with no boxes at all is clamped everywhere.  Stuff pixels
    and ignored pixels pass through untouched.
    """
    if mode not in (UNCLAIMED_IGNORE, UNCLAIMED_BACKGROUND):
        raise ValueError(f"unknown clamp mode {mode!r}")
    if mode == UNCLAIMED_BACKGROUND:
        fill = table.background_id()
        if fill is None:
            raise ValueError("voc-background mode needs exactly one stuff class")
    else:
        fill = IGNORE
    data = pred.data.copy()
    h, w = data.shape
    allowed: dict[int, np.ndarray] = {}
    for ann in annotations:
        ann.box.validate_within(h, w)
        mask = allowed.setdefault(ann.class_id, np.zeros((h, w), dtype=bool))
        ys, xs = ann.box.slices()
        mask[ys, xs] = True
    for class_id in np.unique(data):
        if class_id == IGNORE or not table.is_thing(int(class_id)):
            continue
        inside = allowed.get(int(class_id))
        outside = data == class_id
        if inside is not None:
            outside &= ~inside
        data[outside] = fill
    return LabelMap(data)


class NaiveColorPredictor:
    """Histogram Bayes classifier over 16x16x16 quantized RGB bins.

    Laplace smoothing keeps every bin and every class strictly positive, so
    predictions are always valid probability fields.
    """

    BINS = 16**3

    def __init__(self, num_labels: int, smoothing: float = 0.1):
        if num_labels < 1:
            raise ValueError("need at least one label")
        if smoothing <= 0:
            raise ValueError("smoothing must be positive")
        self.num_labels = num_labels
        self.smoothing = smoothing
        self._likelihood: np.ndarray | None = None
        self._prior: np.ndarray | None = None

    @staticmethod
    def _bin_indices(image: np.ndarray) -> np.ndarray:
        img = np.asarray(image)
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise ValueError("images must be uint8 RGB")
        q = (img >> 4).astype(np.int64)
        return (q[..., 0] << 8) | (q[..., 1] << 4) | q[..., 2]

    def fit(self, images, label_maps) -> "NaiveColorPredictor":
        counts = np.zeros((self.num_labels, self.BINS), dtype=np.float64)
        class_pixels = np.zeros(self.num_labels, dtype=np.float64)
        for image, labels in zip(images, label_maps):
            gt = labels.data if isinstance(labels, LabelMap) else np.asarray(labels)
            check_same_extent(image, gt)
            bins = self._bin_indices(image)
            keep = gt != IGNORE
            flat_labels = gt[keep].astype(np.int64)
            if flat_labels.size and flat_labels.max() >= self.num_labels:
                raise ValueError("label id outside the configured label count")
            np.add.at(counts, (flat_labels, bins[keep]), 1.0)
            np.add.at(class_pixels, flat_labels, 1.0)
        self._likelihood = (counts + self.smoothing) / (
            class_pixels[:, None] + self.smoothing * self.BINS
        )
        self._prior = (class_pixels + self.smoothing) / (
            class_pixels.sum() + self.smoothing * self.num_labels
        )
        return self

    def predict(self, image: np.ndarray) -> np.ndarray:
        if self._likelihood is None:
            raise RuntimeError("predictor used before fit")
        bins = self._bin_indices(image)
        joint = self._likelihood[:, bins.ravel()].T * self._prior[None, :]
        probs = joint / joint.sum(axis=1, keepdims=True)
        return probs.reshape(*bins.shape, self.num_labels)


@dataclass(frozen=True)
class RefineConfig:
    """Loop settings: round count, clamp mode, and smoothing parameters."""

    rounds: int = 1
    clamp_mode: str = UNCLAIMED_IGNORE
    pairwise: PairwiseConfig = field(default_factory=PairwiseConfig)
    crf_iters: int = 5
    crf_method: str = "auto"

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.clamp_mode not in (UNCLAIMED_IGNORE, UNCLAIMED_BACKGROUND):
            raise ValueError(f"unknown clamp mode {self.clamp_mode!r}")


def smoothed_probabilities(image: np.ndarray, predictor,
                           config: RefineConfig) -> np.ndarray:
    """Predictor output for one image after pairwise smoothing."""
    probs = np.asarray(predictor.predict(image), dtype=np.float64)
    unary = -np.log(np.clip(probs, _PROB_FLOOR, None))
    return run_meanfield(unary, image, config.pairwise,
                         iters=config.crf_iters, method=config.crf_method)


def refine_round(
    images: list[np.ndarray],
    annotations: list[list[BoxAnnotation]],
    predictor,
    config: RefineConfig,
    table: ClassTable,
) -> list[LabelMap]:
    """Predict, smooth, argmax, and clamp each image into fresh labels."""
    out = []
    for image, anns in zip(images, annotations):
        smoothed = smoothed_probabilities(image, predictor, config)
        labels = LabelMap(map_labeling(smoothed).astype(np.uint16))
        out.append(clamp_things_outside_boxes(labels, anns, table,
                                              config.clamp_mode))
    return out


def panoptic_from_semantic(
    semantic: LabelMap,
    annotations: list[BoxAnnotation],
    table: ClassTable,
) -> PanopticMap:
    """Attribute thing pixels to boxes so semantic maps can be PQ-scored.

    A thing pixel goes to the first same-class box (annotation order) that
    contains it; thing pixels outside every class box become ignore.  Stuff
    takes instance zero; ignore passes through.
    """
    data = semantic.data
    h, w = data.shape
    out = np.full((h, w), IGNORE, dtype=np.uint16)
    counters: dict[int, int] = {}
    claims: list[tuple[int, np.ndarray]] = []
    for ann in annotations:
        index = counters.get(ann.class_id, 0)
        counters[ann.class_id] = index + 1
        claims.append((encode_panoptic_id(ann.class_id, index), ann))
    for class_id in np.unique(data):
        cid = int(class_id)
        if cid == IGNORE:
            continue
        mask = data == class_id
        if not table.is_thing(cid):
            out[mask] = encode_panoptic_id(cid, 0)
            continue
        remaining = mask.copy()
        for encoded, ann in claims:
            if ann.class_id != cid or not remaining.any():
                continue
            ys, xs = ann.box.slices()
            boxed = np.zeros((h, w), dtype=bool)
            boxed[ys, xs] = True
            take = remaining & boxed
            out[take] = encoded
            remaining &= ~take
    return PanopticMap(out)


@dataclass(frozen=True)
class RoundMetrics:
    """Aggregate agreement of one snapshot with the true labels."""

    round_index: int
    mean_iou: float
    pq_all: float


@dataclass(frozen=True)
class RefinementResult:
    """Per-round label snapshots (round 0 = the input labels) and metrics."""

    snapshots: list[list[LabelMap]]
    metrics: list[RoundMetrics]
    predictor: object


def _aggregate_iou(pred_maps, truth_maps) -> float:
    from .metrics import _IouAccumulator

    acc = _IouAccumulator()
    for pred, truth in zip(pred_maps, truth_maps):
        acc.add(pred.data, truth.data)
    return acc.result().mean


def _aggregate_pq(snapshot, annotations, truth_panoptic, table) -> float:
    from .metrics import PqAccumulator

    acc = PqAccumulator()
    for labels, anns, truth in zip(snapshot, annotations, truth_panoptic):
        acc.add(panoptic_from_semantic(labels, anns, table), truth)
    return acc.report(table).all.pq


def run_refinement(
    images: list[np.ndarray],
    annotations: list[list[BoxAnnotation]],
    initial_labels: list[LabelMap],
    config: RefineConfig,
    table: ClassTable,
    truth_semantic: list[LabelMap] | None = None,
    truth_panoptic: list[PanopticMap] | None = None,
    predictor_factory=None,
) -> RefinementResult:
    """Alternate predictor refits and label regeneration for config.rounds.

    Snapshot r holds the labels entering round r+1; metrics are reported per
    snapshot whenever true labels are supplied.
    """
    if len(images) != len(initial_labels) or len(images) != len(annotations):
        raise ValueError("images, annotations, and labels must align")
    if predictor_factory is None:
        predictor_factory = lambda: NaiveColorPredictor(table.num_labels())
    snapshots = [list(initial_labels)]
    predictor = None
    for _ in range(config.rounds):
        predictor = predictor_factory().fit(images, snapshots[-1])
        snapshots.append(refine_round(images, annotations, predictor,
                                      config, table))
    metrics = []
    if truth_semantic is not None:
        for round_index, snapshot in enumerate(snapshots):
            pq = 0.0
            if truth_panoptic is not None:
                pq = _aggregate_pq(snapshot, annotations, truth_panoptic, table)
            metrics.append(
                RoundMetrics(
                    round_index=round_index,
                    mean_iou=_aggregate_iou(snapshot, truth_semantic),
                    pq_all=pq,
                )
            )
    return RefinementResult(snapshots=snapshots, metrics=metrics,
                            predictor=predictor)


def match_for_loss(
    pred: PanopticMap, gt: PanopticMap
) -> list[tuple[int | None, int | None, float]]:
    """Maximum-total-IoU pairing of same-class instances.

    Returns (pred id, gt id, IoU) rows; unmatched segments appear with None
    on the missing side and IoU 0.
    """
    check_same_extent(pred, gt)
    pred_arr = pred.data
    gt_arr = gt.data
    visible = gt_arr != IGNORE

    def segments(arr, mask):
        ids = [int(v) for v in np.unique(arr[mask]) if v != IGNORE]
        return {sid: (arr == sid) & mask for sid in ids}

    pred_segs = segments(pred_arr, visible)
    gt_segs = segments(gt_arr, visible)
    by_class: dict[int, tuple[list[int], list[int]]] = {}
    for sid in pred_segs:
        by_class.setdefault(sid // 1000, ([], []))[0].append(sid)
    for sid in gt_segs:
        by_class.setdefault(sid // 1000, ([], []))[1].append(sid)
    rows: list[tuple[int | None, int | None, float]] = []
    for cls in sorted(by_class):
        pred_ids, gt_ids = by_class[cls]
        pred_ids.sort()
        gt_ids.sort()
        if pred_ids and gt_ids:
            iou = np.zeros((len(pred_ids), len(gt_ids)))
            for i, pid in enumerate(pred_ids):
                pmask = pred_segs[pid]
                for j, gid in enumerate(gt_ids):
                    gmask = gt_segs[gid]
                    inter = int((pmask & gmask).sum())
                    if inter:
                        union = int((pmask | gmask).sum())
                        iou[i, j] = inter / union
            rind, cind = linear_sum_assignment(-iou)
            matched_p = set()
            matched_g = set()
            for i, j in zip(rind.tolist(), cind.tolist()):
                if iou[i, j] > 0.0:
                    rows.append((pred_ids[i], gt_ids[j], float(iou[i, j])))
                    matched_p.add(pred_ids[i])
                    matched_g.add(gt_ids[j])
        else:
            matched_p = set()
            matched_g = set()
        rows.extend((pid, None, 0.0) for pid in pred_ids if pid not in matched_p)
        rows.extend((None, gid, 0.0) for gid in gt_ids if gid not in matched_g)
    rows.sort(key=lambda r: (r[0] is None, r[0] if r[0] is not None else r[1]))
    return rows
