"""Evaluation suite: semantic IoU, segment matching, PQ, and instance AP.

Ground-truth ignore pixels are excluded from every overlap computation, so a
predicted segment buried entirely under ignore is dropped rather than counted
against the prediction.  PQ follows the standard true/false-positive
decomposition at an IoU threshold of 0.5; instance AP ranks predictions by
score and sweeps a threshold range (a coarse and a fine regime are built in).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ExtentMismatchError, FormatError, MissingPairError
from .fileio import load_json, read_panoptic_map
from .labels import (
    IGNORE,
    ClassTable,
    LabelMap,
    PanopticMap,
    check_same_extent,
    decode_panoptic_id,
    panoptic_to_semantic,
)

VOC_THRESHOLDS = tuple(i / 10.0 for i in range(1, 10))
CITYSCAPES_THRESHOLDS = tuple(i / 20.0 for i in range(10, 20))
_REGIMES = {"voc": VOC_THRESHOLDS, "cityscapes": CITYSCAPES_THRESHOLDS}


# ---------------------------------------------------------------------------
# semantic IoU


@dataclass(frozen=True)
class SemanticIouResult:
    """Per-class intersection-over-union plus the class mean."""

    per_class: dict[int, float]
    mean: float

    def as_dict(self) -> dict:
        return {
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "mean": self.mean,
        }


def semantic_iou(pred: LabelMap | np.ndarray, gt: LabelMap | np.ndarray) -> SemanticIouResult:
    """Class-wise IoU over pixels the ground truth does not ignore.

    Classes absent from both rasters are left out of the mean entirely.
    """
    pred_arr = pred.data if isinstance(pred, LabelMap) else np.asarray(pred)
    gt_arr = gt.data if isinstance(gt, LabelMap) else np.asarray(gt)
    check_same_extent(pred_arr, gt_arr)
    visible = gt_arr != IGNORE
    p = pred_arr[visible]
    g = gt_arr[visible]
    classes = set(np.unique(g).tolist()) | set(np.unique(p).tolist())
    classes.discard(IGNORE)
    per_class = {}
    for c in sorted(classes):
        inter = int(((p == c) & (g == c)).sum())
        union = int(((p == c) | (g == c)).sum())
        per_class[c] = inter / union if union else 0.0
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return SemanticIouResult(per_class=per_class, mean=mean)


# ---------------------------------------------------------------------------
# segment matching and PQ


@dataclass(frozen=True)
class MatchResult:
    """Segment correspondence at a fixed IoU threshold.

    tp holds (pred id, gt id, IoU) triples; fp and fn hold the unmatched
    pred and gt ids.
    """

    tp: tuple[tuple[int, int, float], ...]
    fp: tuple[int, ...]
    fn: tuple[int, ...]


def _segment_overlaps(pred_arr: np.ndarray, gt_arr: np.ndarray):
    """Areas and same-class pairwise intersections, ignore pixels excluded."""
    visible = gt_arr != IGNORE
    p = pred_arr[visible].astype(np.int64)
    g = gt_arr[visible].astype(np.int64)
    keep = p != IGNORE
    pairs, counts = np.unique(p[keep] * 65536 + g[keep], return_counts=True)
    pred_ids, pred_areas = np.unique(p[keep], return_counts=True)
    gt_ids, gt_areas = np.unique(g, return_counts=True)
    pred_area = dict(zip(pred_ids.tolist(), pred_areas.tolist()))
    gt_area = dict(zip(gt_ids.tolist(), gt_areas.tolist()))
    inter = {}
    for key, count in zip(pairs.tolist(), counts.tolist()):
        inter[(key // 65536, key % 65536)] = count
    return pred_area, gt_area, inter


def match_segments(
    pred: PanopticMap, gt: PanopticMap, iou_threshold: float = 0.5
) -> MatchResult:
    """Pair same-class segments whose IoU strictly exceeds the threshold.

    At thresholds of 0.5 and above the pairing is unique; below that,
    candidates are taken greedily by descending IoU.
    """
    if not 0.0 <= iou_threshold < 1.0:
        raise ValueError(f"iou threshold {iou_threshold} outside [0, 1)")
    check_same_extent(pred, gt)
    pred_area, gt_area, inter = _segment_overlaps(pred.data, gt.data)
    candidates = []
    for (pid, gid), count in inter.items():
        if pid // 1000 != gid // 1000:
            continue
        iou = count / (pred_area[pid] + gt_area[gid] - count)
        if iou > iou_threshold:
            candidates.append((iou, pid, gid))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    matched_pred: set[int] = set()
    matched_gt: set[int] = set()
    tp = []
    for iou, pid, gid in candidates:
        if pid in matched_pred or gid in matched_gt:
            continue
        matched_pred.add(pid)
        matched_gt.add(gid)
        tp.append((pid, gid, iou))
    tp.sort(key=lambda t: t[0])
    fp = tuple(sorted(set(pred_area) - matched_pred))
    fn = tuple(sorted(set(gt_area) - matched_gt))
    return MatchResult(tp=tuple(tp), fp=fp, fn=fn)


@dataclass(frozen=True)
class PqClassScores:
    pq: float
    sq: float
    dq: float
    tp: int
    fp: int
    fn: int
    iou_sum: float


@dataclass(frozen=True)
class PqAggregate:
    pq: float
    sq: float
    dq: float
    n_classes: int


@dataclass(frozen=True)
class PqReport:
    """Per-class quality scores with thing / stuff / overall means."""

    per_class: dict[int, PqClassScores]
    things: PqAggregate
    stuff: PqAggregate
    all: PqAggregate

    def as_dict(self) -> dict:
        def agg(a: PqAggregate) -> dict:
            return {"pq": a.pq, "sq": a.sq, "dq": a.dq, "n_classes": a.n_classes}

        return {
            "per_class": {
                str(c): {"pq": s.pq, "sq": s.sq, "dq": s.dq, "tp": s.tp,
                         "fp": s.fp, "fn": s.fn}
                for c, s in sorted(self.per_class.items())
            },
            "things": agg(self.things),
            "stuff": agg(self.stuff),
            "all": agg(self.all),
        }


class PqAccumulator:
    """Accumulates matches across images; per-class tallies are commutative."""

    def __init__(self) -> None:
        self._tp: dict[int, int] = defaultdict(int)
        self._fp: dict[int, int] = defaultdict(int)
        self._fn: dict[int, int] = defaultdict(int)
        self._iou_sum: dict[int, float] = defaultdict(float)

    def add_match(self, match: MatchResult) -> None:
        for pid, _, iou in match.tp:
            self._tp[pid // 1000] += 1
            self._iou_sum[pid // 1000] += iou
        for pid in match.fp:
            self._fp[pid // 1000] += 1
        for gid in match.fn:
            self._fn[gid // 1000] += 1

    def add(self, pred: PanopticMap, gt: PanopticMap,
            iou_threshold: float = 0.5) -> None:
        self.add_match(match_segments(pred, gt, iou_threshold))

    def report(self, table: ClassTable) -> PqReport:
        per_class = {}
        classes = sorted(set(self._tp) | set(self._fp) | set(self._fn))
        for c in classes:
            tp, fp, fn = self._tp[c], self._fp[c], self._fn[c]
            iou_sum = self._iou_sum[c]
            denom = tp + 0.5 * fp + 0.5 * fn
            per_class[c] = PqClassScores(
                pq=iou_sum / denom if denom else 0.0,
                sq=iou_sum / tp if tp else 0.0,
                dq=tp / denom if denom else 0.0,
                tp=tp, fp=fp, fn=fn, iou_sum=iou_sum,
            )

        def aggregate(ids) -> PqAggregate:
            rows = [per_class[c] for c in ids]
            if not rows:
                return PqAggregate(0.0, 0.0, 0.0, 0)
            return PqAggregate(
                pq=float(np.mean([r.pq for r in rows])),
                sq=float(np.mean([r.sq for r in rows])),
                dq=float(np.mean([r.dq for r in rows])),
                n_classes=len(rows),
            )

        thing_ids = [c for c in classes if table.is_thing(c)]
        stuff_ids = [c for c in classes if not table.is_thing(c)]
        return PqReport(
            per_class=per_class,
            things=aggregate(thing_ids),
            stuff=aggregate(stuff_ids),
            all=aggregate(classes),
        )


def panoptic_quality(match: MatchResult, table: ClassTable) -> PqReport:
    """Quality scores for a single image pair (one-shot accumulation)."""
    acc = PqAccumulator()
    acc.add_match(match)
    return acc.report(table)


# ---------------------------------------------------------------------------
# instance average precision


@dataclass(frozen=True)
class AprReport:
    """Instance AP per thing class at each threshold, plus the volume mean."""

    regime: str
    thresholds: tuple[float, ...]
    per_class: dict[int, dict[float, float]]
    per_class_vol: dict[int, float]
    mean_at: dict[float, float]
    vol: float

    def as_dict(self) -> dict:
        return {
            "regime": self.regime,
            "thresholds": list(self.thresholds),
            "per_class": {
                str(c): {f"{t:.2f}": ap for t, ap in sorted(row.items())}
                for c, row in sorted(self.per_class.items())
            },
            "per_class_vol": {str(c): v for c, v in sorted(self.per_class_vol.items())},
            "mean_at": {f"{t:.2f}": v for t, v in sorted(self.mean_at.items())},
            "vol": self.vol,
        }


def _average_precision(tp_flags: list[bool], num_gt: int) -> float:
    """All-point AP: sum of enveloped precision at every recall step."""
    if num_gt == 0:
        return 0.0
    precisions = []
    tp_cum = 0
    for rank, flag in enumerate(tp_flags, start=1):
        if flag:
            tp_cum += 1
        precisions.append(tp_cum / rank)
    total = 0.0
    best = 0.0
    for rank in range(len(tp_flags) - 1, -1, -1):
        best = max(best, precisions[rank])
        if tp_flags[rank]:
            total += best
    return total / num_gt


class ApAccumulator:
    """Collects scored thing predictions across images for ranked matching.

    Matching is re-run from scratch at every threshold: predictions are
    ranked by descending score (ties by insertion order, then segment id) and
    greedily claim the best still-unmatched same-class ground-truth segment
    whose IoU strictly exceeds the threshold.
    """

    def __init__(self, table: ClassTable, regime: str = "voc"):
        if regime not in _REGIMES:
            raise ValueError(f"unknown threshold regime {regime!r}")
        self.table = table
        self.regime = regime
        self.thresholds = _REGIMES[regime]
        self._preds: dict[int, list] = defaultdict(list)
        self._gt_count: dict[int, int] = defaultdict(int)
        self._image_idx = 0

    def add(self, pred: PanopticMap, scores: Mapping[int, float],
            gt: PanopticMap) -> None:
        check_same_extent(pred, gt)
        pred_area, gt_area, inter = _segment_overlaps(pred.data, gt.data)
        gt_uid = {}
        for gid in gt_area:
            cls, _ = decode_panoptic_id(gid)
            if self.table.is_thing(cls):
                gt_uid[gid] = (self._image_idx, gid)
                self._gt_count[cls] += 1
        for pid, area in sorted(pred_area.items()):
            cls, _ = decode_panoptic_id(pid)
            if not self.table.is_thing(cls):
                continue
            ious = []
            for gid, guid in gt_uid.items():
                if gid // 1000 != cls:
                    continue
                count = inter.get((pid, gid), 0)
                if count:
                    ious.append((guid, count / (area + gt_area[gid] - count)))
            self._preds[cls].append(
                (float(scores.get(pid, 1.0)), (self._image_idx, pid), tuple(ious))
            )
        self._image_idx += 1

    def ap_at(self, threshold: float) -> dict[int, float]:
        """Per-class AP at one threshold; classes with no gt are skipped."""
        out = {}
        for cls in sorted(self._gt_count):
            ranked = sorted(self._preds.get(cls, []),
                            key=lambda rec: (-rec[0], rec[1]))
            matched: set = set()
            flags = []
            for _, _, ious in ranked:
                best = None
                for guid, iou in ious:
                    if iou > threshold and guid not in matched:
                        if best is None or iou > best[1]:
                            best = (guid, iou)
                if best is None:
                    flags.append(False)
                else:
                    matched.add(best[0])
                    flags.append(True)
            out[cls] = _average_precision(flags, self._gt_count[cls])
        return out

    def report(self) -> AprReport:
        per_class: dict[int, dict[float, float]] = defaultdict(dict)
        mean_at = {}
        for t in self.thresholds:
            at_t = self.ap_at(t)
            for cls, ap in at_t.items():
                per_class[cls][t] = ap
            mean_at[t] = float(np.mean(list(at_t.values()))) if at_t else 0.0
        per_class_vol = {
            cls: float(np.mean(list(row.values()))) for cls, row in per_class.items()
        }
        vol = float(np.mean(list(mean_at.values()))) if mean_at else 0.0
        return AprReport(
            regime=self.regime,
            thresholds=self.thresholds,
            per_class=dict(per_class),
            per_class_vol=per_class_vol,
            mean_at=mean_at,
            vol=vol,
        )


def apr_at_threshold(
    pred: PanopticMap,
    scores: Mapping[int, float],
    gt: PanopticMap,
    table: ClassTable,
    threshold: float,
) -> dict[int, float]:
    """Single-image per-class AP at one threshold."""
    acc = ApAccumulator(table, "voc")
    acc.add(pred, scores, gt)
    return acc.ap_at(threshold)


def apr_vol(
    pred: PanopticMap,
    scores: Mapping[int, float],
    gt: PanopticMap,
    table: ClassTable,
    regime: str = "voc",
) -> AprReport:
    """Single-image AP swept over a threshold regime."""
    acc = ApAccumulator(table, regime)
    acc.add(pred, scores, gt)
    return acc.report()


# ---------------------------------------------------------------------------
# directory-level evaluation


@dataclass(frozen=True)
class EvaluationReport:
    iou: SemanticIouResult | None
    iou_by_kind: dict[str, float] | None
    pq: PqReport | None
    apr: AprReport | None
    n_images: int

    def as_dict(self) -> dict:
        out: dict = {"n_images": self.n_images}
        if self.iou is not None:
            out["iou"] = self.iou.as_dict()
            out["iou_by_kind"] = self.iou_by_kind
        if self.pq is not None:
            out["pq"] = self.pq.as_dict()
        if self.apr is not None:
            out["apr"] = self.apr.as_dict()
        return out


class _IouAccumulator:
    """Pixel tallies so multi-image IoU equals concatenated-image IoU."""

    def __init__(self) -> None:
        self._inter: dict[int, int] = defaultdict(int)
        self._union: dict[int, int] = defaultdict(int)

    def add(self, pred_arr: np.ndarray, gt_arr: np.ndarray) -> None:
        visible = gt_arr != IGNORE
        p = pred_arr[visible]
        g = gt_arr[visible]
        classes = set(np.unique(g).tolist()) | set(np.unique(p).tolist())
        classes.discard(IGNORE)
        for c in classes:
            self._inter[c] += int(((p == c) & (g == c)).sum())
            self._union[c] += int(((p == c) | (g == c)).sum())

    def result(self) -> SemanticIouResult:
        per_class = {
            c: (self._inter[c] / self._union[c] if self._union[c] else 0.0)
            for c in sorted(self._union)
        }
        mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
        return SemanticIouResult(per_class=per_class, mean=mean)


def _paired_stems(pred_dir: Path, gt_dir: Path) -> list[str]:
    pred_stems = {p.stem for p in pred_dir.glob("*.png")}
    gt_stems = {p.stem for p in gt_dir.glob("*.png")}
    missing = sorted(gt_stems - pred_stems)
    extra = sorted(pred_stems - gt_stems)
    if missing or extra:
        raise MissingPairError(
            f"unpaired files: missing predictions {missing}, "
            f"unmatched predictions {extra}"
        )
    if not gt_stems:
        raise MissingPairError(f"no ground-truth maps found in {gt_dir}")
    return sorted(gt_stems)


def evaluate_directories(
    pred_dir: str | Path,
    gt_dir: str | Path,
    table: ClassTable,
    metrics: tuple[str, ...] = ("iou", "pq", "apr"),
    regime: str = "voc",
    iou_threshold: float = 0.5,
    score_mode: str | None = None,
) -> EvaluationReport:
    """Evaluate matching-stem panoptic PNG pairs across two directories.

    Per-prediction scores are read from a sibling <stem>.json when present
    (a list of {"id", "score"} rows); absent files default every score to 1.
    With ``score_mode`` set, each row must instead carry that entry in its
    "scores" table of alternative confidence estimates.
    """
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    for name in metrics:
        if name not in ("iou", "pq", "apr"):
            raise ValueError(f"unknown metric {name!r}")
    stems = _paired_stems(pred_dir, gt_dir)
    iou_acc = _IouAccumulator() if "iou" in metrics else None
    pq_acc = PqAccumulator() if "pq" in metrics else None
    ap_acc = ApAccumulator(table, regime) if "apr" in metrics else None
    for stem in stems:
        pred = read_panoptic_map(pred_dir / f"{stem}.png")
        gt = read_panoptic_map(gt_dir / f"{stem}.png")
        try:
            check_same_extent(pred, gt)
        except ExtentMismatchError as exc:
            raise ExtentMismatchError(f"{stem}: {exc}") from exc
        if iou_acc is not None:
            iou_acc.add(panoptic_to_semantic(pred).data,
                        panoptic_to_semantic(gt).data)
        if pq_acc is not None:
            pq_acc.add(pred, gt, iou_threshold)
        if ap_acc is not None:
            scores: dict[int, float] = {}
            score_path = pred_dir / f"{stem}.json"
            if score_path.exists():
                for row in load_json(score_path):
                    if score_mode is None:
                        value = float(row.get("score", 1.0))
                    else:
                        table_of_modes = row.get("scores")
                        if not isinstance(table_of_modes, dict) or score_mode not in table_of_modes:
                            raise FormatError(
                                f"{stem}: instance {row.get('id')} has no "
                                f"{score_mode!r} score"
                            )
                        value = float(table_of_modes[score_mode])
                    scores[int(row["id"])] = value
            ap_acc.add(pred, scores, gt)
    iou_result = iou_acc.result() if iou_acc is not None else None
    iou_by_kind = None
    if iou_result is not None:
        def kind_mean(want_thing: bool) -> float:
            vals = [v for c, v in iou_result.per_class.items()
                    if table.is_thing(c) == want_thing]
            return float(np.mean(vals)) if vals else 0.0

        iou_by_kind = {
            "things": kind_mean(True),
            "stuff": kind_mean(False),
            "all": iou_result.mean,
        }
    return EvaluationReport(
        iou=iou_result,
        iou_by_kind=iou_by_kind,
        pq=pq_acc.report(table) if pq_acc is not None else None,
        apr=ap_acc.report() if ap_acc is not None else None,
        n_images=len(stems),
    )
