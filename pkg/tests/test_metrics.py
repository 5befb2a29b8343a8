"""Metric oracles: pixel-counting IoU, exhaustive matching, PR references."""

import numpy as np
import pytest

from weakpanoptic.errors import ExtentMismatchError, MissingPairError
from weakpanoptic.fileio import dump_json, write_label_png
from weakpanoptic.labels import IGNORE, LabelMap, PanopticMap
from weakpanoptic.metrics import (
    CITYSCAPES_THRESHOLDS,
    VOC_THRESHOLDS,
    ApAccumulator,
    MatchResult,
    PqAccumulator,
    apr_at_threshold,
    apr_vol,
    evaluate_directories,
    match_segments,
    panoptic_quality,
    semantic_iou,
)


def _pmap(rows) -> PanopticMap:
    return PanopticMap(np.array(rows, dtype=np.uint16))


def _lmap(rows) -> LabelMap:
    return LabelMap(np.array(rows, dtype=np.uint16))


# ---------------------------------------------------------------------------
# semantic IoU


def test_semantic_iou_identity():
    gt = _lmap([[0, 0, 1], [2, 2, 1]])
    out = semantic_iou(gt, gt)
    assert out.per_class == {0: 1.0, 1: 1.0, 2: 1.0}
    assert out.mean == 1.0


def test_semantic_iou_disjoint_masks():
    pred = _lmap([[1, 1, 0, 0]])
    gt = _lmap([[0, 0, 1, 1]])
    out = semantic_iou(pred, gt)
    assert out.per_class[0] == 0.0 and out.per_class[1] == 0.0


def test_semantic_iou_half_overlap_is_one_third():
    pred = _lmap([[1, 1, 1, 1, 0, 0, 0, 0]])
    gt = _lmap([[0, 0, 1, 1, 1, 1, 0, 0]])
    out = semantic_iou(pred, gt)
    assert out.per_class[1] == pytest.approx(2 / 6)


def test_semantic_iou_skips_gt_ignore_pixels():
    pred = _lmap([[1, 1, 1, 1]])
    gt = _lmap([[1, 1, IGNORE, IGNORE]])
    out = semantic_iou(pred, gt)
    assert out.per_class == {1: 1.0}


def test_semantic_iou_counts_prediction_only_classes():
    pred = _lmap([[1, 2]])
    gt = _lmap([[1, 1]])
    out = semantic_iou(pred, gt)
    assert out.per_class[1] == pytest.approx(0.5)
    assert out.per_class[2] == 0.0
    assert out.mean == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# segment matching


def test_match_identical_maps_all_tp():
    pm = _pmap([[2001, 2001, 0], [2002, 0, 0]])
    match = match_segments(pm, pm)
    assert match.fp == () and match.fn == ()
    assert {(p, g) for p, g, _ in match.tp} == {(0, 0), (2001, 2001), (2002, 2002)}
    assert all(iou == 1.0 for _, _, iou in match.tp)


def test_match_below_threshold_is_fp_and_fn():
    gt = _pmap([[2001] * 5 + [0] * 5])
    pred = _pmap([[2001] * 2 + [0] * 8])
    match = match_segments(pred, gt)
    # thing overlap 2/5 = 0.4 < 0.5 so the pair stays unmatched
    assert all(p // 1000 == 0 for p, _, _ in match.tp)
    assert match.fp == (2001,)
    assert match.fn == (2001,)


def test_match_requires_same_class():
    gt = _pmap([[2001, 2001, 2001]])
    pred = _pmap([[3001, 3001, 3001]])
    match = match_segments(pred, gt)
    assert match.tp == ()
    assert match.fp == (3001,) and match.fn == (2001,)


def test_match_excludes_gt_ignore_from_iou():
    gt = _pmap([[2001, 2001, IGNORE, IGNORE]])
    pred = _pmap([[2001, 2001, 2001, 2001]])
    match = match_segments(pred, gt)
    assert match.tp == ((2001, 2001, 1.0),)


def test_match_drops_predictions_fully_under_ignore():
    gt = _pmap([[0, 0, IGNORE, IGNORE]])
    pred = _pmap([[0, 0, 2001, 2001]])
    match = match_segments(pred, gt)
    assert match.fp == ()
    assert match.tp == ((0, 0, 1.0),)


def _random_scene(rng, height=9, width=12):
    """Ground truth and prediction built from the same per-id rectangles."""
    gt = np.zeros((height, width), dtype=np.uint16)
    pred = np.zeros((height, width), dtype=np.uint16)
    next_index = {1: 1, 2: 1}
    for _ in range(rng.integers(2, 5)):
        cls = int(rng.integers(1, 3))
        idx = next_index[cls]
        next_index[cls] += 1
        y = int(rng.integers(0, height - 3))
        x = int(rng.integers(0, width - 3))
        hh = int(rng.integers(2, 4))
        ww = int(rng.integers(2, 4))
        gt[y : y + hh, x : x + ww] = cls * 1000 + idx
        dy, dx = int(rng.integers(-1, 2)), int(rng.integers(-1, 2))
        yy, xx = max(0, y + dy), max(0, x + dx)
        pred[yy : yy + hh, xx : xx + ww] = cls * 1000 + idx + 100
    return _pmap(pred), _pmap(gt)


def _pixel_sets(arr):
    out = {}
    for sid in np.unique(arr):
        if sid == IGNORE:
            continue
        out[int(sid)] = set(map(tuple, np.argwhere(arr == sid)))
    return out


def test_match_equals_exhaustive_pairing_at_half():
    """At 0.5 any valid pairing is unique, so the greedy result must equal
    the set of all same-class pairs whose IoU exceeds the threshold."""
    rng = np.random.default_rng(42)
    for _ in range(50):
        pred, gt = _random_scene(rng)
        pred_sets = _pixel_sets(pred.data)
        gt_sets = _pixel_sets(gt.data)
        expected = set()
        for pid, pset in pred_sets.items():
            for gid, gset in gt_sets.items():
                if pid // 1000 != gid // 1000:
                    continue
                iou = len(pset & gset) / len(pset | gset)
                if iou > 0.5:
                    expected.add((pid, gid))
        got = {(p, g) for p, g, _ in match_segments(pred, gt).tp}
        assert got == expected


def test_match_greedy_below_half_prefers_higher_iou():
    # two same-class predictions both overlap one gt; the better one wins
    gt = _pmap([[2001] * 6 + [0] * 6])
    pred = _pmap([[2001] * 3 + [2002] * 2 + [0] * 7])
    match = match_segments(pred, gt, iou_threshold=0.1)
    tp_things = [(p, g, i) for p, g, i in match.tp if p // 1000 == 2]
    assert [(p, g) for p, g, _ in tp_things] == [(2001, 2001)]
    assert tp_things[0][2] == pytest.approx(3 / 6)
    assert 2002 in match.fp


# ---------------------------------------------------------------------------
# panoptic quality


def test_pq_perfect_prediction(voc_like_table):
    pm = _pmap([[2001, 2001, 0], [1001, 0, 0]])
    report = panoptic_quality(match_segments(pm, pm), voc_like_table)
    assert report.all.pq == 1.0 and report.all.sq == 1.0 and report.all.dq == 1.0
    for scores in report.per_class.values():
        assert scores.pq == 1.0


def test_pq_single_pair_point_six(voc_like_table):
    match = MatchResult(tp=((2001, 2001, 0.6),), fp=(), fn=())
    report = panoptic_quality(match, voc_like_table)
    row = report.per_class[2]
    assert row.pq == pytest.approx(0.6)
    assert row.sq == pytest.approx(0.6)
    assert row.dq == 1.0


def test_pq_hand_case_point_four(voc_like_table):
    match = MatchResult(tp=((2001, 2001, 0.8),), fp=(2002,), fn=(2003,))
    report = panoptic_quality(match, voc_like_table)
    row = report.per_class[2]
    assert row.pq == pytest.approx(0.8 / (1 + 0.5 + 0.5))
    assert row.sq == pytest.approx(0.8)
    assert row.dq == pytest.approx(0.5)


def test_pq_from_maps_hand_scene(voc_like_table):
    gt = _pmap([[2001] * 4 + [2003] * 4 + [0] * 4])
    pred = _pmap([[2001] * 3 + [2002] * 3 + [0] * 6])
    report = panoptic_quality(match_segments(pred, gt), voc_like_table)
    # thing: one TP at IoU 3/4, one FP, one FN; stuff: one TP at IoU 4/6
    assert report.per_class[2].pq == pytest.approx(0.75 / 2)
    assert report.per_class[0].pq == pytest.approx(4 / 6)
    assert report.things.pq == pytest.approx(0.375)
    assert report.stuff.pq == pytest.approx(4 / 6)
    assert report.all.pq == pytest.approx((0.375 + 4 / 6) / 2)


def test_pq_equals_sq_times_dq(voc_like_table):
    rng = np.random.default_rng(7)
    acc = PqAccumulator()
    for _ in range(20):
        pred, gt = _random_scene(rng)
        acc.add(pred, gt)
    report = acc.report(voc_like_table)
    for scores in report.per_class.values():
        assert abs(scores.pq - scores.sq * scores.dq) < 1e-9
        assert 0.0 <= scores.pq <= 1.0


def test_pq_invariant_to_instance_relabelling(voc_like_table):
    gt = _pmap([[2001, 2001, 2002, 2002, 0, 0]])
    pred = _pmap([[2001, 2001, 2002, 2002, 0, 0]])
    swapped = _pmap([[2002, 2002, 2001, 2001, 0, 0]])
    a = panoptic_quality(match_segments(pred, gt), voc_like_table)
    b = panoptic_quality(match_segments(swapped, gt), voc_like_table)
    assert a == b


def test_pq_all_is_class_weighted_mean_of_splits(voc_like_table):
    rng = np.random.default_rng(19)
    acc = PqAccumulator()
    for _ in range(10):
        pred, gt = _random_scene(rng)
        acc.add(pred, gt)
    r = acc.report(voc_like_table)
    n = r.things.n_classes + r.stuff.n_classes
    assert r.all.n_classes == n
    weighted = (r.things.pq * r.things.n_classes + r.stuff.pq * r.stuff.n_classes) / n
    assert r.all.pq == pytest.approx(weighted)


def _disjoint_scene_pair(rng):
    """Two scenes whose ids stay distinct when placed side by side: the
    second image uses its own stuff class and shifted instance indices."""
    pred_a, gt_a = _random_scene(rng)
    pred_b, gt_b = _random_scene(rng)

    def remap(arr):
        out = arr.astype(np.int64)
        out[out == 0] = 4000  # second stuff class, instance 0
        out[(out % 1000 > 0) & (out < 4000)] += 500
        return PanopticMap(out.astype(np.uint16))

    return pred_a, gt_a, remap(pred_b.data), remap(gt_b.data)


def test_pq_accumulation_equals_concatenated_image(multi_kind_table):
    rng = np.random.default_rng(31)
    pred_a, gt_a, pred_b, gt_b = _disjoint_scene_pair(rng)
    acc = PqAccumulator()
    acc.add(pred_a, gt_a)
    acc.add(pred_b, gt_b)
    split = acc.report(multi_kind_table)
    concat = PqAccumulator()
    concat.add(
        PanopticMap(np.hstack([pred_a.data, pred_b.data])),
        PanopticMap(np.hstack([gt_a.data, gt_b.data])),
    )
    assert concat.report(multi_kind_table) == split


# ---------------------------------------------------------------------------
# instance AP


def test_threshold_regimes():
    assert VOC_THRESHOLDS == pytest.approx(tuple(i / 10 for i in range(1, 10)))
    assert CITYSCAPES_THRESHOLDS == pytest.approx(tuple(i / 20 for i in range(10, 20)))


def test_ap_accumulator_rejects_unknown_regime(voc_like_table):
    with pytest.raises(ValueError):
        ApAccumulator(voc_like_table, "imagenet")


def test_ap_single_true_positive(voc_like_table):
    gt = _pmap([[2001] * 5 + [0] * 5])
    pred = _pmap([[2001] * 4 + [0] * 6])
    ap = apr_at_threshold(pred, {2001: 0.9}, gt, voc_like_table, 0.5)
    assert ap == {2: 1.0}


def test_ap_ranking_sensitivity(voc_like_table):
    """A confident good mask plus a weak bad one gives AP 1; swapping the
    scores drops it to 0.5."""
    gt = _pmap([[2001] * 10 + [0] * 10])
    pred = _pmap([[2001] * 8 + [2002, 2002] + [0] * 10])
    # IoU(2001) = 8/10, IoU(2002) = 0 vs the thing gt
    good_first = apr_at_threshold(pred, {2001: 0.9, 2002: 0.5}, gt,
                                  voc_like_table, 0.5)
    assert good_first[2] == pytest.approx(1.0)
    bad_first = apr_at_threshold(pred, {2001: 0.5, 2002: 0.9}, gt,
                                 voc_like_table, 0.5)
    assert bad_first[2] == pytest.approx(0.5)


def test_ap_vol_perfect_and_zero(voc_like_table):
    gt = _pmap([[2001] * 5 + [0] * 5])
    for regime in ("voc", "cityscapes"):
        perfect = apr_vol(gt, {2001: 0.8}, gt, voc_like_table, regime)
        assert perfect.vol == pytest.approx(1.0)
        wrong = apr_vol(_pmap([[0] * 5 + [2001] * 5]), {2001: 0.8}, gt,
                        voc_like_table, regime)
        assert wrong.vol == pytest.approx(0.0)


def test_ap_vol_five_ninths(voc_like_table):
    """A lone prediction at IoU 0.55 clears thresholds 0.1 through 0.5 only."""
    gt = _pmap([[2001] * 20])
    pred = _pmap([[2001] * 11 + [0] * 9])
    assert 11 / 20 == 0.55
    report = apr_vol(pred, {2001: 0.9}, gt, voc_like_table, "voc")
    assert report.per_class[2][0.5] == 1.0
    assert report.per_class[2][0.6] == 0.0
    assert report.per_class_vol[2] == pytest.approx(5 / 9)
    assert report.vol == pytest.approx(5 / 9)


def test_ap_nonincreasing_in_threshold(voc_like_table):
    rng = np.random.default_rng(11)
    acc = ApAccumulator(voc_like_table, "voc")
    for _ in range(12):
        pred, gt = _random_scene(rng)
        scores = {int(pid): float(rng.uniform(0.1, 1.0))
                  for pid in np.unique(pred.data) if pid >= 1000}
        acc.add(pred, scores, gt)
    report = acc.report()
    for row in report.per_class.values():
        values = [row[t] for t in report.thresholds]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


def _reference_ap(records, num_gt, threshold):
    """Plain-loop rank/match/envelope reference for one class."""
    order = sorted(range(len(records)), key=lambda i: (-records[i][0], records[i][1]))
    used = set()
    flags = []
    for i in order:
        best = None
        for key, iou in records[i][2].items():
            if iou > threshold and key not in used:
                if best is None or iou > best[1]:
                    best = (key, iou)
        if best is None:
            flags.append(False)
        else:
            used.add(best[0])
            flags.append(True)
    ap = 0.0
    for idx, flag in enumerate(flags):
        if flag:
            ap += max(
                sum(flags[: j + 1]) / (j + 1) for j in range(idx, len(flags))
            ) / num_gt
    return ap


def test_ap_matches_reference_on_random_scenes(voc_like_table):
    rng = np.random.default_rng(23)
    for trial in range(10):
        acc = ApAccumulator(voc_like_table, "voc")
        records = {1: [], 2: []}
        gt_counts = {1: 0, 2: 0}
        for image_idx in range(3):
            pred, gt = _random_scene(rng)
            scores = {int(pid): float(rng.uniform(0.1, 1.0))
                      for pid in np.unique(pred.data) if pid >= 1000}
            acc.add(pred, scores, gt)
            pred_sets = _pixel_sets(pred.data)
            gt_sets = _pixel_sets(gt.data)
            for cls in (1, 2):
                gt_counts[cls] += sum(1 for g in gt_sets if g // 1000 == cls)
            for pid, pset in sorted(pred_sets.items()):
                cls = pid // 1000
                if cls == 0:
                    continue
                ious = {}
                for gid, gset in gt_sets.items():
                    if gid // 1000 != cls:
                        continue
                    inter = len(pset & gset)
                    if inter:
                        ious[(image_idx, gid)] = inter / len(pset | gset)
                records[cls].append((scores[pid], (image_idx, pid), ious))
        for t in (0.1, 0.3, 0.5, 0.7):
            got = acc.ap_at(t)
            for cls in (1, 2):
                if gt_counts[cls] == 0:
                    assert cls not in got
                    continue
                want = _reference_ap(records[cls], gt_counts[cls], t)
                assert got[cls] == pytest.approx(want, abs=1e-12)


def test_ap_oracle_scoring_never_loses(voc_like_table):
    """Scoring every mask by its true best overlap dominates arbitrary
    scorings when each prediction overlaps at most one ground-truth segment."""
    rng = np.random.default_rng(37)
    for _ in range(15):
        gt = np.zeros((8, 30), dtype=np.uint16)
        pred = np.zeros((8, 30), dtype=np.uint16)
        n = int(rng.integers(2, 5))
        oracle_scores = {}
        for i in range(n):
            x0 = i * 7
            gid = 2001 + i
            gt[1:7, x0 : x0 + 5] = gid
            if rng.random() < 0.8:
                dx, dy = int(rng.integers(-1, 2)), int(rng.integers(-1, 2))
                pred[1 + dy : 7 + dy, x0 + dx : x0 + 5 + dx] = gid
        for pid in np.unique(pred):
            if pid < 1000:
                continue
            pset = set(map(tuple, np.argwhere(pred == pid)))
            gset = set(map(tuple, np.argwhere(gt == pid)))
            oracle_scores[int(pid)] = len(pset & gset) / len(pset | gset)
        pred_map, gt_map = _pmap(pred), _pmap(gt)
        oracle = apr_vol(pred_map, oracle_scores, gt_map, voc_like_table, "voc")
        for _ in range(5):
            other_scores = {pid: float(rng.uniform(0, 1)) for pid in oracle_scores}
            other = apr_vol(pred_map, other_scores, gt_map, voc_like_table, "voc")
            for t in VOC_THRESHOLDS:
                assert oracle.mean_at[t] >= other.mean_at[t] - 1e-12


def test_ap_accumulation_equals_concatenated_image(voc_like_table):
    rng = np.random.default_rng(41)
    pred_a, gt_a = _random_scene(rng)
    pred_b, gt_b = _random_scene(rng)
    shift_p = np.where(pred_b.data % 1000 > 0, 500, 0)
    shift_g = np.where(gt_b.data % 1000 > 0, 500, 0)
    pred_b2 = PanopticMap((pred_b.data + shift_p).astype(np.uint16))
    gt_b2 = PanopticMap((gt_b.data + shift_g).astype(np.uint16))
    scores_a = {int(p): float(rng.uniform(0.2, 1.0))
                for p in np.unique(pred_a.data) if p >= 1000}
    scores_b = {int(p): float(rng.uniform(0.2, 1.0))
                for p in np.unique(pred_b2.data) if p >= 1000}
    acc = ApAccumulator(voc_like_table, "voc")
    acc.add(pred_a, scores_a, gt_a)
    acc.add(pred_b2, scores_b, gt_b2)
    split = acc.report()
    concat = ApAccumulator(voc_like_table, "voc")
    concat.add(
        PanopticMap(np.hstack([pred_a.data, pred_b2.data])),
        {**scores_a, **scores_b},
        PanopticMap(np.hstack([gt_a.data, gt_b2.data])),
    )
    joined = concat.report()
    assert joined.per_class.keys() == split.per_class.keys()
    for cls, row in split.per_class.items():
        for t, ap in row.items():
            assert joined.per_class[cls][t] == pytest.approx(ap, abs=1e-12)


# ---------------------------------------------------------------------------
# directory evaluation


def _write_scene(dirpath, stem, array):
    write_label_png(dirpath / f"{stem}.png", array.astype(np.uint16))


def test_evaluate_directories_self_is_perfect(tmp_path, voc_like_table):
    pred_dir = tmp_path / "pred"
    gt_dir = tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    rng = np.random.default_rng(3)
    for stem in ("a", "b"):
        _, gt = _random_scene(rng)
        _write_scene(pred_dir, stem, gt.data)
        _write_scene(gt_dir, stem, gt.data)
    report = evaluate_directories(pred_dir, gt_dir, voc_like_table)
    assert report.n_images == 2
    assert report.iou.mean == 1.0
    assert report.iou_by_kind["all"] == 1.0
    assert report.pq.all.pq == 1.0
    assert report.apr.vol == pytest.approx(1.0)


def test_evaluate_directories_reads_scores(tmp_path, voc_like_table):
    pred_dir = tmp_path / "pred"
    gt_dir = tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    gt = np.array([[2001] * 10 + [0] * 10], dtype=np.uint16)
    pred = np.array([[2001] * 8 + [2002, 2002] + [0] * 10], dtype=np.uint16)
    _write_scene(gt_dir, "x", gt)
    _write_scene(pred_dir, "x", pred)
    dump_json(pred_dir / "x.json", [
        {"id": 2001, "score": 0.5}, {"id": 2002, "score": 0.9},
    ])
    report = evaluate_directories(pred_dir, gt_dir, voc_like_table,
                                  metrics=("apr",))
    assert report.apr.per_class[2][0.5] == pytest.approx(0.5)


def test_evaluate_directories_missing_pair(tmp_path, voc_like_table):
    pred_dir = tmp_path / "pred"
    gt_dir = tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    _write_scene(gt_dir, "a", np.zeros((2, 2), dtype=np.uint16))
    with pytest.raises(MissingPairError):
        evaluate_directories(pred_dir, gt_dir, voc_like_table)


def test_evaluate_directories_extent_mismatch(tmp_path, voc_like_table):
    pred_dir = tmp_path / "pred"
    gt_dir = tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    _write_scene(gt_dir, "a", np.zeros((2, 2), dtype=np.uint16))
    _write_scene(pred_dir, "a", np.zeros((3, 2), dtype=np.uint16))
    with pytest.raises(ExtentMismatchError):
        evaluate_directories(pred_dir, gt_dir, voc_like_table)
