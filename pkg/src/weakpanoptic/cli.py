"""One binary driving the whole pipeline through subcommands.

Every subcommand is a pure function of its inputs, flags, and seed: reruns
produce byte-identical outputs, and --jobs only changes wall time.  Alongside
each output a run manifest records the resolved configuration, the seed, and
a digest of every file consumed, so identical manifests imply identical
outputs.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .boxgt import (
    UNCLAIMED_BACKGROUND,
    UNCLAIMED_IGNORE,
    fabricate_box_gt,
    load_annotations,
)
from .errors import MissingGroundTruthError, UsageError, WeakPanopticError
from .fileio import (
    dump_json,
    load_class_table,
    load_json,
    read_image_png,
    read_label_map,
    read_panoptic_map,
    read_ptf,
    write_image_png,
    write_label_png,
    write_ptf,
)
from .grabcut import GrabCutParams
from .instcrf import (
    SCORE_MODES,
    InstanceCrfConfig,
    add_stuff_dummies,
    load_detections,
    partition,
    score_instances,
)
from .labels import (
    IGNORE,
    LabelMap,
    PanopticMap,
    SemanticProbMap,
    panoptic_to_semantic,
    render_colorized,
)
from .metrics import evaluate_directories
from .refine import RefineConfig, run_refinement, smoothed_probabilities
from .synth import (
    dataset_stems,
    generate_scene,
    load_tagged_heatmaps,
    merge_box_and_tag_labels,
    prepare_dataset_dir,
    scene_rng,
    stem_for,
    write_scene_files,
)
from .taggt import Heatmap, fabricate_tag_gt

CRF_METHODS = ("auto", "exact", "fast")

_DEFAULTS: dict[str, dict] = {
    "synth": {"seed": 0, "jobs": 1, "n_images": 8, "height": 48, "width": 48},
    "fabricate-box": {"seed": 0, "jobs": 1, "unclaimed": UNCLAIMED_IGNORE},
    "fabricate-tags": {"seed": 0, "jobs": 1, "tau": 0.5},
    "partition": {
        "seed": 0,
        "jobs": 1,
        "w1": 1.0,
        "w2": 1.0,
        "epsilon": 1e-6,
        "crf_iters": 5,
        "crf_method": "auto",
        "score_mode": "detection",
    },
    "refine": {
        "seed": 0,
        "jobs": 1,
        "rounds": 1,
        "clamp_mode": UNCLAIMED_IGNORE,
        "crf_iters": 5,
        "crf_method": "auto",
    },
    "evaluate": {
        "seed": 0,
        "jobs": 1,
        "metrics": "iou,pq,apr",
        "regime": "voc",
        "iou_threshold": 0.5,
        "score_mode": None,
    },
    "render": {"seed": 0, "jobs": 1, "semantic": False},
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weakpanoptic",
        description="Weakly-supervised panoptic segmentation pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        sp.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
        sp.add_argument("--config", default=argparse.SUPPRESS, metavar="FILE")

    common(parser)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    sp = subs.add_parser("synth", help="generate a synthetic dataset")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-images", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--height", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--width", type=int, default=argparse.SUPPRESS)

    sp = subs.add_parser("fabricate-box", help="approximate labels from boxes")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--unclaimed", choices=(UNCLAIMED_IGNORE, UNCLAIMED_BACKGROUND),
                    default=argparse.SUPPRESS)

    sp = subs.add_parser("fabricate-tags", help="approximate labels from tag heatmaps")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--tau", type=float, default=argparse.SUPPRESS)

    sp = subs.add_parser("partition", help="assign pixels to detections")
    common(sp)
    sp.add_argument("--dataset", default=None)
    sp.add_argument("--probs", default=None,
                    help="probability dir (batch) or .ptf file (single image)")
    sp.add_argument("--detections", default=None)
    sp.add_argument("--image", default=None)
    sp.add_argument("--classes", default=None)
    sp.add_argument("--stuff-present", default=None, metavar="IDS",
                    help="comma-separated stuff class ids (single-image mode)")
    sp.add_argument("--truth", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--w1", type=float, default=argparse.SUPPRESS)
    sp.add_argument("--w2", type=float, default=argparse.SUPPRESS)
    sp.add_argument("--epsilon", type=float, default=argparse.SUPPRESS)
    sp.add_argument("--crf-iters", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--crf-method", choices=CRF_METHODS, default=argparse.SUPPRESS)
    sp.add_argument("--score-mode", choices=SCORE_MODES, default=argparse.SUPPRESS)

    sp = subs.add_parser("refine", help="alternate refits and label regeneration")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--labels", default=None, help="premerged labels dir")
    sp.add_argument("--box-labels", default=None)
    sp.add_argument("--tag-labels", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--rounds", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--clamp-mode", choices=(UNCLAIMED_IGNORE, UNCLAIMED_BACKGROUND),
                    default=argparse.SUPPRESS)
    sp.add_argument("--crf-iters", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--crf-method", choices=CRF_METHODS, default=argparse.SUPPRESS)

    sp = subs.add_parser("evaluate", help="score predictions against ground truth")
    common(sp)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--classes", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--metrics", default=argparse.SUPPRESS,
                    help="comma-separated subset of iou,pq,apr")
    sp.add_argument("--regime", choices=("voc", "cityscapes"),
                    default=argparse.SUPPRESS)
    sp.add_argument("--iou-threshold", type=float, default=argparse.SUPPRESS)
    sp.add_argument("--score-mode", choices=SCORE_MODES, default=argparse.SUPPRESS)

    sp = subs.add_parser("render", help="colorize a label raster")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--classes", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--semantic", action="store_true", default=argparse.SUPPRESS,
                    help="treat the input as class ids instead of panoptic ids")

    return parser


def _resolve_config(ns: argparse.Namespace) -> dict:
    """Apply flag > config file > default precedence for the knob values."""
    sub = ns.subcommand
    defaults = dict(_DEFAULTS[sub])
    resolved = dict(defaults)
    config_path = getattr(ns, "config", None)
    if config_path:
        try:
            raw = load_json(config_path)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {config_path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"config file {config_path} must hold a JSON object")
        known_anywhere = set()
        for d in _DEFAULTS.values():
            known_anywhere.update(d)
        for key, value in raw.items():
            if isinstance(value, dict):
                if key not in _DEFAULTS:
                    raise UsageError(f"config section {key!r} is not a subcommand")
                unknown = set(value) - set(_DEFAULTS[key])
                if unknown:
                    raise UsageError(
                        f"config section {key!r} has unknown keys {sorted(unknown)}"
                    )
            elif key not in known_anywhere:
                raise UsageError(f"unknown config key {key!r}")
        for key, value in raw.items():
            if not isinstance(value, dict) and key in defaults:
                resolved[key] = value
        section = raw.get(sub)
        if isinstance(section, dict):
            resolved.update(section)
    for key in defaults:
        if hasattr(ns, key):
            resolved[key] = getattr(ns, key)
    return resolved


def _require_positive(resolved: dict, *names: str) -> None:
    for name in names:
        if resolved[name] < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1")


def _require_choice(resolved: dict, name: str, choices: tuple,
                    allow_none: bool = False) -> None:
    value = resolved[name]
    if allow_none and value is None:
        return
    if value not in choices:
        raise UsageError(
            f"--{name.replace('_', '-')} must be one of {', '.join(choices)}")


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _hash_inputs(paths: dict[str, Path]) -> dict[str, str]:
    return {key: _hash_file(path) for key, path in sorted(paths.items())}


def _manifest_payload(subcommand: str, resolved: dict,
                      inputs: dict[str, str]) -> str:
    config = {k: v for k, v in resolved.items() if k not in ("seed", "jobs")}
    payload = {
        "subcommand": subcommand,
        "version": __version__,
        "seed": resolved["seed"],
        "config": config,
        "inputs": inputs,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write_manifest_dir(out_dir: Path, subcommand: str, resolved: dict,
                        inputs: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        _manifest_payload(subcommand, resolved, inputs))


def _write_manifest_sibling(out_file: Path, subcommand: str, resolved: dict,
                            inputs: dict[str, str]) -> None:
    side = out_file.with_name(out_file.name + ".manifest.json")
    side.write_text(_manifest_payload(subcommand, resolved, inputs))


def _parallel_map(worker, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks))


def _image_seed(seed: int, index: int) -> int:
    """Stable per-image integer seed, independent of scheduling."""
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def _dataset_file(root: Path, sub: str, name: str) -> Path:
    path = root / sub / name
    if not path.exists():
        raise FileNotFoundError(f"dataset is missing {sub}/{name}")
    return path


# --- synth ---------------------------------------------------------------


def _synth_worker(task: tuple) -> None:
    out, index, seed, height, width = task
    scene = generate_scene(scene_rng(seed, index), height, width)
    write_scene_files(Path(out), stem_for(index), scene)


def _cmd_synth(ns: argparse.Namespace, resolved: dict) -> None:
    _require_positive(resolved, "n_images", "height", "width", "jobs")
    out = Path(ns.out)
    prepare_dataset_dir(out)
    tasks = [(str(out), index, resolved["seed"], resolved["height"], resolved["width"])
             for index in range(resolved["n_images"])]
    _parallel_map(_synth_worker, tasks, resolved["jobs"])
    _write_manifest_dir(out, "synth", resolved, {})


# --- fabricate-box -------------------------------------------------------


def _fabricate_box_worker(task: tuple) -> None:
    dataset, out, stem, seed_int, unclaimed = task
    root = Path(dataset)
    table = load_class_table(root / "classes.json")
    image = read_image_png(root / "images" / f"{stem}.png")
    annotations = load_annotations(root / "boxes" / f"{stem}.json")
    semantic, pan = fabricate_box_gt(
        image, annotations, table, unclaimed=unclaimed,
        grabcut_params=GrabCutParams(seed=seed_int),
    )
    write_label_png(Path(out) / "semantic" / f"{stem}.png", semantic)
    write_label_png(Path(out) / "panoptic" / f"{stem}.png", pan)


def _cmd_fabricate_box(ns: argparse.Namespace, resolved: dict) -> None:
    _require_positive(resolved, "jobs")
    _require_choice(resolved, "unclaimed", (UNCLAIMED_IGNORE, UNCLAIMED_BACKGROUND))
    root = Path(ns.dataset)
    out = Path(ns.out)
    stems = dataset_stems(root)
    if not stems:
        raise FileNotFoundError(f"no images under {root / 'images'}")
    (out / "semantic").mkdir(parents=True, exist_ok=True)
    (out / "panoptic").mkdir(parents=True, exist_ok=True)
    inputs = {"classes.json": root / "classes.json"}
    tasks = []
    for index, stem in enumerate(stems):
        inputs[f"images/{stem}.png"] = _dataset_file(root, "images", f"{stem}.png")
        inputs[f"boxes/{stem}.json"] = _dataset_file(root, "boxes", f"{stem}.json")
        tasks.append((str(root), str(out), stem,
                      _image_seed(resolved["seed"], index), resolved["unclaimed"]))
    _parallel_map(_fabricate_box_worker, tasks, resolved["jobs"])
    _write_manifest_dir(out, "fabricate-box", resolved, _hash_inputs(inputs))


# --- fabricate-tags ------------------------------------------------------


def _fabricate_tags_worker(task: tuple) -> None:
    dataset, out, stem, tau = task
    heatmaps = [Heatmap(cls, plane)
                for cls, plane in load_tagged_heatmaps(dataset, stem)]
    labels = fabricate_tag_gt(heatmaps, tau=tau)
    write_label_png(Path(out) / "semantic" / f"{stem}.png", labels)


def _cmd_fabricate_tags(ns: argparse.Namespace, resolved: dict) -> None:
    _require_positive(resolved, "jobs")
    if not 0.0 < resolved["tau"] <= 1.0:
        raise UsageError("--tau must lie in (0, 1]")
    root = Path(ns.dataset)
    out = Path(ns.out)
    stems = dataset_stems(root)
    if not stems:
        raise FileNotFoundError(f"no images under {root / 'images'}")
    (out / "semantic").mkdir(parents=True, exist_ok=True)
    inputs = {}
    tasks = []
    for stem in stems:
        inputs[f"tags/{stem}.json"] = _dataset_file(root, "tags", f"{stem}.json")
        inputs[f"heatmaps/{stem}.ptf"] = _dataset_file(root, "heatmaps", f"{stem}.ptf")
        tasks.append((str(root), str(out), stem, resolved["tau"]))
    _parallel_map(_fabricate_tags_worker, tasks, resolved["jobs"])
    _write_manifest_dir(out, "fabricate-tags", resolved, _hash_inputs(inputs))


# --- partition -----------------------------------------------------------


def _instance_rows(result, detections, score_mode: str,
                   ground_truth: PanopticMap | None) -> list[dict]:
    """Instance records carrying the chosen score plus every computable mode."""
    if score_mode == "oracle" and ground_truth is None:
        raise MissingGroundTruthError("oracle score mode needs a truth raster")
    per_mode = {}
    for mode in SCORE_MODES:
        if mode == "oracle" and ground_truth is None:
            continue
        per_mode[mode] = score_instances(result, detections, mode, ground_truth)
    rows = []
    for i, inst in enumerate(result.instances):
        rows.append({
            "id": inst.encoded_id,
            "label": inst.class_id,
            "pixels": inst.pixel_count,
            "score": per_mode[score_mode][i].score,
            "scores": {mode: insts[i].score for mode, insts in per_mode.items()},
        })
    rows.sort(key=lambda row: row["id"])
    return rows


def _partition_one(image_path: Path, probs_path: Path, detections_path: Path,
                   classes_path: Path, stuff_present: list[int],
                   truth_path: Path | None, out: Path, stem: str,
                   resolved: dict) -> None:
    table = load_class_table(classes_path)
    image = read_image_png(image_path)
    probs = SemanticProbMap(read_ptf(probs_path))
    detections = load_detections(detections_path)
    h, w = image.shape[:2]
    detections = add_stuff_dummies(detections, stuff_present, table, h, w)
    config = InstanceCrfConfig(
        box_weight=resolved["w1"],
        global_weight=resolved["w2"],
        epsilon=resolved["epsilon"],
        iters=resolved["crf_iters"],
    )
    result = partition(probs, detections, image, config,
                       method=resolved["crf_method"])
    truth = read_panoptic_map(truth_path) if truth_path else None
    rows = _instance_rows(result, detections, resolved["score_mode"], truth)
    write_label_png(out / f"{stem}.png", result.panoptic)
    dump_json(out / f"{stem}.json", rows)


def _partition_worker(task: tuple) -> None:
    dataset, probs_dir, out, stem, resolved = task
    root = Path(dataset)
    truth_path = root / "truth" / f"{stem}.png"
    stuff_present = [int(v) for v in load_json(
        _dataset_file(root, "tags", f"{stem}.json"))]
    _partition_one(
        _dataset_file(root, "images", f"{stem}.png"),
        Path(probs_dir) / f"{stem}.ptf",
        _dataset_file(root, "detections", f"{stem}.json"),
        root / "classes.json",
        stuff_present,
        truth_path if truth_path.exists() else None,
        Path(out), stem, resolved,
    )


def _parse_stuff_present(raw: str | None) -> list[int]:
    if raw is None or not raw.strip():
        return []
    try:
        return [int(v) for v in raw.split(",")]
    except ValueError as exc:
        raise UsageError(f"--stuff-present must be comma-separated ints, got {raw!r}") from exc


def _cmd_partition(ns: argparse.Namespace, resolved: dict) -> None:
    _require_positive(resolved, "jobs", "crf_iters")
    _require_choice(resolved, "score_mode", SCORE_MODES)
    _require_choice(resolved, "crf_method", CRF_METHODS)
    if resolved["w1"] < 0 or resolved["w2"] < 0 or resolved["epsilon"] <= 0:
        raise UsageError("--w1/--w2 must be >= 0 and --epsilon > 0")
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    if ns.dataset is not None:
        if ns.probs is None:
            raise UsageError("batch partition needs --probs DIR")
        root = Path(ns.dataset)
        probs_dir = Path(ns.probs)
        stems = dataset_stems(root)
        if not stems:
            raise FileNotFoundError(f"no images under {root / 'images'}")
        inputs = {"classes.json": root / "classes.json"}
        tasks = []
        for stem in stems:
            probs_path = probs_dir / f"{stem}.ptf"
            if not probs_path.exists():
                raise FileNotFoundError(f"missing probabilities {probs_path}")
            inputs[f"probs/{stem}.ptf"] = probs_path
            inputs[f"images/{stem}.png"] = _dataset_file(root, "images", f"{stem}.png")
            inputs[f"detections/{stem}.json"] = _dataset_file(
                root, "detections", f"{stem}.json")
            inputs[f"tags/{stem}.json"] = _dataset_file(root, "tags", f"{stem}.json")
            truth_path = root / "truth" / f"{stem}.png"
            if truth_path.exists():
                inputs[f"truth/{stem}.png"] = truth_path
            tasks.append((str(root), str(probs_dir), str(out), stem, resolved))
        _parallel_map(_partition_worker, tasks, resolved["jobs"])
    else:
        needed = {"probs": ns.probs, "detections": ns.detections,
                  "image": ns.image, "classes": ns.classes}
        missing = [f"--{k}" for k, v in needed.items() if v is None]
        if missing:
            raise UsageError(
                "single-image partition needs " + ", ".join(missing))
        stem = Path(ns.image).stem
        truth_path = Path(ns.truth) if ns.truth else None
        inputs = {key: Path(val) for key, val in needed.items()}
        if truth_path:
            inputs["truth"] = truth_path
        _partition_one(
            Path(ns.image), Path(ns.probs), Path(ns.detections),
            Path(ns.classes), _parse_stuff_present(ns.stuff_present),
            truth_path, out, stem, resolved,
        )
    _write_manifest_dir(out, "partition", resolved, _hash_inputs(inputs))


# --- refine --------------------------------------------------------------


def _load_initial_labels(ns: argparse.Namespace, stem: str) -> LabelMap:
    sources = []
    if ns.labels:
        sources.append(read_label_map(Path(ns.labels) / "semantic" / f"{stem}.png"))
    else:
        if ns.box_labels:
            sources.append(read_label_map(
                Path(ns.box_labels) / "semantic" / f"{stem}.png"))
        if ns.tag_labels:
            sources.append(read_label_map(
                Path(ns.tag_labels) / "semantic" / f"{stem}.png"))
    if len(sources) == 1:
        return sources[0]
    return merge_box_and_tag_labels(sources[0], sources[1])


def _cmd_refine(ns: argparse.Namespace, resolved: dict) -> None:
    _require_positive(resolved, "rounds", "crf_iters", "jobs")
    _require_choice(resolved, "clamp_mode", (UNCLAIMED_IGNORE, UNCLAIMED_BACKGROUND))
    _require_choice(resolved, "crf_method", CRF_METHODS)
    if ns.labels and (ns.box_labels or ns.tag_labels):
        raise UsageError("--labels excludes --box-labels/--tag-labels")
    if not (ns.labels or ns.box_labels or ns.tag_labels):
        raise UsageError("refine needs --labels or --box-labels/--tag-labels")
    root = Path(ns.dataset)
    out = Path(ns.out)
    stems = dataset_stems(root)
    if not stems:
        raise FileNotFoundError(f"no images under {root / 'images'}")
    table = load_class_table(root / "classes.json")
    inputs = {"classes.json": root / "classes.json"}

    images, annotations, initial = [], [], []
    truth_semantic, truth_panoptic = [], []
    for stem in stems:
        image_path = _dataset_file(root, "images", f"{stem}.png")
        boxes_path = _dataset_file(root, "boxes", f"{stem}.json")
        inputs[f"images/{stem}.png"] = image_path
        inputs[f"boxes/{stem}.json"] = boxes_path
        images.append(read_image_png(image_path))
        annotations.append(load_annotations(boxes_path))
        initial.append(_load_initial_labels(ns, stem))
        for flag, value in (("labels", ns.labels), ("box-labels", ns.box_labels),
                            ("tag-labels", ns.tag_labels)):
            if value:
                inputs[f"{flag}/{stem}.png"] = Path(value) / "semantic" / f"{stem}.png"
        truth_path = root / "truth" / f"{stem}.png"
        if truth_path.exists():
            inputs[f"truth/{stem}.png"] = truth_path
            pan = read_panoptic_map(truth_path)
            truth_panoptic.append(pan)
            truth_semantic.append(panoptic_to_semantic(pan))
    have_truth = len(truth_semantic) == len(stems)

    config = RefineConfig(
        rounds=resolved["rounds"],
        clamp_mode=resolved["clamp_mode"],
        crf_iters=resolved["crf_iters"],
        crf_method=resolved["crf_method"],
    )
    result = run_refinement(
        images, annotations, initial, config, table,
        truth_semantic=truth_semantic if have_truth else None,
        truth_panoptic=truth_panoptic if have_truth else None,
    )
    (out / "semantic").mkdir(parents=True, exist_ok=True)
    (out / "probs").mkdir(parents=True, exist_ok=True)
    for stem, labels, image in zip(stems, result.snapshots[-1], images):
        write_label_png(out / "semantic" / f"{stem}.png", labels)
        probs = smoothed_probabilities(image, result.predictor, config)
        write_ptf(out / "probs" / f"{stem}.ptf", probs.astype(np.float32))
    if result.metrics:
        dump_json(out / "rounds.json", [
            {"round": m.round_index, "mean_iou": m.mean_iou, "pq_all": m.pq_all}
            for m in result.metrics
        ])
    _write_manifest_dir(out, "refine", resolved, _hash_inputs(inputs))


# --- evaluate ------------------------------------------------------------


def _cmd_evaluate(ns: argparse.Namespace, resolved: dict) -> None:
    metric_names = tuple(
        name.strip() for name in resolved["metrics"].split(",") if name.strip())
    for name in metric_names:
        if name not in ("iou", "pq", "apr"):
            raise UsageError(f"unknown metric {name!r}")
    if not metric_names:
        raise UsageError("--metrics must select at least one of iou,pq,apr")
    if not 0.0 <= resolved["iou_threshold"] < 1.0:
        raise UsageError("--iou-threshold must lie in [0, 1)")
    _require_choice(resolved, "regime", ("voc", "cityscapes"))
    _require_choice(resolved, "score_mode", SCORE_MODES, allow_none=True)
    table = load_class_table(ns.classes)
    report = evaluate_directories(
        ns.pred, ns.gt, table,
        metrics=metric_names,
        regime=resolved["regime"],
        iou_threshold=resolved["iou_threshold"],
        score_mode=resolved["score_mode"],
    )
    text = json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if ns.out:
        out = Path(ns.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        inputs = {"classes": Path(ns.classes)}
        for side, directory in (("pred", Path(ns.pred)), ("gt", Path(ns.gt))):
            for path in sorted(directory.glob("*.png")):
                inputs[f"{side}/{path.name}"] = path
            for path in sorted(directory.glob("*.json")):
                if path.name != "manifest.json":
                    inputs[f"{side}/{path.name}"] = path
        _write_manifest_sibling(out, "evaluate", resolved, _hash_inputs(inputs))


# --- render --------------------------------------------------------------


def _cmd_render(ns: argparse.Namespace, resolved: dict) -> None:
    table = load_class_table(ns.classes)
    if resolved["semantic"]:
        semantic = read_label_map(ns.input)
        data = semantic.data.astype(np.uint32) * 1000
        data[semantic.data == IGNORE] = IGNORE
        pan = PanopticMap(data.astype(np.uint16))
    else:
        pan = read_panoptic_map(ns.input)
    rgb = render_colorized(pan, table)
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_image_png(out, rgb)
    _write_manifest_sibling(out, "render", resolved,
                            _hash_inputs({"input": Path(ns.input),
                                          "classes": Path(ns.classes)}))


_HANDLERS = {
    "synth": _cmd_synth,
    "fabricate-box": _cmd_fabricate_box,
    "fabricate-tags": _cmd_fabricate_tags,
    "partition": _cmd_partition,
    "refine": _cmd_refine,
    "evaluate": _cmd_evaluate,
    "render": _cmd_render,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return 0 if code == 0 else 1
    try:
        resolved = _resolve_config(ns)
        _HANDLERS[ns.subcommand](ns, resolved)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (WeakPanopticError, OSError, ValueError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
