"""Synthetic color-separable scenes with full weak and true annotations.

Each scene is a two-band landscape (sky over grass) with a few disjoint
rectangles and discs dropped on top.  Colors are fixed per class with mild
Gaussian pixel noise, so a histogram predictor can learn them and graph-based
segmentation can recover them.  Every weak signal the pipeline consumes is
derived from the true masks: tight boxes, scored detections (plus occasional
low-scored false positives), stuff tags, and blurred peak-scaled heatmaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .boxgt import BoxAnnotation, save_annotations
from .fileio import dump_json, load_json, read_ptf, save_class_table, write_image_png, write_label_png, write_ptf
from .geometry import BoundingBox, tight_box
from .instcrf import Detection, save_detections
from .labels import (
    IGNORE,
    ClassDef,
    ClassTable,
    LabelMap,
    PanopticMap,
    check_same_extent,
    encode_panoptic_id,
)

SKY, GRASS, CRATE, DISC = 0, 1, 2, 3

_BASE_COLORS = {
    SKY: (70, 110, 200),
    GRASS: (60, 150, 70),
    CRATE: (190, 60, 50),
    DISC: (230, 200, 60),
}

NOISE_SIGMA = 8.0
HEATMAP_SIGMA = 3.0


def make_synth_class_table() -> ClassTable:
    return ClassTable(
        (
            ClassDef(SKY, "sky", "stuff", _BASE_COLORS[SKY]),
            ClassDef(GRASS, "grass", "stuff", _BASE_COLORS[GRASS]),
            ClassDef(CRATE, "crate", "thing", _BASE_COLORS[CRATE]),
            ClassDef(DISC, "disc", "thing", _BASE_COLORS[DISC]),
        )
    )


@dataclass(frozen=True)
class Scene:
    """One generated image with every annotation the pipeline can use."""

    image: np.ndarray
    semantic: LabelMap
    panoptic: PanopticMap
    annotations: list[BoxAnnotation]
    detections: list[Detection]
    tags: list[int]
    heatmaps: dict[int, np.ndarray]


def _disc_mask(height: int, width: int, cy: float, cx: float, radius: float) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    return (ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2


def generate_scene(rng: np.random.Generator, height: int = 48, width: int = 48) -> Scene:
    horizon = int(rng.integers(height * 2 // 5, height * 7 // 10))
    semantic = np.full((height, width), GRASS, dtype=np.uint16)
    semantic[:horizon] = SKY
    panoptic = np.where(semantic == SKY,
                        encode_panoptic_id(SKY, 0),
                        encode_panoptic_id(GRASS, 0)).astype(np.uint16)

    occupied = np.zeros((height, width), dtype=bool)
    counters = {CRATE: 0, DISC: 0}
    annotations: list[BoxAnnotation] = []
    detections: list[Detection] = []
    n_things = int(rng.integers(1, 4))
    for _ in range(n_things):
        cls = int(rng.choice((CRATE, DISC)))
        placed = None
        for _attempt in range(40):
            if cls == CRATE:
                bw = int(rng.integers(8, 17))
                bh = int(rng.integers(8, 17))
                x0 = int(rng.integers(0, width - bw))
                y0 = int(rng.integers(0, height - bh))
                mask = np.zeros((height, width), dtype=bool)
                mask[y0 : y0 + bh, x0 : x0 + bw] = True
            else:
                radius = float(rng.integers(4, 9))
                cy = float(rng.uniform(radius, height - radius - 1))
                cx = float(rng.uniform(radius, width - radius - 1))
                mask = _disc_mask(height, width, cy, cx, radius)
            if not (mask & occupied).any():
                placed = mask
                break
        if placed is None:
            continue
        occupied |= placed
        index = counters[cls]
        counters[cls] += 1
        semantic[placed] = cls
        panoptic[placed] = encode_panoptic_id(cls, index)
        box = tight_box(placed)
        annotations.append(BoxAnnotation(class_id=cls, box=box))
        detections.append(
            Detection(class_id=cls, score=float(rng.uniform(0.6, 0.99)), box=box)
        )
    if rng.random() < 0.15:
        bw = int(rng.integers(6, 13))
        bh = int(rng.integers(6, 13))
        x0 = int(rng.integers(0, width - bw))
        y0 = int(rng.integers(0, height - bh))
        detections.append(
            Detection(
                class_id=int(rng.choice((CRATE, DISC))),
                score=float(rng.uniform(0.1, 0.4)),
                box=BoundingBox(x0, y0, x0 + bw, y0 + bh),
            )
        )

    image = np.zeros((height, width, 3), dtype=np.float64)
    for cls, color in _BASE_COLORS.items():
        image[semantic == cls] = color
    image += rng.normal(0.0, NOISE_SIGMA, size=image.shape)
    image = np.clip(np.round(image), 0, 255).astype(np.uint8)

    tags = [SKY, GRASS]
    heatmaps = {}
    for cls in tags:
        mask = (semantic == cls).astype(np.float32)
        blurred = gaussian_filter(mask, sigma=HEATMAP_SIGMA)
        peak = float(blurred.max())
        heatmaps[cls] = (blurred / peak).astype(np.float32) if peak > 0 else blurred

    return Scene(
        image=image,
        semantic=LabelMap(semantic),
        panoptic=PanopticMap(panoptic),
        annotations=annotations,
        detections=detections,
        tags=tags,
        heatmaps=heatmaps,
    )


def scene_rng(seed: int, index: int) -> np.random.Generator:
    """Stream for one image, stable under reordering and parallelism."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def stem_for(index: int) -> str:
    return f"img_{index:04d}"


def prepare_dataset_dir(out_dir: str | Path) -> Path:
    """Create the dataset skeleton and its class table."""
    out = Path(out_dir)
    for sub in ("images", "boxes", "tags", "heatmaps", "detections", "truth"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    save_class_table(out / "classes.json", make_synth_class_table())
    return out


def write_scene_files(out_dir: str | Path, stem: str, scene: Scene) -> None:
    out = Path(out_dir)
    write_image_png(out / "images" / f"{stem}.png", scene.image)
    save_annotations(out / "boxes" / f"{stem}.json", scene.annotations)
    save_detections(out / "detections" / f"{stem}.json", scene.detections)
    dump_json(out / "tags" / f"{stem}.json", scene.tags)
    stack = np.stack([scene.heatmaps[c] for c in scene.tags], axis=-1)
    write_ptf(out / "heatmaps" / f"{stem}.ptf", stack)
    write_label_png(out / "truth" / f"{stem}.png", scene.panoptic)


def write_dataset(out_dir: str | Path, n_images: int, seed: int = 0,
                  height: int = 48, width: int = 48) -> list[str]:
    """Generate scenes into the standard dataset layout; returns the stems."""
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    out = prepare_dataset_dir(out_dir)
    stems = []
    for index in range(n_images):
        scene = generate_scene(scene_rng(seed, index), height, width)
        stem = stem_for(index)
        stems.append(stem)
        write_scene_files(out, stem, scene)
    return stems


def dataset_stems(root: str | Path) -> list[str]:
    images = sorted((Path(root) / "images").glob("*.png"))
    return [p.stem for p in images]


def load_tagged_heatmaps(root: str | Path, stem: str) -> list[tuple[int, np.ndarray]]:
    """Tag class ids paired with their heatmap planes for one image."""
    root = Path(root)
    tags = [int(t) for t in load_json(root / "tags" / f"{stem}.json")]
    stack = read_ptf(root / "heatmaps" / f"{stem}.ptf")
    if stack.shape[2] != len(tags):
        raise ValueError(
            f"{stem}: {len(tags)} tags but {stack.shape[2]} heatmap planes"
        )
    return [(cls, stack[..., i]) for i, cls in enumerate(tags)]


def merge_box_and_tag_labels(box_labels: LabelMap, tag_labels: LabelMap) -> LabelMap:
    """Overlay the two weak-label sources into one training raster.

    Box-derived labels win wherever they commit to a class; tag-derived
    labels fill the remaining ignore area.
    """
    check_same_extent(box_labels, tag_labels)
    merged = box_labels.data.copy()
    fill = merged == IGNORE
    merged[fill] = tag_labels.data[fill]
    return LabelMap(merged)
