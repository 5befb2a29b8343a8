"""Core raster label model.

Semantic labels, panoptic ids, class tables, and probability rasters used by
every other module.  Panoptic ids pack (class_id, instance_index) into a
single integer that fits 16-bit PNG storage; 65535 is reserved as the ignore
sentinel in every 16-bit raster.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ExtentMismatchError,
    IgnoreSentinelError,
    OutOfRangeError,
    UnknownClassError,
)

IGNORE = 65535
MAX_CLASS_ID = 64
INSTANCE_BASE = 1000
MAX_INSTANCE_INDEX = INSTANCE_BASE - 1

THING = "thing"
STUFF = "stuff"


def encode_panoptic_id(class_id: int, instance_index: int) -> int:
    """Pack a class id and instance index into one panoptic id.

    The encoding is ``class_id * 1000 + instance_index`` so the decimal
    digits stay human readable and the maximum value (64999) fits below the
    ignore sentinel in a uint16 raster.
    """
    class_id = int(class_id)
    instance_index = int(instance_index)
    if class_id == IGNORE or instance_index == IGNORE:
        raise IgnoreSentinelError("cannot encode the ignore sentinel")
    if not 0 <= class_id <= MAX_CLASS_ID:
        raise OutOfRangeError(f"class id {class_id} outside [0, {MAX_CLASS_ID}]")
    if not 0 <= instance_index <= MAX_INSTANCE_INDEX:
        raise OutOfRangeError(
            f"instance index {instance_index} outside [0, {MAX_INSTANCE_INDEX}]"
        )
    return class_id * INSTANCE_BASE + instance_index


def decode_panoptic_id(value: int) -> tuple[int, int]:
    """Inverse of :func:`encode_panoptic_id`."""
    value = int(value)
    if value == IGNORE:
        raise IgnoreSentinelError("ignore sentinel carries no class/instance")
    if not 0 <= value <= MAX_CLASS_ID * INSTANCE_BASE + MAX_INSTANCE_INDEX:
        raise OutOfRangeError(f"panoptic id {value} out of range")
    return value // INSTANCE_BASE, value % INSTANCE_BASE


@dataclass(frozen=True)
class ClassDef:
    """One row of a class table."""

    id: int
    name: str
    kind: str
    color: tuple[int, int, int]

    def __post_init__(self) -> None:
        if not 0 <= self.id <= MAX_CLASS_ID:
            raise OutOfRangeError(f"class id {self.id} outside [0, {MAX_CLASS_ID}]")
        if self.kind not in (THING, STUFF):
            raise ValueError(f"kind must be 'thing' or 'stuff', got {self.kind!r}")
        if len(self.color) != 3 or any(not 0 <= c <= 255 for c in self.color):
            raise ValueError(f"color must be three bytes, got {self.color!r}")


@dataclass(frozen=True)
class ClassTable:
    """Immutable table of dataset classes keyed by id."""

    classes: tuple[ClassDef, ...]
    _by_id: dict[int, ClassDef] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id = {}
        for c in self.classes:
            if c.id in by_id:
                raise ValueError(f"duplicate class id {c.id}")
            by_id[c.id] = c
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, class_id: int) -> bool:
        return int(class_id) in self._by_id

    def get(self, class_id: int) -> ClassDef:
        try:
            return self._by_id[int(class_id)]
        except KeyError:
            raise UnknownClassError(f"class id {class_id} not in table") from None

    def is_thing(self, class_id: int) -> bool:
        return self.get(class_id).kind == THING

    def thing_ids(self) -> list[int]:
        return sorted(c.id for c in self.classes if c.kind == THING)

    def stuff_ids(self) -> list[int]:
        return sorted(c.id for c in self.classes if c.kind == STUFF)

    def ids(self) -> list[int]:
        return sorted(c.id for c in self.classes)

    def num_labels(self) -> int:
        """Label axis length for dense probability rasters (max id + 1)."""
        return max(c.id for c in self.classes) + 1

    def background_id(self) -> int | None:
        """The catch-all stuff class if the table declares exactly one."""
        stuff = self.stuff_ids()
        return stuff[0] if len(stuff) == 1 else None


def _require_uint16_2d(data: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise ValueError(f"{what} must be 2-D, got shape {arr.shape}")
    if arr.dtype != np.uint16:
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"{what} must hold integers, got dtype {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() > IGNORE):
            raise OutOfRangeError(f"{what} values outside uint16 range")
        arr = arr.astype(np.uint16)
    return arr


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel semantic class ids with the ignore sentinel allowed."""

    data: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _require_uint16_2d(self.data, "LabelMap"))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def validate_classes(self, table: ClassTable) -> None:
        present = np.unique(self.data)
        for v in present:
            if v != IGNORE and int(v) not in table:
                raise UnknownClassError(f"label {int(v)} not in class table")


@dataclass(frozen=True)
class PanopticMap:
    """Per-pixel encoded panoptic ids with the ignore sentinel allowed."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = _require_uint16_2d(self.data, "PanopticMap")
        valid = arr[arr != IGNORE]
        if valid.size and valid.max() > MAX_CLASS_ID * INSTANCE_BASE + MAX_INSTANCE_INDEX:
            raise OutOfRangeError("PanopticMap contains undecodable ids")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def segment_ids(self) -> list[int]:
        """Encoded ids present, ignore excluded, ascending."""
        vals = np.unique(self.data)
        return [int(v) for v in vals if v != IGNORE]


def panoptic_to_semantic(pan: PanopticMap) -> LabelMap:
    """Drop instance indices, keeping the ignore sentinel in place."""
    data = pan.data
    sem = (data // INSTANCE_BASE).astype(np.uint16)
    sem[data == IGNORE] = IGNORE
    return LabelMap(sem)


@dataclass(frozen=True)
class SemanticProbMap:
    """Per-pixel class probabilities, shape (height, width, labels)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] < 1:
            raise ValueError(f"SemanticProbMap must be (H, W, L), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("SemanticProbMap contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0 + 1e-6:
            raise ValueError("SemanticProbMap values outside [0, 1]")
        sums = arr.sum(axis=2)
        if np.abs(sums - 1.0).max() > 1e-4:
            raise ValueError("SemanticProbMap pixels must sum to 1 within 1e-4")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def num_labels(self) -> int:
        return self.data.shape[2]


_SHADE_STEP = 0.6180339887498949  # irrational stride so consecutive shades differ


def _instance_shade(base: np.ndarray, instance_index: int) -> np.ndarray:
    """Deterministic shade of a class color for one instance index.

    Shades interpolate between a darkened and a whitened version of the base
    color; the whitened end keeps distinct shades available even for very
    dark base colors.
    """
    t = ((instance_index + 1) * _SHADE_STEP) % 1.0
    lo = 0.40 * base
    hi = 0.55 * base + 0.45 * 255.0
    return lo + (hi - lo) * t


def render_colorized(pan: PanopticMap, table: ClassTable) -> np.ndarray:
    """Render a panoptic map as an RGB byte image.

    Stuff pixels take the class color verbatim, thing instances take
    deterministic per-instance shades, ignore pixels render black.
    """
    out = np.zeros((pan.height, pan.width, 3), dtype=np.uint8)
    for enc in pan.segment_ids():
        class_id, inst = decode_panoptic_id(enc)
        cdef = table.get(class_id)  # raises UnknownClassError when absent
        base = np.asarray(cdef.color, dtype=np.float64)
        if cdef.kind == STUFF:
            rgb = base
        else:
            rgb = _instance_shade(base, inst)
        out[pan.data == enc] = np.clip(np.round(rgb), 0, 255).astype(np.uint8)
    return out


def _extent_of(raster) -> tuple[int, int]:
    if isinstance(raster, (LabelMap, PanopticMap, SemanticProbMap)):
        return raster.data.shape[0], raster.data.shape[1]
    arr = np.asarray(raster)
    return arr.shape[0], arr.shape[1]


def check_same_extent(a, b, what: str = "rasters") -> None:
    """Raise ExtentMismatchError unless the two rasters share (H, W)."""
    ea, eb = _extent_of(a), _extent_of(b)
    if ea != eb:
        raise ExtentMismatchError(f"{what} differ in extent: {ea} vs {eb}")
