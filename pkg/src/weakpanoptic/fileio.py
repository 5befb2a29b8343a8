"""File formats: 16-bit label PNGs, PTF float tensors, and JSON sidecars."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BadMagicError,
    FormatError,
    NonFiniteValueError,
    TruncatedFileError,
)
from .labels import ClassDef, ClassTable, LabelMap, PanopticMap

PTF_MAGIC = b"PTF1"
_PTF_HEADER = struct.Struct("<III")


# ---------------------------------------------------------------------------
# PNG rasters


def write_label_png(path: str | Path, data: np.ndarray | LabelMap | PanopticMap) -> None:
    """Store a uint16 raster as 16-bit grayscale PNG (lossless)."""
    arr = data.data if isinstance(data, (LabelMap, PanopticMap)) else np.asarray(data)
    if arr.ndim != 2:
        raise ValueError(f"label raster must be 2-D, got {arr.shape}")
    arr = arr.astype(np.uint16, copy=False)
    Image.fromarray(arr).save(Path(path), format="PNG")


def read_label_png(path: str | Path) -> np.ndarray:
    """Load a 16-bit grayscale PNG written by :func:`write_label_png`."""
    with Image.open(Path(path)) as im:
        if im.mode not in ("I;16", "I", "L"):
            raise FormatError(f"{path}: expected 16-bit grayscale PNG, got {im.mode}")
        arr = np.asarray(im)
    if arr.dtype != np.uint16:
        if arr.min() < 0 or arr.max() > 65535:
            raise FormatError(f"{path}: values exceed uint16 range")
        arr = arr.astype(np.uint16)
    return arr


def read_label_map(path: str | Path) -> LabelMap:
    return LabelMap(read_label_png(path))


def read_panoptic_map(path: str | Path) -> PanopticMap:
    return PanopticMap(read_label_png(path))


def write_image_png(path: str | Path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("image must be uint8 (H, W, 3)")
    Image.fromarray(rgb, mode="RGB").save(Path(path), format="PNG")


def read_image_png(path: str | Path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        return np.asarray(im.convert("RGB"))


def write_mask_png(path: str | Path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=bool)
    Image.fromarray((mask * np.uint8(255))).save(Path(path), format="PNG")


def read_mask_png(path: str | Path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127


# ---------------------------------------------------------------------------
# PTF float tensor files


def write_ptf(path: str | Path, tensor: np.ndarray) -> None:
    """Write a float tensor as PTF: magic, u32 h/w/c, little-endian f32 payload.

    2-D input is stored as a single channel.  Values must be finite.
    """
    arr = np.asarray(tensor, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"PTF tensors are (H, W) or (H, W, C), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteValueError("PTF payload must be finite")
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(PTF_MAGIC)
        fh.write(_PTF_HEADER.pack(h, w, c))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_ptf(path: str | Path) -> np.ndarray:
    """Read a PTF tensor, returning float32 (H, W, C)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != PTF_MAGIC:
        raise BadMagicError(f"{path}: not a PTF file")
    if len(raw) < 4 + _PTF_HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    h, w, c = _PTF_HEADER.unpack_from(raw, 4)
    expected = 4 + _PTF_HEADER.size + 4 * h * w * c
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path}: payload truncated ({len(raw)} bytes, expected {expected})"
        )
    flat = np.frombuffer(raw, dtype="<f4", count=h * w * c, offset=4 + _PTF_HEADER.size)
    arr = flat.reshape(h, w, c).astype(np.float32)
    if not np.isfinite(arr).all():
        raise NonFiniteValueError(f"{path}: payload contains non-finite values")
    return arr


# ---------------------------------------------------------------------------
# JSON sidecars


def load_class_table(path: str | Path) -> ClassTable:
    rows = json.loads(Path(path).read_text())
    if not isinstance(rows, list) or not rows:
        raise FormatError(f"{path}: class table must be a non-empty JSON list")
    defs = []
    for row in rows:
        try:
            defs.append(
                ClassDef(
                    id=int(row["id"]),
                    name=str(row["name"]),
                    kind=str(row["kind"]),
                    color=tuple(int(v) for v in row["color"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad class row {row!r}: {exc}") from exc
    return ClassTable(tuple(defs))


def save_class_table(path: str | Path, table: ClassTable) -> None:
    rows = [
        {"id": c.id, "name": c.name, "kind": c.kind, "color": list(c.color)}
        for c in sorted(table.classes, key=lambda c: c.id)
    ]
    Path(path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


def load_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc


def dump_json(path: str | Path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def list_proposal_masks(directory: str | Path) -> list[np.ndarray]:
    """Load every 8-bit mask PNG in a directory; lexicographic order is the index."""
    directory = Path(directory)
    masks = []
    for p in sorted(directory.glob("*.png")):
        masks.append(read_mask_png(p))
    return masks
