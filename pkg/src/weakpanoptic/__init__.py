"""Weakly-supervised panoptic segmentation toolkit."""

from .labels import (
    IGNORE,
    ClassDef,
    ClassTable,
    LabelMap,
    PanopticMap,
    SemanticProbMap,
    decode_panoptic_id,
    encode_panoptic_id,
    panoptic_to_semantic,
    render_colorized,
)

__version__ = "0.1.0"

__all__ = [
    "IGNORE",
    "ClassDef",
    "ClassTable",
    "LabelMap",
    "PanopticMap",
    "SemanticProbMap",
    "decode_panoptic_id",
    "encode_panoptic_id",
    "panoptic_to_semantic",
    "render_colorized",
    "__version__",
]
