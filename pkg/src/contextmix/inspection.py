"""Per-surface inspection and the product-level final decision.

A component is photographed once per surface. Each raw image is cropped to
its region of interest, classified, and the product is rejected as soon as
any surface is classified as a defect class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .imagecore import ImageBuffer, ResizeSpec, resize
from .sampling import CropBox
from .trainer import ModelParams, logits

NORMAL = "normal"
DEFECTIVE = "defective"


@dataclass
class ComponentRecord:
    component_id: str
    surfaces: List[Tuple[ImageBuffer, CropBox]]


@dataclass
class SurfaceVerdict:
    predicted_class: int
    scores: np.ndarray
    is_defective: bool

    @classmethod
    def from_scores(cls, scores, normal_class: int = 0) -> "SurfaceVerdict":
        scores = np.asarray(scores, dtype=np.float64)
        pred = int(np.argmax(scores))  # lowest index wins ties
        return cls(pred, scores, pred != normal_class)


def crop_roi(raw: ImageBuffer, roi: CropBox) -> ImageBuffer:
    raw = np.asarray(raw)
    H, W = raw.shape[0], raw.shape[1]
    roi.validate(W, H)
    rows, cols = roi.slices()
    return raw[rows, cols].copy()


def final_decision(verdicts: Sequence[SurfaceVerdict], normal_class: Optional[int] = None) -> str:
    """``"defective"`` if any surface is defective, else ``"normal"``.

    With ``normal_class`` given, defectiveness is re-derived from each
    verdict's predicted class instead of its stored flag.
    """
    if len(verdicts) == 0:
        raise ValueError("no surface verdicts to merge")
    if normal_class is None:
        flags = (v.is_defective for v in verdicts)
    else:
        flags = (v.predicted_class != normal_class for v in verdicts)
    return DEFECTIVE if any(flags) else NORMAL


def classify_surface(params: ModelParams, image: ImageBuffer, normal_class: int = 0) -> SurfaceVerdict:
    h, w, _ = params.input_shape
    if image.shape[:2] != (h, w):
        # ROI sizes vary per camera; bring them to the model's input size
        image = resize(image, ResizeSpec(w, h))
    return SurfaceVerdict.from_scores(logits(params, image[None])[0], normal_class)


def inspect_component(
    record: ComponentRecord, params: ModelParams, normal_class: int = 0
) -> Tuple[List[SurfaceVerdict], str]:
    if not record.surfaces:
        raise ValueError(f"component {record.component_id!r} has no surfaces")
    verdicts = [classify_surface(params, crop_roi(raw, roi), normal_class) for raw, roi in record.surfaces]
    return verdicts, final_decision(verdicts, normal_class)


def audit_record(component_id: str, verdicts: Sequence[SurfaceVerdict], decision: str) -> str:
    """Tab-separated: id, ``class:max_score`` per surface, decision."""
    parts = [f"{v.predicted_class}:{float(np.max(v.scores)):.6f}" for v in verdicts]
    return "\t".join([component_id, " ".join(parts), decision])
