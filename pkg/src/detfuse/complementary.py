"""Pseudo-label bookkeeping around an external per-tooth classifier.

The classifier itself never runs here.  This module derives the per-tooth
crop manifest the external cropper consumes, audits disease class balance,
plans rare-class oversampling, turns per-crop classifier verdicts back into
detections, and merges those with the integrated stream to recover findings
the diagnosis pathway missed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import DanglingCrop, MalformedFile, MissingImage
from .geometry import (
    CROP_LABELS,
    DISEASES,
    BoundingBox,
    CategoryTriple,
    Detection,
    ImageId,
    iou,
)
from .io import (
    AnnotatedDataset,
    AnnotatedImage,
    DetectionSet,
    PathLike,
    _dump_json,
    _load_json,
    _parse_bbox,
)
from .integrate import IntegratedDetection

#: Rare-class duplication factors applied when no explicit boost is given.
DEFAULT_BOOST = {"periapical-lesion": 2, "deep-caries": 2}


@dataclass(frozen=True, slots=True)
class CropAssignment:
    """One per-tooth crop region derived from an enumeration detection.

    ``crop_box`` is the padded, clamped region handed to the external
    cropper; ``source_box`` is the original unpadded enumeration box, which
    is what re-emitted detections use.
    """

    image_id: ImageId
    crop_box: BoundingBox
    tooth: tuple[int, int]
    enum_score: float
    source_box: BoundingBox

    def __post_init__(self) -> None:
        q, t = self.tooth
        if q not in (1, 2, 3, 4) or t not in range(1, 9):
            raise ValueError(f"invalid tooth axes {self.tooth!r}")


@dataclass(frozen=True, slots=True)
class CropClassification:
    crop_id: int
    label: str
    confidence: float

    def __post_init__(self) -> None:
        if self.label not in CROP_LABELS:
            raise ValueError(f"unknown crop label {self.label!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence!r}")


@dataclass
class BalancePlan:
    """Per-disease sample counts and the duplication multipliers to apply."""

    counts: dict[str, int] = field(default_factory=dict)
    multipliers: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.counts = {d: int(self.counts.get(d, 0)) for d in DISEASES}
        self.multipliers = {d: int(self.multipliers.get(d, 1)) for d in DISEASES}
        if any(m < 1 for m in self.multipliers.values()):
            raise ValueError("multipliers must be >= 1")

    def planned(self) -> dict[str, int]:
        """Effective per-class counts after duplication."""
        return {d: self.counts[d] * self.multipliers[d] for d in DISEASES}


@dataclass(frozen=True, slots=True)
class MergeConfig:
    overlap_iou: float = 0.5
    min_confidence: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.overlap_iou <= 1.0:
            raise ValueError(f"overlap_iou must be in [0, 1], got {self.overlap_iou!r}")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError(f"min_confidence must be in [0, 1], got {self.min_confidence!r}")


def assign_crops(
    enums: DetectionSet,
    images: Optional[Sequence[AnnotatedImage]],
    pad_fraction: float = 0.0,
) -> list[CropAssignment]:
    """Derive one crop per enumeration detection.

    Each box is expanded by ``pad_fraction`` of its own width/height on
    every side, then clamped to its image.  ``images`` may be ``None`` when
    no image metadata is available, in which case no clamping (and no
    bounds checking) happens; callers should then keep ``pad_fraction`` at
    zero.  The input is expected to be score-gated already.

    Raises:
        MissingImage: an enumeration detection references an image id not
            present in ``images``.
    """
    if pad_fraction < 0:
        raise ValueError(f"pad_fraction must be >= 0, got {pad_fraction!r}")
    by_id = None if images is None else {im.image_id: im for im in images}

    crops = []
    for det in enums:
        cat = det.category
        if cat.quadrant is None or cat.enumeration is None:
            raise ValueError(
                f"enumeration detection on image {det.image_id!r} lacks quadrant/tooth axes"
            )
        box = det.box
        dx = pad_fraction * box.w
        dy = pad_fraction * box.h
        crop = BoundingBox(box.x - dx, box.y - dy, box.w + 2 * dx, box.h + 2 * dy)
        if by_id is not None:
            image = by_id.get(det.image_id)
            if image is None:
                raise MissingImage(f"enumeration detection references unknown image {det.image_id!r}")
            x0 = min(max(crop.x, 0.0), image.width)
            y0 = min(max(crop.y, 0.0), image.height)
            x1 = min(max(crop.x + crop.w, 0.0), image.width)
            y1 = min(max(crop.y + crop.h, 0.0), image.height)
            crop = BoundingBox(x0, y0, x1 - x0, y1 - y0)
        crops.append(
            CropAssignment(det.image_id, crop, (cat.quadrant, cat.enumeration), det.score, box)
        )
    return crops


def audit_balance(
    data: Union[AnnotatedDataset, Iterable[CropClassification]],
) -> BalancePlan:
    """Histogram disease labels; multipliers are left at the identity."""
    counts = {d: 0 for d in DISEASES}
    if isinstance(data, AnnotatedDataset):
        for ann in data.annotations:
            if ann.category.disease is not None:
                counts[ann.category.disease] += 1
    else:
        for cls in data:
            if cls.label != "normal":
                counts[cls.label] += 1
    return BalancePlan(counts=counts)


def oversample_plan(
    counts: Mapping[str, int],
    boost: Optional[Mapping[str, int]] = None,
) -> BalancePlan:
    """Attach duplication multipliers to a class histogram.

    The default boost doubles the two rarest classes (periapical lesions
    and deep caries) and leaves everything else untouched.
    """
    chosen = DEFAULT_BOOST if boost is None else boost
    for name, mult in chosen.items():
        if name not in DISEASES:
            raise ValueError(f"unknown disease {name!r} in boost map")
        if int(mult) < 1:
            raise ValueError(f"boost multiplier for {name!r} must be >= 1, got {mult!r}")
    multipliers = {d: int(chosen.get(d, 1)) for d in DISEASES}
    return BalancePlan(counts=dict(counts), multipliers=multipliers)


def classifications_to_detections(
    crops: Sequence[CropAssignment],
    classifications: Iterable[CropClassification],
    min_confidence: float = 0.5,
) -> DetectionSet:
    """Convert confident non-normal crop verdicts into detections.

    Each emitted detection reuses the crop's original enumeration box and
    tooth axes, labels it with the classifier's disease, and scores it as
    ``enum_score * confidence``.  At most one detection is emitted per
    crop.

    Raises:
        DanglingCrop: a classification references a crop id outside the
            manifest, or the same crop twice.
    """
    seen: set[int] = set()
    dets = []
    for cls in classifications:
        if not 0 <= cls.crop_id < len(crops):
            raise DanglingCrop(f"classification references unknown crop {cls.crop_id}")
        if cls.crop_id in seen:
            raise DanglingCrop(f"crop {cls.crop_id} classified more than once")
        seen.add(cls.crop_id)
        if cls.label == "normal" or cls.confidence < min_confidence:
            continue
        crop = crops[cls.crop_id]
        q, t = crop.tooth
        dets.append(
            Detection(
                crop.image_id,
                crop.source_box,
                crop.enum_score * cls.confidence,
                CategoryTriple(quadrant=q, enumeration=t, disease=cls.label),
                "complementary",
            )
        )
    universe = frozenset(c.image_id for c in crops)
    return DetectionSet(tuple(dets), "complementary", universe)


def merge_complementary(
    integrated: Sequence[IntegratedDetection],
    comp: DetectionSet,
    cfg: MergeConfig = MergeConfig(),
) -> list[IntegratedDetection]:
    """Append complementary detections the integrated stream missed.

    A complementary detection is suppressed only when some same-image
    integrated detection overlaps it with IoU >= ``cfg.overlap_iou`` AND
    carries the same disease label; spatial overlap with a different
    disease keeps both.  Integrated entries pass through untouched.
    """
    by_image: dict[ImageId, list[IntegratedDetection]] = {}
    for it in integrated:
        by_image.setdefault(it.image_id, []).append(it)

    merged = list(integrated)
    for det in comp:
        duplicate = any(
            it.category.disease == det.category.disease and iou(det.box, it.box) >= cfg.overlap_iou
            for it in by_image.get(det.image_id, ())
        )
        if not duplicate:
            merged.append(
                IntegratedDetection(det.image_id, det.box, det.score, det.category, None)
            )
    return merged


# ---------------------------------------------------------------------------
# file formats


def write_crop_manifest(crops: Sequence[CropAssignment], path: PathLike) -> None:
    """Write the crop manifest consumed by the external cropper/classifier."""
    records = []
    for crop_id, crop in enumerate(crops):
        records.append(
            {
                "crop_id": crop_id,
                "image_id": crop.image_id,
                "crop_bbox": crop.crop_box.as_xywh(),
                "source_bbox": crop.source_box.as_xywh(),
                "category_id_1": crop.tooth[0] - 1,
                "category_id_2": crop.tooth[1] - 1,
                "enum_score": crop.enum_score,
            }
        )
    _dump_json(records, path)


def read_crop_manifest(path: PathLike) -> list[CropAssignment]:
    data = _load_json(path)
    if not isinstance(data, list):
        raise MalformedFile(f"{path}: crop manifest must be a JSON array")
    crops = []
    for i, rec in enumerate(data):
        where = f"{path} [{i}]"
        if not isinstance(rec, dict):
            raise MalformedFile(f"{where}: crop record must be an object")
        if rec.get("crop_id") != i:
            raise MalformedFile(f"{where}: crop ids must be dense and ordered")
        crop_box = _parse_bbox({"bbox": rec.get("crop_bbox")}, where)
        source_box = _parse_bbox({"bbox": rec.get("source_bbox")}, where)
        q = rec.get("category_id_1")
        t = rec.get("category_id_2")
        if q not in (0, 1, 2, 3) or t not in range(8):
            raise MalformedFile(f"{where}: invalid tooth axes {q!r}/{t!r}")
        score = rec.get("enum_score")
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0 <= score <= 1:
            raise MalformedFile(f"{where}: enum_score must be in [0, 1], got {score!r}")
        crops.append(
            CropAssignment(rec.get("image_id"), crop_box, (q + 1, t + 1), float(score), source_box)
        )
    return crops


def parse_crop_classifications(path: PathLike) -> list[CropClassification]:
    """Parse the external classifier's output: ``{crop_id, label, confidence}``."""
    data = _load_json(path)
    if not isinstance(data, list):
        raise MalformedFile(f"{path}: classifications must be a JSON array")
    out = []
    for i, rec in enumerate(data):
        where = f"{path} [{i}]"
        if not isinstance(rec, dict):
            raise MalformedFile(f"{where}: classification record must be an object")
        crop_id = rec.get("crop_id")
        if not isinstance(crop_id, int) or isinstance(crop_id, bool) or crop_id < 0:
            raise MalformedFile(f"{where}: crop_id must be a non-negative integer")
        label = rec.get("label")
        if label not in CROP_LABELS:
            raise MalformedFile(f"{where}: unknown label {label!r}")
        conf = rec.get("confidence")
        if (
            isinstance(conf, bool)
            or not isinstance(conf, (int, float))
            or not math.isfinite(conf)
            or not 0 <= conf <= 1
        ):
            raise MalformedFile(f"{where}: confidence must be a number in [0, 1], got {conf!r}")
        out.append(CropClassification(crop_id, label, float(conf)))
    return out


def write_crop_classifications(items: Sequence[CropClassification], path: PathLike) -> None:
    _dump_json(
        [{"crop_id": c.crop_id, "label": c.label, "confidence": c.confidence} for c in items],
        path,
    )
