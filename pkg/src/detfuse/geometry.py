"""Core value types and box geometry.

Boxes follow the COCO ``[x, y, w, h]`` convention everywhere: ``(x, y)`` is
the top-left corner in image pixel coordinates and ``w``/``h`` must be
strictly positive.  All types in this module are immutable and all
operations are pure functions, so they are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

ImageId = Union[int, str]

#: Disease class names, in canonical index order (index 0..3 in data files).
DISEASES = ("caries", "deep-caries", "impacted", "periapical-lesion")

#: Crop classifier label set: the four diseases plus "normal".
CROP_LABELS = ("normal",) + DISEASES

#: Closed set of detection provenance tags.
SOURCES = ("enumeration-model", "diagnosis-A", "diagnosis-B", "complementary", "fused")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned rectangle, COCO xywh convention, sub-pixel allowed."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"box field {name!r} must be finite, got {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive extent, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_xywh(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True, slots=True)
class Point:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x!r}, {self.y!r})")


@dataclass(frozen=True, slots=True)
class CategoryTriple:
    """Label along up to three axes: quadrant, tooth enumeration, disease.

    Each axis is independently optional, but at least one must be present.
    Quadrant and enumeration are 1-based (FDI notation digits), the disease
    axis is one of :data:`DISEASES`.
    """

    quadrant: Optional[int] = None
    enumeration: Optional[int] = None
    disease: Optional[str] = None

    def __post_init__(self) -> None:
        if self.quadrant is None and self.enumeration is None and self.disease is None:
            raise ValueError("category must carry at least one axis")
        if self.quadrant is not None and self.quadrant not in (1, 2, 3, 4):
            raise ValueError(f"quadrant must be in 1..4, got {self.quadrant!r}")
        if self.enumeration is not None and self.enumeration not in range(1, 9):
            raise ValueError(f"enumeration must be in 1..8, got {self.enumeration!r}")
        if self.disease is not None and self.disease not in DISEASES:
            raise ValueError(f"unknown disease {self.disease!r}")

    @property
    def fdi(self) -> Optional[int]:
        """Two-digit FDI tooth number, when both position axes are present."""
        if self.quadrant is None or self.enumeration is None:
            return None
        return 10 * self.quadrant + self.enumeration


@dataclass(frozen=True, slots=True)
class Detection:
    """A single detector output: box, confidence and category, with provenance."""

    image_id: ImageId
    box: BoundingBox
    score: float
    category: CategoryTriple
    source: str

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score!r}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source tag {self.source!r}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when disjoint, symmetric."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def center(b: BoundingBox) -> Point:
    """Geometric center of a box."""
    return Point(b.x + b.w / 2.0, b.y + b.h / 2.0)


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance between the two box centers, in pixels."""
    ca, cb = center(a), center(b)
    return math.hypot(ca.x - cb.x, ca.y - cb.y)


def center_distance_sq(a: BoundingBox, b: BoundingBox) -> float:
    """Squared center distance.

    Monotone in :func:`center_distance` but exact for integer-valued
    coordinates, which makes tie detection in matching reproducible.
    """
    ca, cb = center(a), center(b)
    dx = ca.x - cb.x
    dy = ca.y - cb.y
    return dx * dx + dy * dy
