"""Dataset and detection file ingestion, serialization and splitting.

Two file families are understood, both UTF-8 JSON:

* Ground truth: a COCO-style object with ``images`` and ``annotations``
  lists.  Annotation categories come either as the triple
  ``category_id_1`` (quadrant, 0..3), ``category_id_2`` (tooth, 0..7),
  ``category_id_3`` (disease, 0..3), or as a single ``category_id`` in
  0..31 encoding ``quadrant * 8 + tooth``.  All ids are 0-based on disk
  and normalized to 1-based quadrant/enumeration plus a named disease
  internally.  ``segmentation`` payloads are carried opaquely and never
  interpreted.
* Detections: a COCO results array of ``{image_id, bbox, score, ...}``
  records with the same category fields.  A bare ``category_id`` is
  decoded according to the stream's source tag: the enumeration model
  uses the 32-class product, diagnosis streams use the 4 disease
  classes.

Unknown extra keys are ignored on read; writers emit a canonical subset
of keys so that parse -> write round-trips are stable.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import (
    CountMismatch,
    DanglingReference,
    InvalidCategory,
    InvalidScore,
    MalformedFile,
)
from .geometry import DISEASES, SOURCES, BoundingBox, CategoryTriple, Detection, ImageId

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FULL_TRIPLE = "full-triple"
ENUMERATION_ONLY = "enumeration-only"


@dataclass(frozen=True, slots=True)
class AnnotatedImage:
    image_id: ImageId
    width: float
    height: float
    file_name: str = ""

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image extent must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True, slots=True)
class GroundTruthAnnotation:
    image_id: ImageId
    box: BoundingBox
    category: CategoryTriple
    mask_payload: object = None


@dataclass
class AnnotatedDataset:
    """Images plus their ground-truth annotations.

    ``label_schema`` records which category axes the labeling uses:
    :data:`FULL_TRIPLE` when any annotation carries a disease,
    :data:`ENUMERATION_ONLY` otherwise. It is derived when omitted.
    """

    images: tuple[AnnotatedImage, ...]
    annotations: tuple[GroundTruthAnnotation, ...]
    label_schema: Optional[str] = None

    def __post_init__(self) -> None:
        self.images = tuple(self.images)
        self.annotations = tuple(self.annotations)
        ids = [im.image_id for im in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in dataset")
        known = set(ids)
        for ann in self.annotations:
            if ann.image_id not in known:
                raise DanglingReference(f"annotation references unknown image {ann.image_id!r}")
        if self.label_schema is None:
            diseased = any(ann.category.disease is not None for ann in self.annotations)
            self.label_schema = FULL_TRIPLE if diseased else ENUMERATION_ONLY
        if self.label_schema not in (FULL_TRIPLE, ENUMERATION_ONLY):
            raise ValueError(f"unknown label schema {self.label_schema!r}")

    def image_ids(self) -> list[ImageId]:
        return [im.image_id for im in self.images]

    def images_by_id(self) -> dict[ImageId, AnnotatedImage]:
        return {im.image_id: im for im in self.images}

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class DetectionSet:
    """A tagged collection of detections covering a set of images."""

    detections: tuple[Detection, ...]
    source: str
    image_universe: frozenset = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        self.detections = tuple(self.detections)
        if self.source not in SOURCES:
            raise ValueError(f"unknown source tag {self.source!r}")
        if not self.image_universe:
            self.image_universe = frozenset(d.image_id for d in self.detections)
        else:
            self.image_universe = frozenset(self.image_universe)
            for d in self.detections:
                if d.image_id not in self.image_universe:
                    raise DanglingReference(
                        f"detection references image {d.image_id!r} outside the universe"
                    )

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self) -> Iterator[Detection]:
        return iter(self.detections)


@dataclass(frozen=True, slots=True)
class SplitSpec:
    """Deterministic train/val/test partition sizes plus the shuffle seed."""

    train_count: int
    val_count: int
    test_count: int
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.train_count, self.val_count, self.test_count) < 0:
            raise ValueError("split counts must be non-negative")

    @property
    def total(self) -> int:
        return self.train_count + self.val_count + self.test_count


# ---------------------------------------------------------------------------
# parsing helpers


def _load_json(path: PathLike):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise MalformedFile(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path} is not valid JSON: {exc}") from exc


def _dump_json(obj, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _require_int(rec: dict, key: str, where: str) -> int:
    v = rec.get(key)
    if not isinstance(v, int) or isinstance(v, bool):
        raise MalformedFile(f"{where}: field {key!r} must be an integer, got {v!r}")
    return v


def _parse_bbox(rec: dict, where: str) -> BoundingBox:
    raw = rec.get("bbox")
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise MalformedFile(f"{where}: bbox must be a 4-element [x, y, w, h] list, got {raw!r}")
    vals = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise MalformedFile(f"{where}: bbox values must be finite numbers, got {raw!r}")
        vals.append(float(v))
    x, y, w, h = vals
    if w <= 0 or h <= 0:
        raise MalformedFile(f"{where}: bbox must have positive width and height, got {raw!r}")
    return BoundingBox(x, y, w, h)


def _ranged_id(rec: dict, key: str, upper: int, where: str) -> Optional[int]:
    """Read an optional 0-based id field, enforcing 0 <= id < upper."""
    if key not in rec:
        return None
    v = rec[key]
    if not isinstance(v, int) or isinstance(v, bool):
        raise InvalidCategory(f"{where}: {key!r} must be an integer, got {v!r}")
    if not 0 <= v < upper:
        raise InvalidCategory(f"{where}: {key!r} out of range 0..{upper - 1}, got {v}")
    return v


def _decode_product_id(cid: int, where: str) -> CategoryTriple:
    if not 0 <= cid < 32:
        raise InvalidCategory(f"{where}: category_id out of range 0..31, got {cid}")
    return CategoryTriple(quadrant=cid // 8 + 1, enumeration=cid % 8 + 1)


def _decode_category(rec: dict, where: str, *, bare_id_mode: Optional[str]) -> CategoryTriple:
    """Normalize on-disk category fields to a :class:`CategoryTriple`.

    ``bare_id_mode`` selects how a single ``category_id`` is decoded:
    ``"product"`` (32-class quadrant x tooth) or ``"disease"`` (4-class).
    ``None`` forbids the bare form.
    """
    has_triple = any(k in rec for k in ("category_id_1", "category_id_2", "category_id_3"))
    if has_triple:
        q = _ranged_id(rec, "category_id_1", 4, where)
        t = _ranged_id(rec, "category_id_2", 8, where)
        d = _ranged_id(rec, "category_id_3", 4, where)
        return CategoryTriple(
            quadrant=None if q is None else q + 1,
            enumeration=None if t is None else t + 1,
            disease=None if d is None else DISEASES[d],
        )
    if "category_id" in rec:
        cid = _require_int(rec, "category_id", where)
        if bare_id_mode == "product":
            return _decode_product_id(cid, where)
        if bare_id_mode == "disease":
            if not 0 <= cid < 4:
                raise InvalidCategory(f"{where}: disease category_id out of range 0..3, got {cid}")
            return CategoryTriple(disease=DISEASES[cid])
        raise MalformedFile(
            f"{where}: bare category_id is ambiguous for this stream; "
            "use category_id_1/2/3"
        )
    raise MalformedFile(f"{where}: record has no category fields")


def _clamp_box(box: BoundingBox, image: AnnotatedImage, where: str) -> BoundingBox:
    inside = (
        box.x >= 0 and box.y >= 0
        and box.x + box.w <= image.width and box.y + box.h <= image.height
    )
    if inside:
        return box
    x0 = min(max(box.x, 0.0), image.width)
    y0 = min(max(box.y, 0.0), image.height)
    x1 = min(max(box.x + box.w, 0.0), image.width)
    y1 = min(max(box.y + box.h, 0.0), image.height)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise MalformedFile(f"{where}: box {box.as_xywh()} lies entirely outside the image")
    clamped = BoundingBox(x0, y0, x1 - x0, y1 - y0)
    logger.warning(
        "%s: box %s exceeds %sx%s image bounds, clamped to %s",
        where, box.as_xywh(), image.width, image.height, clamped.as_xywh(),
    )
    return clamped


# ---------------------------------------------------------------------------
# ground truth


def parse_ground_truth(path: PathLike) -> AnnotatedDataset:
    """Parse a COCO/DENTEX-style ground-truth file.

    Raises:
        MalformedFile: bad JSON, missing keys, or degenerate boxes.
        DanglingReference: annotation pointing at a missing image.
        InvalidCategory: category ids outside their documented ranges.
    """
    data = _load_json(path)
    if not isinstance(data, dict):
        raise MalformedFile(f"{path}: ground truth must be a JSON object")
    for key in ("images", "annotations"):
        if key not in data or not isinstance(data[key], list):
            raise MalformedFile(f"{path}: missing or non-list {key!r} section")

    images = []
    for i, rec in enumerate(data["images"]):
        where = f"{path} images[{i}]"
        if not isinstance(rec, dict):
            raise MalformedFile(f"{where}: image record must be an object")
        if "id" not in rec:
            raise MalformedFile(f"{where}: image record lacks an id")
        width = rec.get("width")
        height = rec.get("height")
        for name, v in (("width", width), ("height", height)):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0:
                raise MalformedFile(f"{where}: {name} must be a positive number, got {v!r}")
        images.append(
            AnnotatedImage(rec["id"], float(width), float(height), rec.get("file_name", ""))
        )
    by_id = {im.image_id: im for im in images}
    if len(by_id) != len(images):
        raise MalformedFile(f"{path}: duplicate image ids")

    annotations = []
    saw_disease = False
    for i, rec in enumerate(data["annotations"]):
        where = f"{path} annotations[{i}]"
        if not isinstance(rec, dict):
            raise MalformedFile(f"{where}: annotation record must be an object")
        image_id = rec.get("image_id")
        if image_id not in by_id:
            raise DanglingReference(f"{where}: unknown image_id {image_id!r}")
        box = _clamp_box(_parse_bbox(rec, where), by_id[image_id], where)
        category = _decode_category(rec, where, bare_id_mode="product")
        saw_disease = saw_disease or category.disease is not None
        annotations.append(
            GroundTruthAnnotation(image_id, box, category, rec.get("segmentation"))
        )

    schema = FULL_TRIPLE if saw_disease else ENUMERATION_ONLY
    return AnnotatedDataset(tuple(images), tuple(annotations), schema)


def write_ground_truth(ds: AnnotatedDataset, path: PathLike) -> None:
    """Serialize a dataset back to the canonical COCO-style layout."""
    images = [
        {"id": im.image_id, "width": im.width, "height": im.height, "file_name": im.file_name}
        for im in ds.images
    ]
    annotations = []
    for i, ann in enumerate(ds.annotations):
        rec: dict = {"id": i, "image_id": ann.image_id, "bbox": ann.box.as_xywh()}
        rec.update(_encode_category(ann.category))
        if ann.mask_payload is not None:
            rec["segmentation"] = ann.mask_payload
        annotations.append(rec)
    _dump_json({"images": images, "annotations": annotations}, path)


# ---------------------------------------------------------------------------
# detections


def parse_detections(
    path: PathLike,
    source: str,
    image_universe: Optional[Iterable[ImageId]] = None,
) -> DetectionSet:
    """Parse a COCO results array into a :class:`DetectionSet`.

    ``image_universe`` widens the covered id set beyond the images that
    actually carry records (e.g. to the full test split); records outside
    a supplied universe are an error.
    """
    if source not in SOURCES:
        raise ValueError(f"unknown source tag {source!r}")
    data = _load_json(path)
    if not isinstance(data, list):
        raise MalformedFile(f"{path}: detections must be a JSON array")

    bare_mode = None
    if source == "enumeration-model":
        bare_mode = "product"
    elif source in ("diagnosis-A", "diagnosis-B"):
        bare_mode = "disease"

    detections = []
    for i, rec in enumerate(data):
        where = f"{path} [{i}]"
        if not isinstance(rec, dict):
            raise MalformedFile(f"{where}: detection record must be an object")
        if "image_id" not in rec:
            raise MalformedFile(f"{where}: record lacks image_id")
        box = _parse_bbox(rec, where)
        score = rec.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise MalformedFile(f"{where}: score must be a number, got {score!r}")
        if not (math.isfinite(score) and 0.0 <= score <= 1.0):
            raise InvalidScore(f"{where}: score {score!r} outside [0, 1]")
        category = _decode_category(rec, where, bare_id_mode=bare_mode)
        detections.append(Detection(rec["image_id"], box, float(score), category, source))

    universe = frozenset(image_universe) if image_universe is not None else frozenset()
    return DetectionSet(tuple(detections), source, universe)


def _encode_category(cat: CategoryTriple) -> dict:
    rec: dict = {}
    if cat.quadrant is not None:
        rec["category_id_1"] = cat.quadrant - 1
    if cat.enumeration is not None:
        rec["category_id_2"] = cat.enumeration - 1
    if cat.disease is not None:
        rec["category_id_3"] = DISEASES.index(cat.disease)
    return rec


def detections_to_records(dets: Iterable[Detection]) -> list[dict]:
    records = []
    for d in dets:
        rec: dict = {"image_id": d.image_id, "bbox": d.box.as_xywh(), "score": d.score}
        rec.update(_encode_category(d.category))
        records.append(rec)
    return records


def write_detections(dets: Union[DetectionSet, Sequence[Detection]], path: PathLike) -> None:
    """Write detections as a COCO results array with explicit triple fields."""
    _dump_json(detections_to_records(dets), path)


# ---------------------------------------------------------------------------
# splitting


def split_ids(ids: Sequence[ImageId], spec: SplitSpec) -> tuple[list, list, list]:
    """Shuffle ``ids`` with a seeded PRNG and slice into train/val/test."""
    if spec.total != len(ids):
        raise CountMismatch(
            f"split counts sum to {spec.total} but there are {len(ids)} ids"
        )
    perm = np.random.default_rng(spec.seed).permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    train = shuffled[: spec.train_count]
    val = shuffled[spec.train_count : spec.train_count + spec.val_count]
    test = shuffled[spec.train_count + spec.val_count :]
    return train, val, test


def subset_dataset(ds: AnnotatedDataset, ids: Sequence[ImageId]) -> AnnotatedDataset:
    """Restrict a dataset to ``ids``, keeping images in the given order."""
    by_id = ds.images_by_id()
    images = tuple(by_id[i] for i in ids)
    wanted = set(ids)
    annotations = tuple(a for a in ds.annotations if a.image_id in wanted)
    return AnnotatedDataset(images, annotations, ds.label_schema)


def split_dataset(
    ds: AnnotatedDataset, spec: SplitSpec
) -> tuple[AnnotatedDataset, AnnotatedDataset, AnnotatedDataset]:
    """Deterministically partition a dataset into train/val/test.

    The image id list is shuffled with a PRNG seeded from ``spec.seed``
    and sliced; annotations follow their images.  The three outputs are
    pairwise disjoint and jointly cover the input.
    """
    train_ids, val_ids, test_ids = split_ids(ds.image_ids(), spec)
    return (
        subset_dataset(ds, train_ids),
        subset_dataset(ds, val_ids),
        subset_dataset(ds, test_ids),
    )


def write_id_list(ids: Sequence[ImageId], path: PathLike) -> None:
    _dump_json(list(ids), path)


def read_id_list(path: PathLike) -> list:
    data = _load_json(path)
    if not isinstance(data, list):
        raise MalformedFile(f"{path}: id list must be a JSON array")
    return data
