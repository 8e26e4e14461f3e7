"""Synthetic panoramic-radiograph scenes and simulated detector outputs.

The generator lays out up to 32 teeth per image on two arches using FDI
numbering, marks a random subset as diseased, and the simulator then
produces detections with configurable recall, localisation noise, score
distributions and false-positive rate. Determinism contract: every image
is simulated from its own ``numpy.random.default_rng([seed, salt, index])``
stream, so results are independent of image processing order.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError
from .geometry import DISEASES, BoundingBox, CategoryTriple, Detection
from .io import AnnotatedDataset, AnnotatedImage, DetectionSet, GroundTruthAnnotation, PathLike

SIMULATOR_SOURCES = ("enumeration-model", "diagnosis-A", "diagnosis-B")


@dataclass(frozen=True, slots=True)
class ScenePlan:
    """Layout and labelling parameters for one synthetic dataset."""

    num_images: int = 10
    width: int = 2900
    height: int = 1300
    missing_rate: float = 0.0
    disease_prior: tuple[tuple[str, float], ...] = ()
    layout_jitter: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        prior = self.disease_prior
        if isinstance(prior, Mapping):
            unknown = sorted(set(prior) - set(DISEASES))
            if unknown:
                raise ConfigError(f"unknown disease {unknown[0]!r} in prior")
            prior = tuple((name, prior[name]) for name in DISEASES if name in prior)
        else:
            prior = tuple(prior)
        object.__setattr__(self, "disease_prior", prior)
        if self.num_images < 1:
            raise ConfigError("num_images must be >= 1")
        if self.width < 100 or self.height < 100:
            raise ConfigError("scene must be at least 100x100 pixels")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError("missing_rate must lie in [0, 1)")
        if not 0.0 <= self.layout_jitter <= 0.2:
            raise ConfigError("layout_jitter must lie in [0, 0.2]")
        total = 0.0
        for name, p in prior:
            if name not in DISEASES:
                raise ConfigError(f"unknown disease {name!r} in prior")
            if p < 0:
                raise ConfigError("disease probabilities must be >= 0")
            total += p
        if total > 1.0 + 1e-9:
            raise ConfigError("disease prior mass exceeds 1")


@dataclass(frozen=True, slots=True)
class DetectorProfile:
    """Statistical behaviour of one simulated detector."""

    name: str
    recall: float = 1.0
    fp_per_image: float = 0.0
    localization_noise: float = 0.0
    tp_score_mean: float = 1.0
    tp_score_std: float = 0.0
    fp_score_mean: float = 0.5
    fp_score_std: float = 0.0
    det_cap: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.recall <= 1.0:
            raise ConfigError("recall must lie in [0, 1]")
        if self.fp_per_image < 0:
            raise ConfigError("fp_per_image must be >= 0")
        if self.localization_noise < 0 or self.localization_noise > 0.5:
            raise ConfigError("localization_noise must lie in [0, 0.5]")
        for nm in ("tp_score_mean", "fp_score_mean"):
            if not 0.0 <= getattr(self, nm) <= 1.0:
                raise ConfigError(f"{nm} must lie in [0, 1]")
        for nm in ("tp_score_std", "fp_score_std"):
            if getattr(self, nm) < 0:
                raise ConfigError(f"{nm} must be >= 0")
        if self.det_cap is not None and self.det_cap < 1:
            raise ConfigError("det_cap must be >= 1 when set")


# FDI layout: the upper arch reads quadrant 1 tooth 8..1 then quadrant 2
# tooth 1..8 from left to right; the lower arch mirrors with quadrants 4/3.
_UPPER = [(1, t) for t in range(8, 0, -1)] + [(2, t) for t in range(1, 9)]
_LOWER = [(4, t) for t in range(8, 0, -1)] + [(3, t) for t in range(1, 9)]


def generate_scene(plan: ScenePlan) -> AnnotatedDataset:
    """Build a deterministic synthetic dataset from ``plan``.

    Healthy teeth get quadrant+tooth annotations; diseased teeth carry the
    full quadrant+tooth+disease triple.
    """
    rng = np.random.default_rng(plan.seed)
    margin = 0.05 * plan.width
    slot_w = (plan.width - 2 * margin) / 16
    tooth_w = 0.72 * slot_w
    tooth_h = 0.22 * plan.height
    rows = ((_UPPER, 0.20 * plan.height), (_LOWER, 0.55 * plan.height))

    prior = tuple(plan.disease_prior)
    images = []
    annotations = []
    for i in range(plan.num_images):
        image_id = i + 1
        images.append(
            AnnotatedImage(image_id, plan.width, plan.height, f"synthetic_{image_id:04d}.png")
        )
        for teeth, base_y in rows:
            for slot, (quadrant, tooth) in enumerate(teeth):
                if rng.random() < plan.missing_rate:
                    continue
                jx = rng.uniform(-1.0, 1.0) * plan.layout_jitter * slot_w
                jy = rng.uniform(-1.0, 1.0) * plan.layout_jitter * tooth_h
                jw = 1.0 + rng.uniform(-1.0, 1.0) * plan.layout_jitter
                jh = 1.0 + rng.uniform(-1.0, 1.0) * plan.layout_jitter
                w = tooth_w * jw
                h = tooth_h * jh
                x = margin + slot * slot_w + (slot_w - w) / 2 + jx
                y = base_y + jy
                x = min(max(x, 0.0), plan.width - w)
                y = min(max(y, 0.0), plan.height - h)
                disease = None
                u = rng.random()
                acc = 0.0
                for name, p in prior:
                    acc += p
                    if u < acc:
                        disease = name
                        break
                annotations.append(
                    GroundTruthAnnotation(
                        image_id,
                        BoundingBox(x, y, w, h),
                        CategoryTriple(quadrant=quadrant, enumeration=tooth, disease=disease),
                    )
                )
    return AnnotatedDataset(images, annotations)


def _clamped_normal(rng: np.random.Generator, mean: float, std: float) -> float:
    return min(max(float(rng.normal(mean, std)), 0.0), 1.0)


def _jitter_box(
    rng: np.random.Generator, box: BoundingBox, noise: float, width: int, height: int
) -> BoundingBox:
    dx = float(rng.normal(0.0, 1.0)) * noise * box.w
    dy = float(rng.normal(0.0, 1.0)) * noise * box.h
    sw = 1.0 + float(rng.normal(0.0, 1.0)) * noise
    sh = 1.0 + float(rng.normal(0.0, 1.0)) * noise
    w = max(box.w * sw, 1.0)
    h = max(box.h * sh, 1.0)
    w = min(w, float(width))
    h = min(h, float(height))
    x = min(max(box.x + dx, 0.0), width - w)
    y = min(max(box.y + dy, 0.0), height - h)
    return BoundingBox(x, y, w, h)


def simulate_detector(
    ds: AnnotatedDataset,
    profile: DetectorProfile,
    source: str = "diagnosis-A",
    seed: int = 0,
) -> DetectionSet:
    """Run one simulated detector over every image of ``ds``.

    ``source`` selects the task: ``enumeration-model`` emits quadrant+tooth
    detections for every tooth, the diagnosis sources emit disease-only
    detections for diseased teeth. Each image draws from an independent
    seeded stream, so per-image results never depend on batch composition.
    """
    if source not in SIMULATOR_SOURCES:
        raise ConfigError(f"source must be one of {SIMULATOR_SOURCES}, got {source!r}")
    enumeration_task = source == "enumeration-model"
    salt = zlib.crc32(f"{profile.name}|{source}".encode("utf-8"))

    by_image: dict = {img.image_id: [] for img in ds.images}
    for ann in ds.annotations:
        by_image[ann.image_id].append(ann)

    detections = []
    for index, img in enumerate(ds.images):
        rng = np.random.default_rng([seed, salt, index])
        image_dets = []
        for ann in by_image[img.image_id]:
            cat = ann.category
            if enumeration_task:
                if cat.quadrant is None or cat.enumeration is None:
                    continue
                out_cat = CategoryTriple(quadrant=cat.quadrant, enumeration=cat.enumeration)
            else:
                if cat.disease is None:
                    continue
                out_cat = CategoryTriple(disease=cat.disease)
            if rng.random() >= profile.recall:
                continue
            box = _jitter_box(rng, ann.box, profile.localization_noise, img.width, img.height)
            score = _clamped_normal(rng, profile.tp_score_mean, profile.tp_score_std)
            image_dets.append(Detection(img.image_id, box, score, out_cat, source))
        n_fp = int(rng.poisson(profile.fp_per_image))
        for _ in range(n_fp):
            w = float(rng.uniform(0.04, 0.09)) * img.width
            h = float(rng.uniform(0.15, 0.30)) * img.height
            x = float(rng.uniform(0.0, img.width - w))
            y = float(rng.uniform(0.0, img.height - h))
            if enumeration_task:
                cat = CategoryTriple(
                    quadrant=int(rng.integers(1, 5)), enumeration=int(rng.integers(1, 9))
                )
            else:
                cat = CategoryTriple(disease=DISEASES[int(rng.integers(0, len(DISEASES)))])
            score = _clamped_normal(rng, profile.fp_score_mean, profile.fp_score_std)
            image_dets.append(Detection(img.image_id, BoundingBox(x, y, w, h), score, cat, source))
        if profile.det_cap is not None and len(image_dets) > profile.det_cap:
            order = sorted(range(len(image_dets)), key=lambda k: (-image_dets[k].score, k))
            image_dets = [image_dets[k] for k in sorted(order[: profile.det_cap])]
        detections.extend(image_dets)
    return DetectionSet(detections, source, frozenset(ds.image_ids()))


# ---------------------------------------------------------------------------
# profile loading

BUILTIN_PROFILES = ("diffusiondet-like", "dino-like", "perfect")


def _profile_from_dict(payload: dict) -> DetectorProfile:
    allowed = {
        "name",
        "recall",
        "fp_per_image",
        "localization_noise",
        "tp_score_mean",
        "tp_score_std",
        "fp_score_mean",
        "fp_score_std",
        "det_cap",
    }
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"unknown profile fields: {sorted(unknown)}")
    if "name" not in payload:
        raise ConfigError("profile is missing a name")
    return DetectorProfile(**payload)


def load_profile(name_or_path: PathLike) -> DetectorProfile:
    """Load a built-in profile by name, or any profile from a JSON file."""
    text: str
    if isinstance(name_or_path, str) and name_or_path in BUILTIN_PROFILES:
        text = (
            resources.files("detfuse").joinpath(f"profiles/{name_or_path}.json").read_text("utf-8")
        )
    else:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"profile is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("profile JSON must be an object")
    return _profile_from_dict(payload)
