"""End-to-end orchestration: fuse, integrate, complement, evaluate.

A pipeline run is driven by a JSON config. The config is validated in
full before any stage executes, every stage writes its artifact to the
output directory as soon as it completes (partial outputs survive a
later failure), and failures are re-raised tagged with the stage name.

Stage artifacts, in order:

* ``01_fused.json`` threshold-ensembled diagnosis detections
* ``02_integrated.json`` enumeration-matched disease detections
* ``03_complementary.json`` after the crop-classifier merge (optional)
* ``04_final.json`` the final detection set
* ``metrics_<axis>.json`` one evaluation report per configured axis
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

from .complementary import (
    MergeConfig,
    assign_crops,
    classifications_to_detections,
    merge_complementary,
    parse_crop_classifications,
    write_crop_manifest,
)
from .ensemble import EnsembleConfig, threshold_ensemble
from .errors import ConfigError, DetfuseError
from .integrate import (
    KEEP_WITHOUT_ENUMERATION,
    UNMATCHED_POLICIES,
    IntegrationConfig,
    as_detection_set,
    filter_enumeration,
    integrate,
    write_integrated,
)
from .io import (
    AnnotatedDataset,
    DetectionSet,
    PathLike,
    parse_detections,
    parse_ground_truth,
    write_detections,
)
from .metrics import AXES, EvalConfig, EvaluationReport, evaluate

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class PipelineStageError(DetfuseError):
    """A stage failed; earlier artifacts are already on disk."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    ground_truth: str
    enumeration: str
    diagnosis_a: str
    out_dir: str
    diagnosis_b: Optional[str] = None
    crop_classifications: Optional[str] = None
    tau: float = 0.05
    enum_score_gate: float = 0.7
    max_match_distance: Optional[float] = None
    unmatched_policy: str = KEEP_WITHOUT_ENUMERATION
    pad_fraction: float = 0.1
    min_confidence: float = 0.5
    overlap_iou: float = 0.5
    max_dets: int = 100
    axes: tuple[str, ...] = ("disease",)
    threads: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "axes", tuple(self.axes))
        problems = []
        if not 0.0 <= self.tau <= 1.0:
            problems.append(f"tau must lie in [0, 1], got {self.tau!r}")
        if not 0.0 <= self.enum_score_gate <= 1.0:
            problems.append(f"enum_score_gate must lie in [0, 1], got {self.enum_score_gate!r}")
        if self.max_match_distance is not None and self.max_match_distance < 0:
            problems.append("max_match_distance must be >= 0 when set")
        if self.unmatched_policy not in UNMATCHED_POLICIES:
            problems.append(f"unmatched_policy must be one of {UNMATCHED_POLICIES}")
        if self.pad_fraction < 0:
            problems.append("pad_fraction must be >= 0")
        if not 0.0 <= self.min_confidence <= 1.0:
            problems.append("min_confidence must lie in [0, 1]")
        if not 0.0 <= self.overlap_iou <= 1.0:
            problems.append("overlap_iou must lie in [0, 1]")
        if self.max_dets < 1:
            problems.append("max_dets must be >= 1")
        if self.threads < 1:
            problems.append("threads must be >= 1")
        if not self.axes:
            problems.append("axes must not be empty")
        for axis in self.axes:
            if axis not in AXES:
                problems.append(f"unknown axis {axis!r}; expected one of {AXES}")
        for label, path, required in (
            ("ground_truth", self.ground_truth, True),
            ("enumeration", self.enumeration, True),
            ("diagnosis_a", self.diagnosis_a, True),
            ("diagnosis_b", self.diagnosis_b, False),
            ("crop_classifications", self.crop_classifications, False),
        ):
            if path is None:
                continue
            if required and not path:
                problems.append(f"{label} path is required")
            elif path and not os.path.isfile(path):
                problems.append(f"{label} file not found: {path}")
        if problems:
            raise ConfigError("; ".join(problems))


_CONFIG_KEYS = {
    "schema_version",
    "ground_truth",
    "enumeration",
    "diagnosis_a",
    "diagnosis_b",
    "crop_classifications",
    "out_dir",
    "tau",
    "enum_score_gate",
    "max_match_distance",
    "unmatched_policy",
    "pad_fraction",
    "min_confidence",
    "overlap_iou",
    "max_dets",
    "axes",
    "threads",
}

_PATH_KEYS = (
    "ground_truth",
    "enumeration",
    "diagnosis_a",
    "diagnosis_b",
    "crop_classifications",
    "out_dir",
)


def pipeline_config_from_dict(payload: dict, base_dir: str = ".") -> PipelineConfig:
    if not isinstance(payload, dict):
        raise ConfigError("pipeline config must be a JSON object")
    unknown = set(payload) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    kwargs = {k: v for k, v in payload.items() if k != "schema_version"}
    for key in _PATH_KEYS:
        if kwargs.get(key):
            kwargs[key] = os.path.normpath(os.path.join(base_dir, kwargs[key]))
    missing = [k for k in ("ground_truth", "enumeration", "diagnosis_a", "out_dir") if k not in kwargs]
    if missing:
        raise ConfigError(f"pipeline config is missing required keys: {missing}")
    if isinstance(kwargs.get("axes"), list):
        kwargs["axes"] = tuple(kwargs["axes"])
    return PipelineConfig(**kwargs)


def load_pipeline_config(path: PathLike) -> PipelineConfig:
    """Read and validate a pipeline config; paths resolve relative to it."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"pipeline config is not valid JSON: {exc}") from exc
    return pipeline_config_from_dict(payload, os.path.dirname(os.path.abspath(path)))


@dataclass
class PipelineResult:
    config: PipelineConfig
    fused: DetectionSet
    integrated: list
    final: DetectionSet
    reports: dict[str, EvaluationReport] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)


def _drop_diseaseless(dets: DetectionSet, label: str) -> DetectionSet:
    kept = [d for d in dets if d.category.disease is not None]
    dropped = len(dets) - len(kept)
    if dropped:
        logger.warning("%s: dropped %d detections without a disease label", label, dropped)
        return DetectionSet(kept, dets.source, dets.image_universe)
    return dets


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Execute every configured stage and return the collected outputs."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    artifacts: list[str] = []

    def _out(name: str) -> str:
        path = os.path.join(cfg.out_dir, name)
        artifacts.append(path)
        return path

    stage = "load"
    try:
        dataset = parse_ground_truth(cfg.ground_truth)
        universe = frozenset(dataset.image_ids())
        enums = parse_detections(cfg.enumeration, "enumeration-model", universe)
        diag_a = _drop_diseaseless(
            parse_detections(cfg.diagnosis_a, "diagnosis-A", universe), "diagnosis-A"
        )
        if cfg.diagnosis_b is not None:
            diag_b = _drop_diseaseless(
                parse_detections(cfg.diagnosis_b, "diagnosis-B", universe), "diagnosis-B"
            )
        else:
            diag_b = None
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc

    stage = "ensemble"
    try:
        if diag_b is None:
            logger.warning("no diagnosis-B stream configured; passing diagnosis-A through")
            fused = DetectionSet(list(diag_a), "fused", diag_a.image_universe)
        else:
            fused = threshold_ensemble(diag_a, diag_b, EnsembleConfig(tau=cfg.tau))
        write_detections(fused, _out("01_fused.json"))
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc

    stage = "integrate"
    try:
        integration_cfg = IntegrationConfig(
            enum_score_gate=cfg.enum_score_gate,
            max_match_distance=cfg.max_match_distance,
            unmatched_policy=cfg.unmatched_policy,
        )
        integrated = integrate(enums, fused, integration_cfg)
        write_integrated(integrated, _out("02_integrated.json"))
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc

    merged = integrated
    if cfg.crop_classifications is not None:
        stage = "complementary"
        try:
            gated = filter_enumeration(enums, cfg.enum_score_gate)
            crops = assign_crops(gated, dataset.images, cfg.pad_fraction)
            write_crop_manifest(crops, _out("crops_manifest.json"))
            classifications = parse_crop_classifications(cfg.crop_classifications)
            comp = classifications_to_detections(crops, classifications, cfg.min_confidence)
            merged = merge_complementary(
                integrated,
                comp,
                MergeConfig(overlap_iou=cfg.overlap_iou, min_confidence=cfg.min_confidence),
            )
            write_integrated(merged, _out("03_complementary.json"))
        except Exception as exc:
            raise PipelineStageError(stage, exc) from exc
    else:
        logger.warning("no crop classifications configured; skipping the complementary stage")

    stage = "finalize"
    try:
        final = as_detection_set(merged, "fused", universe)
        write_detections(final, _out("04_final.json"))
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc

    stage = "evaluate"
    reports: dict[str, EvaluationReport] = {}
    try:
        eval_cfg = EvalConfig(max_dets=cfg.max_dets)
        for axis in cfg.axes:
            report = evaluate(dataset, final, axis, eval_cfg, threads=cfg.threads)
            reports[axis] = report
            path = _out(f"metrics_{axis}.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(report.as_dict(), fh, indent=2)
                fh.write("\n")
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc

    return PipelineResult(cfg, fused, merged, final, reports, artifacts)
