"""End-to-end pipeline orchestration and config handling."""

from __future__ import annotations

import json
import logging
import os

import pytest

from detfuse import (
    ConfigError,
    CropClassification,
    PipelineConfig,
    PipelineStageError,
    ScenePlan,
    assign_crops,
    filter_enumeration,
    generate_scene,
    load_pipeline_config,
    load_profile,
    parse_detections,
    pipeline_config_from_dict,
    run_pipeline,
    simulate_detector,
    write_crop_classifications,
    write_detections,
    write_ground_truth,
)

PRIOR = {"caries": 0.4, "impacted": 0.3}


def make_inputs(tmp_path, *, prior=PRIOR, num_images=4):
    """Write gt/enum/diag-A/diag-B files, return (dataset, path dict)."""
    ds = generate_scene(ScenePlan(num_images=num_images, disease_prior=prior, seed=21))
    enums = simulate_detector(ds, load_profile("perfect"), "enumeration-model", seed=1)
    diag_a = simulate_detector(ds, load_profile("diffusiondet-like"), "diagnosis-A", seed=1)
    diag_b = simulate_detector(ds, load_profile("dino-like"), "diagnosis-B", seed=1)
    paths = {
        "ground_truth": str(tmp_path / "gt.json"),
        "enumeration": str(tmp_path / "enum.json"),
        "diagnosis_a": str(tmp_path / "diag_a.json"),
        "diagnosis_b": str(tmp_path / "diag_b.json"),
        "out_dir": str(tmp_path / "out"),
    }
    write_ground_truth(ds, paths["ground_truth"])
    write_detections(enums, paths["enumeration"])
    write_detections(diag_a, paths["diagnosis_a"])
    write_detections(diag_b, paths["diagnosis_b"])
    return ds, paths


def oracle_verdicts(ds, paths, out_path, gate=0.7, pad=0.1):
    """Classify each crop with its ground-truth disease at confidence 0.9."""
    truth = {
        (a.image_id, a.category.quadrant, a.category.enumeration): a.category.disease
        for a in ds.annotations
    }
    enums = parse_detections(paths["enumeration"], "enumeration-model")
    crops = assign_crops(filter_enumeration(enums, gate), ds.images, pad)
    verdicts = [
        CropClassification(i, truth[(c.image_id, *c.tooth)] or "normal", 0.9)
        for i, c in enumerate(crops)
    ]
    write_crop_classifications(verdicts, out_path)
    return str(out_path)


class TestRunPipeline:
    def test_full_run_writes_all_artifacts(self, tmp_path):
        ds, paths = make_inputs(tmp_path)
        result = run_pipeline(PipelineConfig(**paths, axes=("disease", "agnostic")))
        names = [os.path.basename(p) for p in result.artifacts]
        assert names == [
            "01_fused.json",
            "02_integrated.json",
            "04_final.json",
            "metrics_disease.json",
            "metrics_agnostic.json",
        ]
        assert all(os.path.isfile(p) for p in result.artifacts)
        assert result.fused.source == "fused"
        assert result.final.source == "fused"
        assert set(result.reports) == {"disease", "agnostic"}
        payload = json.loads(open(os.path.join(paths["out_dir"], "metrics_disease.json")).read())
        assert payload["mAP"] == result.reports["disease"].mean_ap

    def test_fused_artifact_round_trips(self, tmp_path):
        ds, paths = make_inputs(tmp_path)
        result = run_pipeline(PipelineConfig(**paths))
        reread = parse_detections(os.path.join(paths["out_dir"], "01_fused.json"), "fused")
        assert len(reread) == len(result.fused)
        for a, b in zip(reread, result.fused):
            assert a.box == b.box
            assert a.score == b.score
            assert a.category == b.category

    def test_complementary_stage_adds_detections_and_lifts_map(self, tmp_path):
        ds, paths = make_inputs(tmp_path)
        base = run_pipeline(PipelineConfig(**paths))
        verdicts = oracle_verdicts(ds, paths, tmp_path / "verdicts.json")
        with_crops = run_pipeline(
            PipelineConfig(
                **{**paths, "out_dir": str(tmp_path / "out2")},
                crop_classifications=verdicts,
            )
        )
        names = [os.path.basename(p) for p in with_crops.artifacts]
        assert "crops_manifest.json" in names
        assert "03_complementary.json" in names
        assert len(with_crops.final) > len(base.final)
        assert with_crops.reports["disease"].mean_ap > base.reports["disease"].mean_ap

    def test_missing_diagnosis_b_passes_a_through(self, tmp_path, caplog):
        ds, paths = make_inputs(tmp_path)
        paths.pop("diagnosis_b")
        with caplog.at_level(logging.WARNING, logger="detfuse.pipeline"):
            result = run_pipeline(PipelineConfig(**paths))
        assert any("diagnosis-B" in r.message for r in caplog.records)
        diag_a = parse_detections(paths["diagnosis_a"], "diagnosis-A")
        assert result.fused.source == "fused"
        assert [d.box for d in result.fused] == [d.box for d in diag_a]

    def test_skipping_complementary_is_logged(self, tmp_path, caplog):
        _, paths = make_inputs(tmp_path)
        with caplog.at_level(logging.WARNING, logger="detfuse.pipeline"):
            result = run_pipeline(PipelineConfig(**paths))
        assert any("complementary" in r.message for r in caplog.records)
        assert not any("03_complementary" in p for p in result.artifacts)

    def test_diseaseless_diagnosis_records_are_dropped(self, tmp_path, caplog):
        ds, paths = make_inputs(tmp_path)
        records = json.loads(open(paths["diagnosis_a"]).read())
        records.append(
            {"image_id": 1, "bbox": [10, 10, 50, 50], "score": 0.9, "category_id_1": 0}
        )
        with open(paths["diagnosis_a"], "w") as fh:
            json.dump(records, fh)
        with caplog.at_level(logging.WARNING, logger="detfuse.pipeline"):
            result = run_pipeline(PipelineConfig(**paths))
        assert any("without a disease label" in r.message for r in caplog.records)
        assert all(d.category.disease is not None for d in result.fused)

    def test_threads_do_not_change_reports(self, tmp_path):
        _, paths = make_inputs(tmp_path)
        serial = run_pipeline(PipelineConfig(**paths, threads=1))
        parallel = run_pipeline(
            PipelineConfig(**{**paths, "out_dir": str(tmp_path / "out2")}, threads=3)
        )
        assert serial.reports == parallel.reports

    def test_malformed_enumeration_fails_in_load_stage(self, tmp_path):
        _, paths = make_inputs(tmp_path)
        with open(paths["enumeration"], "w") as fh:
            fh.write("{\"not\": \"an array\"}")
        with pytest.raises(PipelineStageError) as exc_info:
            run_pipeline(PipelineConfig(**paths))
        assert exc_info.value.stage == "load"

    def test_axis_without_labels_fails_in_evaluate_stage(self, tmp_path):
        # a fully healthy scene has no disease labels for the disease axis
        _, paths = make_inputs(tmp_path, prior={})
        with pytest.raises(PipelineStageError) as exc_info:
            run_pipeline(PipelineConfig(**paths, axes=("disease",)))
        assert exc_info.value.stage == "evaluate"


class TestPipelineConfig:
    def test_all_problems_reported_at_once(self, tmp_path):
        with pytest.raises(ConfigError) as exc_info:
            PipelineConfig(
                ground_truth=str(tmp_path / "missing.json"),
                enumeration=str(tmp_path / "missing2.json"),
                diagnosis_a=str(tmp_path / "missing3.json"),
                out_dir=str(tmp_path),
                tau=1.5,
                threads=0,
                axes=("color",),
            )
        message = str(exc_info.value)
        for fragment in ("tau", "threads", "color", "missing.json"):
            assert fragment in message

    def test_from_dict_rejects_unknown_keys(self, tmp_path):
        _, paths = make_inputs(tmp_path)
        payload = {"schema_version": 1, **paths, "taus": 0.1}
        with pytest.raises(ConfigError, match="unknown pipeline config keys"):
            pipeline_config_from_dict(payload)

    @pytest.mark.parametrize("version", [None, 0, 2, "1"])
    def test_from_dict_enforces_schema_version(self, tmp_path, version):
        _, paths = make_inputs(tmp_path)
        payload = dict(paths)
        if version is not None:
            payload["schema_version"] = version
        with pytest.raises(ConfigError, match="schema_version"):
            pipeline_config_from_dict(payload)

    def test_from_dict_requires_core_keys(self):
        with pytest.raises(ConfigError, match="missing required keys"):
            pipeline_config_from_dict({"schema_version": 1, "out_dir": "x"})

    def test_from_dict_joins_paths_to_base_dir(self, tmp_path):
        _, paths = make_inputs(tmp_path)
        payload = {
            "schema_version": 1,
            "ground_truth": "gt.json",
            "enumeration": "enum.json",
            "diagnosis_a": "diag_a.json",
            "out_dir": "out",
            "axes": ["disease"],
        }
        cfg = pipeline_config_from_dict(payload, str(tmp_path))
        assert cfg.ground_truth == str(tmp_path / "gt.json")
        assert cfg.axes == ("disease",)

    def test_load_config_resolves_relative_to_file(self, tmp_path):
        _, paths = make_inputs(tmp_path)
        cfg_dir = tmp_path / "configs"
        cfg_dir.mkdir()
        payload = {
            "schema_version": 1,
            "ground_truth": "../gt.json",
            "enumeration": "../enum.json",
            "diagnosis_a": "../diag_a.json",
            "diagnosis_b": "../diag_b.json",
            "out_dir": "../out",
        }
        cfg_path = cfg_dir / "pipeline.json"
        cfg_path.write_text(json.dumps(payload))
        cfg = load_pipeline_config(cfg_path)
        assert cfg.ground_truth == str(tmp_path / "gt.json")
        result = run_pipeline(cfg)
        assert result.reports["disease"].mean_ap > 0

    def test_load_config_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{oops")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_pipeline_config(path)
