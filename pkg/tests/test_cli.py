"""Command-line surface: flows, outputs and exit codes."""

from __future__ import annotations

import json
import os

import pytest
from click.testing import CliRunner

from detfuse import __version__
from detfuse.cli import main

runner = CliRunner()


def invoke(*args):
    return runner.invoke(main, [str(a) for a in args])


def ok(*args):
    result = invoke(*args)
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Synthetic gt + three simulated detector files, built once via the CLI."""
    root = tmp_path_factory.mktemp("cli_corpus")
    ok(
        "synth",
        "--out-dir", root,
        "--images", 6,
        "--seed", 3,
        "--simulate", "enumeration-model=perfect",
        "--simulate", "diagnosis-A=diffusiondet-like",
        "--simulate", "diagnosis-B=dino-like",
    )
    return root


@pytest.fixture(scope="module")
def perfect_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_perfect")
    ok(
        "synth",
        "--out-dir", root,
        "--images", 4,
        "--seed", 5,
        "--simulate", "enumeration-model=perfect",
        "--simulate", "diagnosis-A=perfect",
        "--simulate", "diagnosis-B=perfect",
    )
    return root


class TestBasics:
    def test_version(self):
        result = ok("--version")
        assert __version__ in result.output

    def test_help_lists_commands(self):
        result = ok("--help")
        for cmd in ("ensemble", "integrate", "evaluate", "synth", "split", "pipeline"):
            assert cmd in result.output

    def test_unknown_option_is_usage_error(self):
        assert invoke("evaluate", "--bogus").exit_code == 2

    def test_missing_file_is_usage_error(self):
        assert invoke("balance", "/nonexistent/gt.json").exit_code == 2

    def test_domain_error_is_exit_one(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"images\": 7}")
        result = invoke("balance", bad)
        assert result.exit_code == 1
        assert "Error" in result.output


class TestSynth:
    def test_writes_expected_files(self, corpus):
        for name in ("gt.json", "enumeration-model.json", "diagnosis-A.json", "diagnosis-B.json"):
            assert os.path.isfile(corpus / name)

    def test_malformed_simulate_spec(self, tmp_path):
        assert invoke("synth", "--out-dir", tmp_path, "--simulate", "nonsense").exit_code == 2

    def test_unknown_simulate_source(self, tmp_path):
        result = invoke("synth", "--out-dir", tmp_path, "--simulate", "fused=perfect")
        assert result.exit_code == 2

    def test_malformed_prior(self, tmp_path):
        result = invoke("synth", "--out-dir", tmp_path, "--disease-prior", "caries")
        assert result.exit_code == 2

    def test_unknown_disease_in_prior_is_domain_error(self, tmp_path):
        result = invoke("synth", "--out-dir", tmp_path, "--disease-prior", "gum=0.1")
        assert result.exit_code == 1


class TestFlow:
    def test_ensemble_integrate_evaluate(self, corpus, tmp_path):
        fused = tmp_path / "fused.json"
        result = ok(
            "ensemble",
            corpus / "diagnosis-A.json",
            corpus / "diagnosis-B.json",
            "-o", fused,
            "--tau", 0.05,
        )
        assert "fused" in result.output
        assert fused.is_file()

        integrated = tmp_path / "integrated.json"
        result = ok(
            "integrate", corpus / "enumeration-model.json", fused, "-o", integrated
        )
        assert "matched" in result.output

        result = ok("evaluate", corpus / "gt.json", fused, "--axis", "disease")
        assert "axis=disease mAP=" in result.output

    def test_perfect_streams_reach_unity(self, perfect_corpus, tmp_path):
        fused = tmp_path / "fused.json"
        ok(
            "ensemble",
            perfect_corpus / "diagnosis-A.json",
            perfect_corpus / "diagnosis-B.json",
            "-o", fused,
        )
        result = ok("evaluate", perfect_corpus / "gt.json", fused, "--axis", "disease")
        assert "axis=disease mAP=1.0000 AP50=1.0000 AP75=1.0000 AR=1.0000" in result.output
        # the enumeration stream covers every tooth, so agnostic also reaches 1
        result = ok(
            "evaluate",
            perfect_corpus / "gt.json",
            perfect_corpus / "enumeration-model.json",
            "--source", "enumeration-model",
            "--axis", "agnostic",
        )
        assert "axis=agnostic mAP=1.0000" in result.output

    def test_integrate_matches_every_perfect_detection(self, perfect_corpus, tmp_path):
        fused = tmp_path / "fused.json"
        ok(
            "ensemble",
            perfect_corpus / "diagnosis-A.json",
            perfect_corpus / "diagnosis-B.json",
            "-o", fused,
        )
        out = tmp_path / "integrated.json"
        result = ok("integrate", perfect_corpus / "enumeration-model.json", fused, "-o", out)
        n = len(json.loads(fused.read_text()))
        assert f"integrated {n} detections ({n} matched)" in result.output

    def test_crops_and_complement(self, perfect_corpus, tmp_path):
        manifest = tmp_path / "crops.json"
        result = ok(
            "crops",
            perfect_corpus / "enumeration-model.json",
            "--gt", perfect_corpus / "gt.json",
            "-o", manifest,
        )
        assert "wrote" in result.output

        verdicts = tmp_path / "verdicts.json"
        records = json.loads(manifest.read_text())
        verdicts.write_text(
            json.dumps(
                [
                    {"crop_id": r["crop_id"], "label": "caries", "confidence": 0.9}
                    for r in records
                ]
            )
        )
        fused = tmp_path / "fused.json"
        ok(
            "ensemble",
            perfect_corpus / "diagnosis-A.json",
            perfect_corpus / "diagnosis-B.json",
            "-o", fused,
        )
        integrated = tmp_path / "integrated.json"
        ok("integrate", perfect_corpus / "enumeration-model.json", fused, "-o", integrated)
        merged = tmp_path / "merged.json"
        result = ok(
            "complement",
            "--crops", manifest,
            "--classifications", verdicts,
            "--integrated", integrated,
            "-o", merged,
        )
        assert "complementary detections" in result.output
        assert len(json.loads(merged.read_text())) >= len(json.loads(integrated.read_text()))

    def test_universe_mismatch_without_allow_union(self, corpus, perfect_corpus, tmp_path):
        result = invoke(
            "ensemble",
            corpus / "diagnosis-A.json",  # 6 images
            perfect_corpus / "diagnosis-B.json",  # 4 images
            "-o", tmp_path / "fused.json",
        )
        assert result.exit_code == 1
        ok(
            "ensemble",
            corpus / "diagnosis-A.json",
            perfect_corpus / "diagnosis-B.json",
            "-o", tmp_path / "fused.json",
            "--allow-union",
        )


class TestEvaluateOptions:
    def test_report_json_and_pr_csv(self, perfect_corpus, tmp_path):
        report = tmp_path / "report.json"
        pr = tmp_path / "pr.csv"
        ok(
            "evaluate",
            perfect_corpus / "gt.json",
            perfect_corpus / "diagnosis-A.json",
            "--source", "diagnosis-A",
            "--axis", "disease",
            "--report-json", report,
            "--pr-csv", pr,
        )
        payload = json.loads(report.read_text())
        assert payload["disease"]["mAP"] == 1.0
        assert pr.read_text().splitlines()[0] == "recall,precision,iou_threshold"

    def test_pr_csv_needs_single_axis(self, perfect_corpus, tmp_path):
        result = invoke(
            "evaluate",
            perfect_corpus / "gt.json",
            perfect_corpus / "diagnosis-A.json",
            "--source", "diagnosis-A",
            "--axis", "disease",
            "--axis", "agnostic",
            "--pr-csv", tmp_path / "pr.csv",
        )
        assert result.exit_code == 2

    def test_axis_choice_enforced(self, perfect_corpus):
        result = invoke(
            "evaluate",
            perfect_corpus / "gt.json",
            perfect_corpus / "diagnosis-A.json",
            "--axis", "color",
        )
        assert result.exit_code == 2

    def test_tooth_only_relabels_classes(self, perfect_corpus):
        result = ok(
            "evaluate",
            perfect_corpus / "gt.json",
            perfect_corpus / "enumeration-model.json",
            "--source", "enumeration-model",
            "--axis", "enumeration",
            "--tooth-only",
        )
        labels = [
            line.split()[0] for line in result.output.splitlines() if line.startswith("  ")
        ]
        assert labels == [str(t) for t in range(1, 9)]


class TestBalanceAndSplit:
    def test_balance_default_boost(self, corpus, tmp_path):
        plan_path = tmp_path / "plan.json"
        result = ok("balance", corpus / "gt.json", "-o", plan_path)
        assert "deep-caries" in result.output
        plan = json.loads(plan_path.read_text())
        assert plan["multipliers"]["periapical-lesion"] == 2
        assert plan["multipliers"]["deep-caries"] == 2
        assert plan["multipliers"]["caries"] == 1
        assert plan["planned"]["caries"] == plan["counts"]["caries"]

    def test_balance_audit_only(self, corpus):
        result = ok("balance", corpus / "gt.json", "--audit-only")
        assert "x1" in result.output
        assert "x2" not in result.output

    def test_balance_custom_boost(self, corpus):
        result = ok("balance", corpus / "gt.json", "--boost", "caries=3")
        assert "x3" in result.output

    def test_balance_bad_boost_spec(self, corpus):
        assert invoke("balance", corpus / "gt.json", "--boost", "caries").exit_code == 2

    def test_split_writes_id_lists(self, corpus, tmp_path):
        out = tmp_path / "splits"
        result = ok(
            "split", corpus / "gt.json",
            "--train", 4, "--val", 1, "--test", 1,
            "--out-dir", out, "--write-datasets",
        )
        assert "train: 4 images" in result.output
        ids = {
            name: json.loads((out / f"{name}_ids.json").read_text())
            for name in ("train", "val", "test")
        }
        assert sorted(len(v) for v in ids.values()) == [1, 1, 4]
        assert (out / "train.json").is_file()
        train_ds = json.loads((out / "train.json").read_text())
        assert {img["id"] for img in train_ds["images"]} == set(ids["train"])

    def test_split_count_mismatch_is_domain_error(self, corpus, tmp_path):
        result = invoke(
            "split", corpus / "gt.json",
            "--train", 4, "--val", 1, "--test", 2,
            "--out-dir", tmp_path / "splits",
        )
        assert result.exit_code == 1


class TestPipelineCommand:
    def test_config_run_matches_stepwise_ensemble(self, corpus, tmp_path):
        out_dir = tmp_path / "run"
        config = {
            "schema_version": 1,
            "ground_truth": str(corpus / "gt.json"),
            "enumeration": str(corpus / "enumeration-model.json"),
            "diagnosis_a": str(corpus / "diagnosis-A.json"),
            "diagnosis_b": str(corpus / "diagnosis-B.json"),
            "out_dir": str(out_dir),
            "axes": ["disease", "agnostic"],
        }
        cfg_path = tmp_path / "pipeline.json"
        cfg_path.write_text(json.dumps(config))
        result = ok("pipeline", cfg_path, "--threads", 2)
        assert "fused:" in result.output
        assert "axis=disease mAP=" in result.output
        assert f"artifacts in {out_dir}" in result.output

        stepwise = tmp_path / "fused.json"
        ok(
            "ensemble",
            corpus / "diagnosis-A.json",
            corpus / "diagnosis-B.json",
            "-o", stepwise,
            "--tau", 0.05,
        )
        assert stepwise.read_bytes() == (out_dir / "01_fused.json").read_bytes()

    def test_failing_stage_is_exit_one(self, corpus, tmp_path):
        config = {
            "schema_version": 1,
            "ground_truth": str(corpus / "gt.json"),
            "enumeration": str(corpus / "gt.json"),  # wrong format on purpose
            "diagnosis_a": str(corpus / "diagnosis-A.json"),
            "out_dir": str(tmp_path / "run"),
        }
        cfg_path = tmp_path / "pipeline.json"
        cfg_path.write_text(json.dumps(config))
        result = invoke("pipeline", cfg_path)
        assert result.exit_code == 1
        assert "load" in result.output
