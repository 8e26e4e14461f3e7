"""Run the whole chain from one JSON config and inspect the artifacts.

Stages: load -> threshold ensemble -> closest-center integration ->
(optional crop-classifier merge) -> finalize -> per-axis evaluation.
Every stage writes its artifact as soon as it completes, so a failure in
a late stage leaves the earlier outputs on disk for inspection.

The same run is available from the shell:

    detfuse pipeline config.json

Run:  python3 demos/05_full_pipeline.py
"""

import json
import tempfile
from pathlib import Path

from detfuse import (
    ScenePlan,
    generate_scene,
    load_pipeline_config,
    load_profile,
    run_pipeline,
    simulate_detector,
    write_detections,
    write_ground_truth,
)

workdir = Path(tempfile.mkdtemp(prefix="detfuse-demo-"))
print(f"working directory: {workdir}")

# synthesize the three input streams
ds = generate_scene(
    ScenePlan(
        num_images=30,
        missing_rate=0.1,
        disease_prior={"caries": 0.1, "deep-caries": 0.08, "impacted": 0.07, "periapical-lesion": 0.05},
        seed=42,
    )
)
write_ground_truth(ds, workdir / "gt.json")
for source, profile in (
    ("enumeration-model", "perfect"),
    ("diagnosis-A", "diffusiondet-like"),
    ("diagnosis-B", "dino-like"),
):
    dets = simulate_detector(ds, load_profile(profile), source, seed=42)
    write_detections(dets, workdir / f"{source}.json")
    print(f"  {source}: {len(dets)} detections ({profile})")

# the config carries relative paths, resolved against its own location
config = {
    "schema_version": 1,
    "ground_truth": "gt.json",
    "enumeration": "enumeration-model.json",
    "diagnosis_a": "diagnosis-A.json",
    "diagnosis_b": "diagnosis-B.json",
    "out_dir": "out",
    "tau": 0.05,
    "enum_score_gate": 0.7,
    "unmatched_policy": "keep-without-enumeration",
    "axes": ["disease", "quadrant", "agnostic"],
}
config_path = workdir / "pipeline.json"
config_path.write_text(json.dumps(config, indent=2) + "\n")

result = run_pipeline(load_pipeline_config(config_path))

print(f"\nfused:      {len(result.fused)}")
print(f"integrated: {len(result.integrated)}")
print(f"final:      {len(result.final)}")
for axis, report in result.reports.items():
    print(
        f"  axis={axis:10s} mAP={report.mean_ap:.3f} AP50={report.ap50:.3f} "
        f"AP75={report.ap75:.3f} AR={report.ar:.3f}"
    )

print("\nartifacts:")
for path in result.artifacts:
    print(f"  {path}")
