from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from group3d.errors import ConfigurationError, ProviderDataError, ValidationError
from group3d.evaluation import mean_ap
from group3d.evidence import write_detections
from group3d.harness import NoiseSpec, generate_scene, random_scene_spec, to_bundle, write_scene
from group3d.pipeline import Group3DDetector, PipelineConfig, run_pipeline, run_pipeline_detailed
from group3d.scene import load_scene


def _check_perfect(instances, scene):
    assert len(instances) == scene.n_objects
    assert sorted(i.label for i in instances) == sorted(ob.label for ob in scene.spec.objects)
    gts = list(scene.gt_boxes)
    assert mean_ap(instances, gts, 0.25) == 1.0
    assert mean_ap(instances, gts, 0.5) == 1.0


def test_zero_noise_scene_is_recovered():
    scene = generate_scene(random_scene_spec(21, n_objects=4, n_cameras=24))
    _check_perfect(run_pipeline(to_bundle(scene)), scene)


def test_estimated_poses_are_aligned(tmp_path):
    scene = generate_scene(random_scene_spec(22, n_objects=3, n_cameras=24), pose_mode="estimated")
    bundle = load_scene(write_scene(scene, tmp_path / "s"))
    _check_perfect(run_pipeline(bundle, PipelineConfig(pose_mode="estimated")), scene)


def test_estimated_mode_needs_reference():
    scene = generate_scene(random_scene_spec(22, n_objects=2, n_cameras=8))
    with pytest.raises(ValidationError) as info:
        run_pipeline(to_bundle(scene), PipelineConfig(pose_mode="estimated"))
    assert info.value.stage == "alignment"


def test_empty_masks_give_no_instances():
    scene = generate_scene(random_scene_spec(23, n_objects=2, n_cameras=6))
    bundle = to_bundle(scene)
    empty = tuple(replace(f, masks=()) for f in bundle.frames)
    assert run_pipeline(replace(bundle, frames=empty)) == []


def test_errors_carry_their_stage():
    scene = generate_scene(random_scene_spec(24, n_objects=2, n_cameras=6))
    bundle = replace(to_bundle(scene), vocab_lines=("",) * 6)
    with pytest.raises(ProviderDataError) as info:
        run_pipeline(bundle)
    assert info.value.stage == "fragments"


def test_same_bundle_gives_identical_files(tmp_path):
    scene = generate_scene(random_scene_spec(25, n_objects=4, n_cameras=16), NoiseSpec(jitter=0.3, depth_sigma=0.005))
    bundle = to_bundle(scene)
    write_detections(tmp_path / "a", run_pipeline(bundle))
    write_detections(tmp_path / "b", run_pipeline(bundle, PipelineConfig(n_jobs=4)))
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_frame_budget_applies():
    scene = generate_scene(random_scene_spec(26, n_objects=2, n_cameras=16))
    res = run_pipeline_detailed(to_bundle(scene), PipelineConfig(frame_budget=4))
    assert {f.frame_id for f in res.fragments} <= {0, 4, 8, 12}


def test_grouping_modes_change_the_groups():
    scene = generate_scene(random_scene_spec(27, n_objects=3, n_cameras=8))
    bundle = to_bundle(scene)
    none = run_pipeline_detailed(bundle, PipelineConfig(grouping="none")).groups
    same = run_pipeline_detailed(bundle, PipelineConfig(grouping="same-category")).groups
    assert len(set(none.mapping.values())) == 1
    assert len(set(same.mapping.values())) == len(same.mapping)


@pytest.mark.parametrize("kw", [
    {"voxel_size": 0}, {"tau_iou": 0}, {"tau_cont": 1.5}, {"k": 0}, {"frame_budget": 0},
    {"pose_mode": "guess"}, {"grouping": "all"}, {"min_fragment_points": 0}, {"tau_support": -1},
])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        PipelineConfig(**kw)


def test_detector_estimator_api():
    scene = generate_scene(random_scene_spec(28, n_objects=3, n_cameras=16))
    bundle = to_bundle(scene)
    det = Group3DDetector(tau_support=2.0)
    assert det.get_params()["tau_support"] == 2.0
    assert set(det.get_params()) == set(PipelineConfig.__dataclass_fields__)
    out = det.fit_predict(bundle)
    assert len(det.clusters_) == len(out) == 3
    again = det.set_params(grouping="none").fit().predict(bundle)
    assert len(again) <= len(out)
    with pytest.raises(ConfigurationError):
        Group3DDetector(k=0).fit()
    assert np.all([o.score < 1 for o in out])
