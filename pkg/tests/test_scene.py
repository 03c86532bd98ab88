from __future__ import annotations

import numpy as np
import pytest

from group3d.errors import LoadError, ParseError, ValidationError
from group3d.geometry import write_depth
from group3d.harness import NoiseSpec, generate_scene, random_scene_spec, write_scene
from group3d.scene import load_ground_truth, load_scene, sample_frame_indices


@pytest.fixture
def scene_dir(tmp_path):
    scene = generate_scene(random_scene_spec(11, n_objects=3, n_cameras=8), NoiseSpec(jitter=0.2))
    return scene, write_scene(scene, tmp_path / "scene")


def test_round_trip(scene_dir):
    scene, root = scene_dir
    b = load_scene(root, verify_hashes=True)
    assert b.frame_ids == list(range(8)) and b.manifest["objects"] == 3
    assert b.grouping_text == scene.grouping_text
    assert list(b.vocab_lines) == [fr.vocab_line for fr in scene.frames]
    for fd, fr in zip(b.frames, scene.frames):
        np.testing.assert_array_equal(fd.pose.rotation, fr.pose.rotation)
        np.testing.assert_array_equal(fd.pose.translation, fr.pose.translation)
        np.testing.assert_array_equal(fd.depth.values, fr.depth.astype("<f4"))
        assert [m.category for m in fd.masks] == [m[0] for m in fr.masks]
        for m, (_, bits, sq, sp) in zip(fd.masks, fr.masks):
            np.testing.assert_array_equal(m.bits, bits)
            assert m.s_query == pytest.approx(sq, abs=5e-7) and fd.presence[m.category] == sp
    assert [g.label for g in b.gt_boxes] == [g.label for g in scene.gt_boxes]
    np.testing.assert_array_equal(b.gt_vertices.vertices, scene.gt_vertices.vertices)
    boxes, verts = load_ground_truth(root)
    assert len(boxes) == 3 and verts is not None


def test_missing_grouping_means_none(scene_dir):
    _, root = scene_dir
    (root / "groups.txt").unlink()
    assert load_scene(root).grouping_text is None


def test_missing_file_names_it(scene_dir):
    _, root = scene_dir
    (root / "poses.txt").unlink()
    with pytest.raises(LoadError, match="poses.txt"):
        load_scene(root)
    with pytest.raises(LoadError):
        load_scene(root / "nowhere")


def test_truncated_depth(scene_dir):
    _, root = scene_dir
    p = root / "depth" / "000003.gd1"
    p.write_bytes(p.read_bytes()[:-7])
    with pytest.raises(ParseError):
        load_scene(root)


def test_resolution_mismatch(scene_dir):
    _, root = scene_dir
    write_depth(root / "depth" / "000002.gd1", np.ones((32, 32)))
    with pytest.raises(ValidationError, match="resolution"):
        load_scene(root)


def test_hash_verification(scene_dir):
    _, root = scene_dir
    with open(root / "gt_boxes.txt", "a") as fh:
        fh.write("\n")
    with pytest.raises(ValidationError, match="hash"):
        load_scene(root, verify_hashes=True)
    load_scene(root)


def test_bad_pose_line(scene_dir):
    _, root = scene_dir
    lines = (root / "poses.txt").read_text().splitlines()
    lines[1] = "frame 1 1 0 0"
    (root / "poses.txt").write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as info:
        load_scene(root)
    assert info.value.line == 2


def test_vocab_line_count_must_match(scene_dir):
    _, root = scene_dir
    (root / "vocab.txt").write_text("chair\n")
    with pytest.raises(ValidationError):
        load_scene(root)


def test_frame_budget(scene_dir):
    _, root = scene_dir
    b = load_scene(root, frame_budget=3)
    assert b.frame_ids == sample_frame_indices(8, 3) == [0, 2, 5]
    assert len(b.vocab_lines) == 3


@pytest.mark.parametrize("total,budget", [(10, 3), (128, 128), (5, 9), (1000, 128), (7, 1)])
def test_sampling_is_uniform_and_deterministic(total, budget):
    idx = sample_frame_indices(total, budget)
    assert idx == sample_frame_indices(total, budget)
    assert len(idx) == min(total, budget) and len(set(idx)) == len(idx)
    assert idx == sorted(idx) and idx[0] == 0 and idx[-1] < total


def test_sampling_budget_validation():
    with pytest.raises(ValidationError):
        sample_frame_indices(5, 0)
