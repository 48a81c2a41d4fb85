import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from animkit.synthetic import (
    CONTENT_WORDS,
    MOTION_WORDS,
    MOTIONS,
    DatasetConfig,
    DatasetManifest,
    MotionSpec,
    TrajectoryError,
    coverage_centroid,
    generate_clip,
    generate_dataset,
)


def test_static_clip_frames_identical():
    clip, _ = generate_clip(MotionSpec("circle", "blue", "stays_still", 0.0), 6, 32, seed=3)
    assert all(np.array_equal(clip.frames[0], f) for f in clip.frames)


def test_moves_right_total_displacement():
    clip, _ = generate_clip(MotionSpec("square", "red", "moves_right", 2.0), 8, 32, seed=1)
    x0, y0 = coverage_centroid(clip.frames[0], "red")
    x7, y7 = coverage_centroid(clip.frames[7], "red")
    assert abs((x7 - x0) - 14.0) < 0.5
    assert abs(y7 - y0) < 1e-9


@pytest.mark.parametrize("motion,axis,sign", [("moves_left", 0, -1), ("moves_right", 0, 1), ("moves_up", 1, -1), ("moves_down", 1, 1)])
@pytest.mark.parametrize("shape", ["square", "circle", "triangle"])
def test_per_frame_centroid_speed(motion, axis, sign, shape):
    speed = 1.7
    clip, _ = generate_clip(MotionSpec(shape, "green", motion, speed), 6, 48, seed=5)
    cents = np.array([coverage_centroid(f, "green") for f in clip.frames])
    steps = np.diff(cents[:, axis])
    assert np.all(np.abs(steps - sign * speed) <= 0.5)


def test_prompt_template():
    _, prompt = generate_clip(MotionSpec("square", "red", "moves_left", 1.0), 4, 32, seed=0)
    assert prompt == "the red square moves left"
    _, prompt = generate_clip(MotionSpec("circle", "blue", "rotates", 5.0), 4, 32, seed=0, adverb="quickly")
    assert prompt == "the blue circle rotates quickly"


def test_deterministic_given_seed():
    spec = MotionSpec("triangle", "orange", "rotates", 12.0)
    a, _ = generate_clip(spec, 5, 32, seed=9)
    b, _ = generate_clip(spec, 5, 32, seed=9)
    assert np.array_equal(a.frames, b.frames)


def test_background_differs_from_object():
    clip, _ = generate_clip(MotionSpec("circle", "yellow", "grows", 0.05), 4, 32, seed=2)
    corner = clip.frames[0, :, 0, 0]
    assert np.abs(corner - np.array([0.95, 0.9, 0.1])).max() > 0.5


def test_out_of_bounds():
    with pytest.raises(TrajectoryError, match="trajectory out of bounds"):
        generate_clip(MotionSpec("square", "red", "moves_right", 7.0), 8, 32, seed=0)
    with pytest.raises(TrajectoryError):
        generate_clip(MotionSpec("square", "red", "shrinks", 0.5), 8, 32, seed=0)


def test_spec_invariants():
    with pytest.raises(ValueError):
        MotionSpec("square", "red", "stays_still", 1.0)
    with pytest.raises(ValueError):
        MotionSpec("square", "red", "moves_up", 0.0)
    with pytest.raises(ValueError):
        MotionSpec("hexagon", "red", "moves_up", 1.0)


def test_motion_and_content_tokens_disjoint():
    assert not MOTION_WORDS & CONTENT_WORDS
    for motion in MOTIONS:
        speed = {"stays_still": 0.0, "grows": 0.05, "shrinks": 0.05}.get(motion, 1.0)
        _, prompt = generate_clip(MotionSpec("square", "purple", motion, speed), 3, 32, seed=0, adverb="slowly")
        words = prompt.split()
        assert {"purple", "square"} <= set(words)
        assert set(words[3:]) <= MOTION_WORDS


def test_dataset_count_and_manifest(tmp_path):
    manifest = generate_dataset(DatasetConfig(per_class=10, frames=4, size=32, seed=1), tmp_path)
    assert len(manifest) == 80
    loaded = DatasetManifest.load(tmp_path)
    assert len(loaded.entries) == 80 and loaded.seed == 1
    for entry in loaded.entries[:5]:
        assert (tmp_path / entry.clip / "manifest.json").is_file()
    raw = json.loads((tmp_path / "dataset_manifest.json").read_text())
    assert set(raw["entries"][0]) == {"clip", "prompt", "spec", "speed_px", "seed"}


def _tree_bytes(root: Path):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_dataset_deterministic(tmp_path):
    cfg = DatasetConfig(per_class=2, frames=3, size=16, seed=7)
    generate_dataset(cfg, tmp_path / "a")
    generate_dataset(cfg, tmp_path / "b")
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


def test_zero_speed_range_gives_static_clips(tmp_path):
    from animkit.media_io import load_clip

    manifest = generate_dataset(DatasetConfig(per_class=1, speed_range=(0, 0), frames=3, size=16), tmp_path)
    for entry in manifest.entries:
        assert entry.spec.motion == "stays_still"
        clip = load_clip(manifest.clip_path(entry))
        assert all(np.array_equal(clip.frames[0], f) for f in clip.frames)


def test_adverbs_follow_speed_terciles(tmp_path):
    manifest = generate_dataset(DatasetConfig(per_class={"moves_left": 30}, speed_range=(0.3, 2.4), frames=3, size=32), tmp_path)
    for entry in manifest.entries:
        if entry.speed_px < 1.0:
            assert entry.prompt.endswith("slowly")
        elif entry.speed_px >= 1.7:
            assert entry.prompt.endswith("quickly")
        else:
            assert entry.prompt.endswith("left")


def test_dataset_requires_a_clip_per_class(tmp_path):
    with pytest.raises(ValueError):
        generate_dataset(DatasetConfig(per_class={"grows": 0}), tmp_path)
