import json

import numpy as np
import pytest

from sphereloc import io
from sphereloc.synthetic import TrajectorySpec, WorldParams, make_synthetic_world, save_world

SMALL = WorldParams(area_m=80.0, n_landmarks=12,
                    trajectory=TrajectorySpec(radius_m=25.0, frames_per_pass=12,
                                              passes=2, phases=(0.0, 0.5)))


def test_seed_determinism():
    a = make_synthetic_world(7, SMALL)
    b = make_synthetic_world(7, SMALL)
    assert len(a) == len(b) == 24
    for fa, fb in zip(a, b):
        assert fa.points.tobytes() == fb.points.tobytes()
        assert np.array_equal(fa.translation, fb.translation)
    c = make_synthetic_world(8, SMALL)
    assert not np.array_equal(a[0].points, c[0].points)


def test_frames_carry_valid_poses_and_pass_labels():
    frames = make_synthetic_world(3, SMALL)
    for f in frames:
        f.validate()
    assert {f.trajectory_id for f in frames} == {0, 1}
    ids = [f.frame_id for f in frames]
    assert ids == list(range(len(frames)))


def test_reversed_revisit_is_rotated_sensor_frame():
    """A revisit with flipped heading sees the same world points in a rotated
    sensor frame (same crop, same generation order)."""
    params = WorldParams(area_m=80.0, n_landmarks=12,
                         trajectory=TrajectorySpec(radius_m=25.0, frames_per_pass=10,
                                                   passes=2, phases=(0.0, 0.0),
                                                   reverse=(False, True)))
    frames = make_synthetic_world(11, params)
    n = params.trajectory.frames_per_pass
    first = frames[0]
    # reversed pass visits position of pass-1 frame i at its own step n-1-i
    partner = frames[n + (n - 1 - 0)]
    assert np.allclose(first.translation, partner.translation, atol=1e-9)
    rel = first.rotation.T @ partner.rotation
    assert np.allclose(rel, np.diag([-1.0, -1.0, 1.0]), atol=1e-9)  # 180 deg yaw
    assert first.points.shape == partner.points.shape
    assert np.allclose(partner.points, first.points @ rel, atol=1e-4)


def test_parameter_clamping_warns_but_generates():
    params = WorldParams(area_m=80.0, n_landmarks=0,
                         trajectory=TrajectorySpec(radius_m=500.0, frames_per_pass=2,
                                                   passes=0))
    with pytest.warns(UserWarning):
        frames = make_synthetic_world(5, params)
    assert frames
    assert all(f.points.shape[0] > 0 for f in frames)


def test_world_serialization_roundtrip(tmp_path):
    frames = make_synthetic_world(7, SMALL)
    manifest_path = save_world(frames, tmp_path, 7, SMALL)
    manifest = json.loads(manifest_path.read_text())
    assert manifest["seed"] == 7
    assert manifest["frame_count"] == len(frames)
    assert manifest["params"]["n_landmarks"] == SMALL.n_landmarks
    back = io.load_dataset(tmp_path, format="npz")
    assert len(back) == len(frames)
    for orig, loaded in zip(frames, back):
        assert loaded.frame_id == orig.frame_id
        assert loaded.trajectory_id == orig.trajectory_id
        assert np.allclose(loaded.points, orig.points, atol=1e-6)
        assert np.allclose(loaded.pose, orig.pose, atol=1e-12)


def test_frames_have_enough_structure():
    frames = make_synthetic_world(2, SMALL)
    sizes = np.array([f.points.shape[0] for f in frames])
    assert sizes.min() > 200
