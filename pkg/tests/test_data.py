import numpy as np
import pytest

from sparsepose.data import (
    KINDS,
    MotionClip,
    clip_from_bytes,
    clip_from_text,
    clip_to_bytes,
    clip_to_text,
    extract_trackers,
    load_clip,
    load_clips,
    load_stream,
    resample,
    rest_clip,
    save_clip,
    save_stream,
    split_dataset,
    stream_from_bytes,
    stream_to_bytes,
    synth_dataset,
    synth_motion,
)
from sparsepose.errors import FormatError, InvalidArgumentError
from sparsepose.metrics import evaluate
from sparsepose.rotations import axis_angle_to_matrix, geodesic_angle, is_rotation, matrix_to_axis_angle
from sparsepose.skeleton import PoseOutput, forward_kinematics

from oracles import random_rotations


@pytest.fixture(scope="module")
def walk():
    return synth_motion("walk-cycle", 2.0, seed=11)


def test_binary_round_trip_bit_exact(walk, tmp_path):
    assert clip_from_bytes(clip_to_bytes(walk)).equals(walk)
    save_clip(walk, tmp_path / "w.spmc")
    back = load_clip(tmp_path / "w.spmc")
    assert back.equals(walk)
    assert back.skeleton_digest == walk.skeleton_digest


def test_binary_header_layout(walk):
    buf = clip_to_bytes(walk)
    assert buf[:4] == b"SPMC"
    assert int.from_bytes(buf[4:6], "little") == 1
    assert len(buf) == 40 + len(walk) * 69 * 8


def test_text_round_trip_bit_exact(walk):
    text = clip_to_text(walk)
    assert text.startswith("# kind=clip fps=60.0 count=22 frames=120")
    assert clip_from_text(text).equals(walk)


@pytest.mark.parametrize(
    "mangle",
    [
        lambda b: b"XXXX" + b[4:],
        lambda b: b[:-8],
        lambda b: b[:10],
        lambda b: b[:4] + (2).to_bytes(2, "little") + b[6:],
    ],
)
def test_binary_rejects_corruption(walk, mangle):
    with pytest.raises(FormatError):
        clip_from_bytes(mangle(clip_to_bytes(walk)))


def test_text_rejects_bad_rows(walk):
    lines = clip_to_text(walk).splitlines()
    with pytest.raises(FormatError):
        clip_from_text("\n".join(lines[1:]))
    with pytest.raises(FormatError):
        clip_from_text("\n".join([lines[0], lines[1] + " 1.0"]))
    with pytest.raises(FormatError):
        clip_from_text("\n".join(lines[:3]))  # header claims more frames


def test_stream_file_round_trip(walk, tmp_path):
    stream = extract_trackers(walk)
    save_stream(stream, 60.0, tmp_path / "s.spmc")
    back, fps = load_stream(tmp_path / "s.spmc")
    assert fps == 60.0
    np.testing.assert_array_equal(back.pos, stream.pos)
    np.testing.assert_allclose(back.orient, stream.orient, atol=1e-12)
    with pytest.raises(FormatError):
        clip_from_bytes(stream_to_bytes(stream, 60.0))
    with pytest.raises(FormatError):
        stream_from_bytes(clip_to_bytes(walk))


def test_load_clips_sorted(tmp_path):
    clips = synth_dataset(3, 0.5, seed=1)
    for name, c in zip(("b", "a", "c"), clips):
        save_clip(c, tmp_path / f"{name}.spmc")
    (tmp_path / "notes.txt").write_text("ignored")
    loaded = load_clips(tmp_path)
    assert [c.equals(o) for c, o in zip(loaded, (clips[1], clips[0], clips[2]))] == [True] * 3


def test_clip_validation():
    with pytest.raises(InvalidArgumentError):
        MotionClip(0.0, np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 21, 3)))
    with pytest.raises(InvalidArgumentError):
        MotionClip(60.0, np.zeros((2, 3)), np.zeros((3, 3)), np.zeros((2, 21, 3)))


@pytest.mark.parametrize("kind", KINDS)
def test_synth_is_deterministic_and_valid(kind):
    a = synth_motion(kind, 1.0, seed=4)
    b = synth_motion(kind, 1.0, seed=4)
    c = synth_motion(kind, 1.0, seed=5)
    assert a.equals(b)
    assert not a.equals(c)
    assert len(a) == 60
    assert np.all(np.isfinite(a.record_array()))
    assert np.all(np.linalg.norm(a.local_rot, axis=-1) <= np.pi + 1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_synth_is_smooth(kind, skel):
    clip = synth_motion(kind, 4.0, seed=9)
    pose = clip.to_pose()
    vel = np.diff(forward_kinematics(skel, pose).pos, axis=0) * clip.fps
    assert np.abs(vel).max() < 10.0  # m/s; no teleporting joints
    # ground truth against itself shifted one frame stays small
    assert evaluate(pose[1:], pose[:-1], skel).mpjve < 200.0


def test_walk_length():
    assert len(synth_motion("walk-cycle", 10.0, seed=0)) == 600


def test_head_turn_moves_only_neck_and_head(skel):
    clip = synth_motion("head-turn", 3.0, seed=2)
    pose = clip.to_pose()
    moving = {12, 15}
    for j in range(1, 22):
        still = np.array_equal(pose.local_rot[:, j - 1], np.broadcast_to(np.eye(3), (len(clip), 3, 3)))
        assert still == (j not in moving), j
    assert np.ptp(clip.root_pos, axis=0).max() == 0.0
    assert np.ptp(clip.global_orient, axis=0).max() == 0.0
    rest = PoseOutput(pose.global_orient, np.broadcast_to(np.eye(3), pose.local_rot.shape), pose.root_pos)
    limbs = [j for j in range(22) if j not in (12, 15)]
    pos_err = np.linalg.norm(forward_kinematics(skel, pose).pos - forward_kinematics(skel, rest).pos, axis=-1)
    assert pos_err[:, limbs].max() == 0.0


def test_squat_keeps_feet_planted(skel):
    clip = synth_motion("squat", 4.0, seed=3)
    feet = forward_kinematics(skel, clip.to_pose()).pos[:, [10, 11]].mean(axis=1)
    assert np.ptp(feet, axis=0).max() < 1e-9
    assert np.ptp(clip.root_pos[:, 1]) > 0.05


def test_dataset_cycles_kinds():
    clips = synth_dataset(7, 0.5, seed=0)
    assert [c.kind for c in clips] == [KINDS[i % 5] for i in range(7)]
    assert all(c.equals(o) for c, o in zip(clips, synth_dataset(7, 0.5, seed=0)))


def test_extract_trackers_rest(skel):
    clip = rest_clip(3)
    tr = extract_trackers(clip, skel)
    rest = forward_kinematics(skel, PoseOutput.rest())
    np.testing.assert_allclose(tr.pos[:, 0], np.tile(rest.pos[15], (3, 1)), atol=1e-15)
    np.testing.assert_array_equal(tr.orient[:, 0], np.broadcast_to(np.eye(3), (3, 3, 3)))


def test_extract_trackers_matches_fk(walk, skel):
    tr = extract_trackers(walk, skel)
    js = forward_kinematics(skel, walk.to_pose())
    assert np.array_equal(tr.pos, js.pos[:, [15, 20, 21]])
    assert np.array_equal(tr.orient, js.orient[:, [15, 20, 21]])


def test_extract_trackers_translation_and_leg_independence(walk, skel):
    tr = extract_trackers(walk, skel)
    moved = MotionClip(walk.fps, walk.root_pos + [1.0, 2.0, 3.0], walk.global_orient, walk.local_rot)
    np.testing.assert_allclose(extract_trackers(moved, skel).pos, tr.pos + [1.0, 2.0, 3.0], atol=1e-12)
    legs = walk.local_rot.copy()
    for j in (1, 2, 4, 5, 7, 8, 10, 11):
        legs[:, j - 1] = np.random.default_rng(j).normal(size=(len(walk), 3))
    other = extract_trackers(MotionClip(walk.fps, walk.root_pos, walk.global_orient, legs), skel)
    assert np.array_equal(other.pos, tr.pos)


def test_resample_identity(walk):
    same = resample(walk, 60.0)
    assert len(same) == len(walk)
    np.testing.assert_allclose(same.record_array(), walk.record_array(), atol=1e-9)


def test_resample_halves_frames():
    clip = synth_motion("arm-wave", 2.0, seed=1, fps=120.0)
    assert len(clip) == 240
    half = resample(clip, 60.0)
    assert len(half) == 120 and half.fps == 60.0
    np.testing.assert_array_equal(half.record_array(), clip.record_array()[::2])


def test_resample_constant_rate_rotation_is_analytic(rng):
    fps, rate = 30.0, 1.3  # rad/s about a fixed axis
    axis = np.array([1.0, 2.0, -0.5]) / np.linalg.norm([1.0, 2.0, -0.5])
    base = random_rotations(rng, (21,))
    t = np.arange(45) / fps

    def at(times):
        spin = axis_angle_to_matrix(np.outer(times * rate, axis))
        glob = matrix_to_axis_angle(spin)
        local = matrix_to_axis_angle(base[None] @ spin[:, None])
        return glob, local

    g, loc = at(t)
    clip = MotionClip(fps, np.outer(t, [0.5, 0, 0]), g, loc)
    out = resample(clip, 70.0)
    assert len(out) == round(1.5 * 70)
    tt = np.arange(len(out)) / 70.0
    inside = tt <= t[-1]
    g2, loc2 = at(tt)
    np.testing.assert_allclose(
        geodesic_angle(axis_angle_to_matrix(out.global_orient[inside]), axis_angle_to_matrix(g2[inside])), 0, atol=1e-6
    )
    np.testing.assert_allclose(
        geodesic_angle(axis_angle_to_matrix(out.local_rot[inside]), axis_angle_to_matrix(loc2[inside])), 0, atol=1e-6
    )
    np.testing.assert_allclose(out.root_pos[inside, 0], 0.5 * tt[inside], atol=1e-12)
    assert all(is_rotation(m) for m in axis_angle_to_matrix(out.local_rot[:, 0]))


def test_resample_errors(walk):
    with pytest.raises(InvalidArgumentError):
        resample(walk, 0.0)
    with pytest.raises(InvalidArgumentError):
        resample(MotionClip(60.0, np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 21, 3))), 30.0)


def test_split_dataset():
    clips = synth_dataset(20, 0.2, seed=0)
    split = split_dataset(clips, seed=3)
    assert len(split.test) == 2 and len(split.train) == 18
    ids = {id(c) for c in split.train}
    assert not ids & {id(c) for c in split.test}
    again = split_dataset(clips, seed=3)
    assert [id(c) for c in again.test] == [id(c) for c in split.test]
    assert len(split_dataset(clips, 0.25, seed=0).test) == 5
    with pytest.raises(InvalidArgumentError):
        split_dataset(clips, 1.0)
