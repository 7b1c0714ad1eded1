import numpy as np
import pytest

from sparsepose.errors import InvalidArgumentError
from sparsepose.metrics import ErrorAccumulator, evaluate
from sparsepose.rotations import rot_x
from sparsepose.skeleton import PoseOutput

from oracles import random_pose


@pytest.fixture
def seq(rng):
    return random_pose(rng, (30,))


def shifted(pose, offset):
    return PoseOutput(pose.global_orient, pose.local_rot, pose.root_pos + offset)


def test_identical_sequences(skel, seq):
    r = evaluate(seq, seq, skel)
    assert (r.mpjre, r.mpjpe, r.mpjpe_hand, r.mpjve) == (0.0, 0.0, 0.0, 0.0)
    assert r.frames == 30


def test_root_offset_one_cm(skel, seq):
    r = evaluate(shifted(seq, [0.01, 0, 0]), seq, skel)
    assert r.mpjpe == pytest.approx(1.0, abs=1e-9)
    assert r.mpjpe_hand == pytest.approx(1.0, abs=1e-9)
    assert r.mpjre == 0.0
    assert r.mpjve == pytest.approx(0.0, abs=1e-9)


def test_single_joint_rotation_offset(skel, seq):
    pred = seq.copy()
    pred.local_rot[:, 4] = pred.local_rot[:, 4] @ rot_x(np.radians(10))
    r = evaluate(pred, seq, skel)
    assert r.mpjre == pytest.approx(10 / 22, abs=1e-9)
    assert r.per_joint_rot[5] == pytest.approx(10, abs=1e-9)


def test_pelvis_uses_global_orientation(skel, seq):
    pred = PoseOutput(seq.global_orient @ rot_x(np.radians(22)), seq.local_rot, seq.root_pos)
    r = evaluate(pred, seq, skel)
    assert r.per_joint_rot[0] == pytest.approx(22, abs=1e-9)
    assert r.mpjre == pytest.approx(1.0, abs=1e-9)


def test_velocity_error_known_value(skel, seq):
    # a drift of 1 mm per frame at 60 fps is a 6 cm/s velocity error on every joint
    drift = np.arange(30)[:, None] * np.array([0.001, 0, 0])
    r = evaluate(shifted(seq, drift), seq, skel, fps=60)
    assert r.mpjve == pytest.approx(6.0, rel=1e-9)
    r = evaluate(shifted(seq, drift), seq, skel, fps=30)
    assert r.mpjve == pytest.approx(3.0, rel=1e-9)


def test_length_mismatch(skel, seq):
    with pytest.raises(InvalidArgumentError):
        evaluate(seq[:10], seq, skel)


def test_empty_accumulator(skel):
    with pytest.raises(InvalidArgumentError):
        ErrorAccumulator(skel).report()


def test_order_invariance(skel, rng):
    a_pred, a_gt = random_pose(rng, (12,)), random_pose(rng, (12,))
    b_pred, b_gt = random_pose(rng, (7,)), random_pose(rng, (7,))
    one, two = ErrorAccumulator(skel), ErrorAccumulator(skel)
    one.add(a_pred, a_gt)
    one.add(b_pred, b_gt)
    two.add(b_pred, b_gt)
    two.add(a_pred, a_gt)
    r1, r2 = one.report(), two.report()
    for k in ("mpjre", "mpjpe", "mpjpe_hand", "mpjve"):
        assert getattr(r1, k) == pytest.approx(getattr(r2, k), rel=1e-12)
    assert r1.frames == 19


def test_frame_partition_invariance_for_static_metrics(skel, rng):
    pred, gt = random_pose(rng, (20,)), random_pose(rng, (20,))
    whole = evaluate(pred, gt, skel)
    acc = ErrorAccumulator(skel)
    for sl in (slice(0, 5), slice(5, 13), slice(13, 20)):
        acc.add(pred[sl], gt[sl])
    parts = acc.report()
    assert parts.mpjre == pytest.approx(whole.mpjre, rel=1e-12)
    assert parts.mpjpe == pytest.approx(whole.mpjpe, rel=1e-12)


def test_metrics_positive_for_different_poses(skel, rng):
    r = evaluate(random_pose(rng, (5,)), random_pose(rng, (5,)), skel)
    assert min(r.mpjre, r.mpjpe, r.mpjpe_hand, r.mpjve) > 0
    assert np.all(r.per_joint_pos >= 0)


def test_report_formats(skel, seq):
    r = evaluate(shifted(seq, [0.01, 0, 0]), seq, skel)
    table = r.to_table()
    assert "MPJPE-Hand" in table
    assert sum(name in table for name in skel.names) == 22
    kv = dict(line.split("=", 1) for line in r.to_keyvalue().splitlines())
    assert float(kv["mpjpe_cm"]) == r.mpjpe
    assert "joint.left_wrist.pos_cm" in kv
