"""Tracker gating, analytic arm IK, pose fusion, capsules, walk cycle."""

import math

import numpy as np
import pytest

from hilsim.avatar import (
    AvatarRig,
    DEFAULT_RIG,
    FusionConfig,
    TrackerSample,
    avatar_capsules,
    compose_avatar,
    format_tracker_stream,
    gate_headset,
    parse_tracker_stream,
    solve_arm_ik,
    walk_cycle_pose,
)
from hilsim.bvh import fk, make_walk_clip
from hilsim.geom import Transform


# -- gate_headset ---------------------------------------------------------------


def test_gate_below_position_threshold_is_identity():
    root = Transform(1.0, 2.0, 0.0, 0.3)
    headset = Transform(1.005, 2.0, 1.7, 0.3)
    out = gate_headset(root, headset, t_pos=0.01, t_rot=math.radians(1))
    assert out is root  # bit-identical object


def test_gate_above_position_threshold_applies_exactly():
    root = Transform(0.0, 0.0, 0.0, 0.0)
    headset = Transform(0.05, 0.0, 1.7, 0.0)
    out = gate_headset(root, headset, t_pos=0.01, t_rot=math.radians(1))
    assert out.x == 0.05
    assert out.y == 0.0
    assert out.z == 0.0  # headset height never moves the root vertically


def test_gate_yaw_threshold():
    root = Transform(0.0, 0.0, 0.0, 0.0)
    small = Transform(0.0, 0.0, 0.0, math.radians(0.5))
    big = Transform(0.0, 0.0, 0.0, math.radians(2.0))
    assert gate_headset(root, small, 0.01, math.radians(1)) is root
    moved = gate_headset(root, big, 0.01, math.radians(1))
    assert moved.yaw == pytest.approx(math.radians(2.0))


def test_gate_idempotent_for_subthreshold_stream():
    root = Transform(0.0, 0.0, 0.0, 0.0)
    rng = np.random.default_rng(2)
    for _ in range(50):
        jitter = Transform(float(rng.uniform(-0.009, 0.009)) * 0.7,
                           float(rng.uniform(-0.009, 0.009)) * 0.7,
                           1.7, float(rng.uniform(-0.008, 0.008)))
        root = gate_headset(root, jitter, 0.01, math.radians(1))
    assert (root.x, root.y, root.yaw) == (0.0, 0.0, 0.0)


def test_gate_rejects_negative_thresholds():
    with pytest.raises(ValueError):
        gate_headset(Transform(), Transform(), t_pos=-1.0)


# -- solve_arm_ik ------------------------------------------------------------


def test_straight_arm_at_full_reach():
    out = solve_arm_ik((0, 0, 0), 0.3, 0.25, (0.55, 0, 0))
    assert out.elbow_angle == pytest.approx(math.pi)
    assert out.reachable


def test_right_angle_elbow():
    # a = b = 0.3, d = 0.3*sqrt(2): cos(theta) = 0 by the law of cosines.
    d = 0.3 * math.sqrt(2.0)
    out = solve_arm_ik((0, 0, 0), 0.3, 0.3, (d, 0, 0))
    assert out.elbow_angle == pytest.approx(math.pi / 2)
    assert out.reachable


def test_beyond_reach_clamps():
    out = solve_arm_ik((0, 0, 0), 0.3, 0.25, (2.0, 0, 0))
    assert out.elbow_angle == pytest.approx(math.pi)
    assert not out.reachable


def test_zero_distance_unequal_limbs_unreachable_folded():
    out = solve_arm_ik((1, 1, 1), 0.3, 0.25, (1, 1, 1))
    assert not out.reachable
    assert out.elbow_angle == pytest.approx(0.0)


def test_ik_law_of_cosines_residual_and_limb_lengths():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        a = float(rng.uniform(0.1, 0.5))
        b = float(rng.uniform(0.1, 0.5))
        shoulder = rng.uniform(-1, 1, 3)
        d = float(rng.uniform(abs(a - b) + 1e-6, a + b - 1e-6))
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        target = shoulder + d * direction
        out = solve_arm_ik(shoulder, a, b, target)
        assert out.reachable
        # law of cosines: d^2 = a^2 + b^2 - 2ab cos(theta)
        residual = (a * a + b * b
                    - 2 * a * b * math.cos(out.elbow_angle)) - d * d
        assert abs(residual) <= 1e-12 * max(1.0, d * d)
        assert np.linalg.norm(out.elbow_position - shoulder) == pytest.approx(a, abs=1e-9)
        assert np.linalg.norm(out.elbow_position - target) == pytest.approx(b, abs=1e-9)


def test_elbow_in_pole_plane():
    shoulder = np.array([0.0, 0.0, 1.4])
    target = np.array([0.4, 0.0, 1.4])
    pole = (0.0, 0.0, -1.0)
    out = solve_arm_ik(shoulder, 0.3, 0.3, target, pole)
    # Elbow must drop toward the pole (negative z relative to the axis).
    assert out.elbow_position[2] < 1.4
    assert out.elbow_position[1] == pytest.approx(0.0, abs=1e-12)


# -- compose_avatar -----------------------------------------------------------


def _base_pose():
    clip = make_walk_clip()
    return fk(clip, 0)


def test_compose_without_tracker_is_identity():
    pose = _base_pose()
    assert compose_avatar(pose, None) is pose


def test_compose_headset_only_sets_neck_yaw():
    pose = _base_pose()
    root = pose.positions[pose.index("Hips")]
    headset = Transform(float(root[0]), float(root[1]), 1.7,
                        math.radians(30.0))
    out = compose_avatar(pose, TrackerSample(time=0.0, headset=headset))
    neck = out.index("Neck")
    yaw = math.atan2(out.rotations[neck][1, 0], out.rotations[neck][0, 0])
    assert yaw == pytest.approx(math.radians(30.0))
    for i, name in enumerate(out.joint_names):
        if name in ("Neck", "Hips"):
            continue
        assert np.array_equal(out.positions[i], pose.positions[i])
        assert np.array_equal(out.rotations[i], pose.rotations[i])


def test_compose_left_hand_full_reach_straight_elbow():
    pose = _base_pose()
    cfg = FusionConfig()
    shoulder = pose.positions[pose.index("LeftArm")]
    reach = cfg.upper_len + cfg.fore_len
    target = shoulder + np.array([reach, 0.0, 0.0])
    root = pose.positions[pose.index("Hips")]
    sample = TrackerSample(
        time=0.0,
        headset=Transform(float(root[0]), float(root[1]), 1.7, 0.0),
        left_hand=Transform(*target, 0.0, 0.0, 0.0),
    )
    out = compose_avatar(pose, sample, cfg)
    wrist = out.positions[out.index("LeftHand")]
    elbow = out.positions[out.index("LeftForeArm")]
    assert np.allclose(wrist, target)
    # straight arm: elbow collinear between shoulder and wrist
    assert np.linalg.norm(elbow - shoulder) == pytest.approx(cfg.upper_len, abs=1e-9)
    assert np.linalg.norm(elbow - target) == pytest.approx(cfg.fore_len, abs=1e-9)
    # right arm untouched
    assert np.array_equal(out.positions[out.index("RightHand")],
                          pose.positions[pose.index("RightHand")])


# -- walk_cycle_pose -----------------------------------------------------------


def test_walk_cycle_distance_zero_is_frame_zero():
    clip = make_walk_clip(frames=40)
    pose = walk_cycle_pose(clip, 0.0, stride=1.4)
    assert np.allclose(pose.positions, fk(clip, 0).positions)


def test_walk_cycle_wraps_at_stride():
    clip = make_walk_clip(frames=40)
    pose = walk_cycle_pose(clip, 1.4, stride=1.4)
    assert np.allclose(pose.positions, fk(clip, 0).positions)


def test_walk_cycle_half_stride_middle_frame():
    clip = make_walk_clip(frames=40)
    pose = walk_cycle_pose(clip, 0.7, stride=1.4)
    assert np.allclose(pose.positions, fk(clip, 20).positions)


def test_walk_cycle_periodicity_exact():
    clip = make_walk_clip(frames=40)
    rng = np.random.default_rng(1)
    for _ in range(20):
        d = float(rng.uniform(0, 10))
        a = walk_cycle_pose(clip, d, stride=1.4)
        b = walk_cycle_pose(clip, d + 1.4, stride=1.4)
        assert np.array_equal(a.positions, b.positions)


def test_walk_cycle_requires_positive_stride():
    with pytest.raises(ValueError):
        walk_cycle_pose(make_walk_clip(), 1.0, stride=0.0)


# -- capsules -------------------------------------------------------------------


def test_single_bone_capsule():
    pose = _base_pose()
    rig = AvatarRig(bones=(("Hips", "Spine", 0.1),))
    capsules = avatar_capsules(pose, rig, actor=3)
    assert len(capsules) == 1
    cap = capsules[0]
    assert np.allclose(cap.p0, pose.positions[pose.index("Hips")])
    assert np.allclose(cap.p1, pose.positions[pose.index("Spine")])
    assert cap.radius == 0.1
    assert cap.label == "pedestrian"
    assert cap.actor == 3


def test_rig_produces_one_capsule_per_bone():
    pose = _base_pose()
    capsules = avatar_capsules(pose, DEFAULT_RIG, actor=1)
    assert len(capsules) == len(DEFAULT_RIG.bones)


def test_zero_length_bone_is_sphere():
    pose = _base_pose()
    rig = AvatarRig(bones=(("Hips", "Hips", 0.1),))
    (cap,) = avatar_capsules(pose, rig)
    assert np.array_equal(cap.p0, cap.p1)
    assert cap.radius == 0.1


def test_rig_validates_radius():
    pose = _base_pose()
    rig = AvatarRig(bones=(("Hips", "Spine", 0.0),))
    with pytest.raises(ValueError, match="radius"):
        avatar_capsules(pose, rig)


# -- tracker streams -----------------------------------------------------------


def test_tracker_stream_round_trip():
    samples = [
        TrackerSample(0.0, Transform(0, 0, 1.7, 0.1)),
        TrackerSample(0.05, Transform(0.01, 0, 1.7, 0.1),
                      left_hand=Transform(0.3, 0.2, 1.2, 0, 0, 0),
                      right_hand=Transform(0.3, -0.2, 1.2, 0, 0, 0)),
    ]
    text = format_tracker_stream(samples)
    again = parse_tracker_stream(text)
    assert len(again) == 2
    assert again[0].headset == samples[0].headset
    assert again[1].left_hand == samples[1].left_hand
    assert again[1].right_hand == samples[1].right_hand


def test_tracker_stream_time_must_not_decrease():
    text = "1.0,0,0,1.7,0,0,0\n0.5,0,0,1.7,0,0,0\n"
    with pytest.raises(ValueError, match="backwards"):
        parse_tracker_stream(text)


def test_tracker_stream_bad_field_count():
    with pytest.raises(ValueError, match="fields"):
        parse_tracker_stream("1.0,0,0\n")
