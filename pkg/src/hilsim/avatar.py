"""Avatar drive: tracker fusion, two-bone arm IK, walk cycle, capsules.

The articulated walker can be driven three ways: directly from a BVH clip,
from a walk-cycle sampler while steered by UI commands, or by fusing live
head/hand tracker samples over a base pose.  Fusion applies per-joint
world-space overrides: the root is re-anchored through threshold gating,
the neck takes the headset orientation, and each tracked hand places its
wrist with the elbow resolved analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bvh import BvhClip, SkeletonPose, fk
from .geom import Transform, normalize_angle

PEDESTRIAN_LABEL = "pedestrian"


@dataclass(frozen=True)
class TrackerSample:
    time: float
    headset: Transform
    left_hand: Transform | None = None
    right_hand: Transform | None = None


@dataclass(frozen=True)
class Capsule:
    p0: np.ndarray  # (3,) m
    p1: np.ndarray  # (3,) m
    radius: float
    label: str
    actor: int | None


@dataclass(frozen=True)
class AvatarRig:
    """Bone capsules over a skeleton: (parent joint, child joint) -> radius."""

    bones: tuple[tuple[str, str, float], ...]

    def validate(self, pose: SkeletonPose) -> None:
        for parent, child, radius in self.bones:
            if radius <= 0.0:
                raise ValueError(f"bone {parent}->{child}: radius must be > 0")
            pose.index(parent)
            pose.index(child)


DEFAULT_RIG = AvatarRig(
    bones=(
        ("Hips", "Spine", 0.14),
        ("Spine", "Neck", 0.13),
        ("Neck", "Head", 0.10),
        ("Hips", "LeftUpLeg", 0.09),
        ("LeftUpLeg", "LeftLeg", 0.08),
        ("LeftLeg", "LeftFoot", 0.06),
        ("Hips", "RightUpLeg", 0.09),
        ("RightUpLeg", "RightLeg", 0.08),
        ("RightLeg", "RightFoot", 0.06),
        ("Spine", "LeftArm", 0.06),
        ("LeftArm", "LeftForeArm", 0.05),
        ("LeftForeArm", "LeftHand", 0.04),
        ("Spine", "RightArm", 0.06),
        ("RightArm", "RightForeArm", 0.05),
        ("RightForeArm", "RightHand", 0.04),
    )
)

DEFAULT_POS_THRESHOLD = 0.01  # m
DEFAULT_ROT_THRESHOLD = math.radians(1.0)


def gate_headset(prev_root: Transform, headset: Transform,
                 t_pos: float = DEFAULT_POS_THRESHOLD,
                 t_rot: float = DEFAULT_ROT_THRESHOLD) -> Transform:
    """Re-anchor the avatar root from the headset, with dead-zone gating.

    The horizontal headset translation is adopted only once it moved at
    least ``t_pos`` from the last applied root; yaw only once it turned at
    least ``t_rot``.  Sub-threshold input returns ``prev_root`` unchanged
    (bit-identical), so jitter never accumulates into drift.
    """
    if t_pos < 0.0 or t_rot < 0.0:
        raise ValueError("thresholds must be >= 0")
    dx = headset.x - prev_root.x
    dy = headset.y - prev_root.y
    move = math.hypot(dx, dy) >= t_pos
    turn = abs(normalize_angle(headset.yaw - prev_root.yaw)) >= t_rot
    if not move and not turn:
        return prev_root
    return Transform(
        x=headset.x if move else prev_root.x,
        y=headset.y if move else prev_root.y,
        z=prev_root.z,
        yaw=headset.yaw if turn else prev_root.yaw,
        pitch=prev_root.pitch,
        roll=prev_root.roll,
    )


@dataclass(frozen=True)
class ArmSolution:
    elbow_angle: float  # interior elbow angle, rad
    reachable: bool
    elbow_position: np.ndarray  # (3,)


def solve_arm_ik(shoulder, upper_len: float, fore_len: float, wrist_target,
                 pole=(0.0, 0.0, -1.0)) -> ArmSolution:
    """Analytic two-bone IK via the law of cosines.

    The target distance is clamped to the reachable annulus
    ``[|a-b|, a+b]``; ``reachable`` is False whenever clamping happened.
    The elbow lies in the plane spanned by the shoulder-target axis and the
    configured pole direction.
    """
    a = float(upper_len)
    b = float(fore_len)
    if a <= 0.0 or b <= 0.0:
        raise ValueError("limb lengths must be > 0")
    shoulder = np.asarray(shoulder, dtype=float)
    target = np.asarray(wrist_target, dtype=float)
    pole = np.asarray(pole, dtype=float)
    diff = target - shoulder
    d = float(np.linalg.norm(diff))
    lo, hi = abs(a - b), a + b
    d_clamped = min(max(d, lo), hi)
    reachable = lo <= d <= hi
    if d == 0.0:
        # Degenerate target on the shoulder: no bend plane exists.
        axis = np.array([1.0, 0.0, 0.0])
        reachable = a == b
    else:
        axis = diff / d
    cos_elbow = (a * a + b * b - d_clamped * d_clamped) / (2.0 * a * b)
    elbow_angle = math.acos(min(1.0, max(-1.0, cos_elbow)))
    bend = pole - np.dot(pole, axis) * axis
    bend_norm = float(np.linalg.norm(bend))
    if bend_norm < 1e-12:
        # Pole parallel to the arm axis: fall back to any orthogonal.
        helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        bend = helper - np.dot(helper, axis) * axis
        bend_norm = float(np.linalg.norm(bend))
    bend = bend / bend_norm
    cos_shoulder = (a * a + d_clamped * d_clamped - b * b) / (2.0 * a * d_clamped) \
        if d_clamped > 0.0 else 1.0
    cos_shoulder = min(1.0, max(-1.0, cos_shoulder))
    sin_shoulder = math.sqrt(max(0.0, 1.0 - cos_shoulder * cos_shoulder))
    elbow = shoulder + a * (cos_shoulder * axis + sin_shoulder * bend)
    return ArmSolution(elbow_angle=elbow_angle, reachable=reachable,
                       elbow_position=elbow)


@dataclass
class FusionConfig:
    """Joint names and limb geometry the tracker overrides act on."""

    root_joint: str = "Hips"
    neck_joint: str = "Neck"
    left_arm: tuple[str, str, str] = ("LeftArm", "LeftForeArm", "LeftHand")
    right_arm: tuple[str, str, str] = ("RightArm", "RightForeArm", "RightHand")
    upper_len: float = 0.28
    fore_len: float = 0.25
    pole: tuple[float, float, float] = (0.0, 0.0, -1.0)
    t_pos: float = DEFAULT_POS_THRESHOLD
    t_rot: float = DEFAULT_ROT_THRESHOLD


def compose_avatar(base_pose: SkeletonPose, tracker: TrackerSample | None,
                   config: FusionConfig | None = None) -> SkeletonPose:
    """Overlay tracker data on a base pose.

    Without a tracker sample the base pose is returned untouched.  With
    one, the root joint takes the gated headset translation/yaw, the neck
    takes the headset orientation, and each present hand transform places
    the wrist with its elbow from ``solve_arm_ik``.  Joints without a
    corresponding tracker field stay exactly at the base pose.
    """
    if tracker is None:
        return base_pose
    cfg = config or FusionConfig()
    pose = base_pose.copy()

    root_i = pose.index(cfg.root_joint)
    prev_root = Transform(
        x=float(base_pose.positions[root_i, 0]),
        y=float(base_pose.positions[root_i, 1]),
        z=float(base_pose.positions[root_i, 2]),
        yaw=_yaw_of(base_pose.rotations[root_i]),
    )
    gated = gate_headset(prev_root, tracker.headset, cfg.t_pos, cfg.t_rot)
    if gated is not prev_root:
        pose.positions[root_i, 0] = gated.x
        pose.positions[root_i, 1] = gated.y
        pose.rotations[root_i] = Transform(yaw=gated.yaw).rotation()

    neck_i = pose.index(cfg.neck_joint)
    pose.rotations[neck_i] = tracker.headset.rotation()

    for hand, names in ((tracker.left_hand, cfg.left_arm),
                        (tracker.right_hand, cfg.right_arm)):
        if hand is None:
            continue
        shoulder_name, elbow_name, wrist_name = names
        shoulder = pose.positions[pose.index(shoulder_name)]
        solution = solve_arm_ik(shoulder, cfg.upper_len, cfg.fore_len,
                                hand.position, cfg.pole)
        pose.positions[pose.index(elbow_name)] = solution.elbow_position
        wrist_i = pose.index(wrist_name)
        pose.positions[wrist_i] = hand.position
        pose.rotations[wrist_i] = hand.rotation()
    return pose


def _yaw_of(rotation: np.ndarray) -> float:
    return math.atan2(rotation[1, 0], rotation[0, 0])


def walk_cycle_pose(clip: BvhClip, distance_traveled: float, stride: float,
                    root_transform: Transform | None = None) -> SkeletonPose:
    """Sample a looping clip by distance walked: phase = distance/stride mod 1."""
    if stride <= 0.0:
        raise ValueError("stride must be > 0")
    phase = (distance_traveled / stride) % 1.0
    frame = int(math.floor(phase * clip.frame_count))
    frame = min(frame, clip.frame_count - 1)
    return fk(clip, frame, root_transform)


def avatar_capsules(pose: SkeletonPose, rig: AvatarRig,
                    actor: int | None = None) -> list[Capsule]:
    """One labeled capsule per rig bone; zero-length bones become spheres."""
    rig.validate(pose)
    capsules = []
    for parent, child, radius in rig.bones:
        p0 = pose.positions[pose.index(parent)].copy()
        p1 = pose.positions[pose.index(child)].copy()
        capsules.append(
            Capsule(p0=p0, p1=p1, radius=radius, label=PEDESTRIAN_LABEL,
                    actor=actor)
        )
    return capsules


# ---------------------------------------------------------------------------
# Tracker stream files: one sample per line,
#   time, hx, hy, hz, hyaw, hpitch, hroll[, lx, ..., lroll[, rx, ..., rroll]]
# comma separated; hands may be omitted or written as empty fields.

def parse_tracker_stream(text: str) -> list[TrackerSample]:
    samples: list[TrackerSample] = []
    last_time = -math.inf
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) not in (7, 13, 19):
            raise ValueError(
                f"tracker stream line {line_no}: expected 7, 13 or 19 fields, "
                f"got {len(fields)}"
            )
        time = float(fields[0])
        if time < last_time:
            raise ValueError(
                f"tracker stream line {line_no}: time went backwards"
            )
        last_time = time
        headset = Transform.from_list(fields[1:7])
        left = right = None
        if len(fields) >= 13 and any(fields[7:13]):
            left = Transform.from_list(fields[7:13])
        if len(fields) == 19 and any(fields[13:19]):
            right = Transform.from_list(fields[13:19])
        samples.append(TrackerSample(time=time, headset=headset,
                                     left_hand=left, right_hand=right))
    return samples


def format_tracker_stream(samples: list[TrackerSample]) -> str:
    lines = []
    for s in samples:
        parts = [repr(s.time)] + [repr(v) for v in s.headset.to_list()]
        if s.left_hand is not None or s.right_hand is not None:
            left = s.left_hand.to_list() if s.left_hand else [""] * 6
            parts += [repr(v) if v != "" else "" for v in left]
        if s.right_hand is not None:
            parts += [repr(v) for v in s.right_hand.to_list()]
        lines.append(",".join(str(p) for p in parts))
    return "\n".join(lines) + "\n"
