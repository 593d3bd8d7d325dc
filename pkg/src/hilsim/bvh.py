"""BVH motion files: parsing, writing, forward kinematics.

A clip is the skeleton hierarchy (per-joint offset and channel list) plus
the frame matrix exactly as stored in the file: positions in file units,
rotations in degrees, one row per frame.  ``unit_scale`` is the number of
file units per meter (100 for the common centimeter convention).

Forward kinematics composes, per joint,

    world = parent_world @ T(offset + position channels) @ R(channels)

with the rotation factors multiplied in the order the channels are listed
(``Zrotation Xrotation Yrotation`` means ``Rz @ Rx @ Ry``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geom import Transform, rot_x, rot_y, rot_z

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
VALID_CHANNELS = POSITION_CHANNELS + ROTATION_CHANNELS

_AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}
_ROTATION_FN = {"Xrotation": rot_x, "Yrotation": rot_y, "Zrotation": rot_z}


class BvhError(ValueError):
    """Malformed BVH document."""


@dataclass(frozen=True)
class BvhJoint:
    name: str
    parent: int | None
    offset: np.ndarray  # (3,) file units
    channels: tuple[str, ...]
    is_end_site: bool = False


@dataclass
class BvhClip:
    joints: list[BvhJoint]
    frames: np.ndarray  # (F, C)
    frame_time: float
    unit_scale: float = 100.0  # file units per meter

    def __post_init__(self):
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if len(roots) != 1:
            raise BvhError(f"clip needs exactly one root, found {len(roots)}")
        for i, joint in enumerate(self.joints):
            # Parents precede children, which also rules out cycles.
            if joint.parent is not None and not 0 <= joint.parent < i:
                raise BvhError(
                    f"joint {i} ('{joint.name}') has parent index "
                    f"{joint.parent}; parents must come first"
                )
        if self.frames.ndim != 2 or self.frames.shape[1] != self.channel_count:
            raise BvhError(
                f"frame matrix must be F x {self.channel_count}, "
                f"got {self.frames.shape}"
            )
        if self.frame_time <= 0.0:
            raise BvhError("frame_time must be > 0")

    @property
    def frame_count(self) -> int:
        return int(self.frames.shape[0])

    @property
    def channel_count(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def channel_slices(self) -> list[slice]:
        """Per-joint column ranges into the frame matrix."""
        out = []
        start = 0
        for j in self.joints:
            out.append(slice(start, start + len(j.channels)))
            start += len(j.channels)
        return out

    def sample_rate(self) -> float:
        return 1.0 / self.frame_time


@dataclass(frozen=True)
class SkeletonPose:
    """World transforms of every joint: positions in meters."""

    joint_names: tuple[str, ...]
    positions: np.ndarray  # (J, 3) m
    rotations: np.ndarray  # (J, 3, 3)

    def index(self, name: str) -> int:
        return self.joint_names.index(name)

    def copy(self) -> "SkeletonPose":
        return SkeletonPose(
            self.joint_names, self.positions.copy(), self.rotations.copy()
        )


def parse_bvh(text: str, unit_scale: float = 100.0) -> BvhClip:
    """Parse BVH text (HIERARCHY then MOTION) into a clip."""
    tokens = _Tokens(text)
    tokens.expect("HIERARCHY")
    joints: list[BvhJoint] = []
    kw = tokens.next()
    if kw != "ROOT":
        raise BvhError(f"expected ROOT, got '{kw}' (line {tokens.line})")
    _parse_joint(tokens, joints, parent=None, kind="ROOT")
    tokens.expect("MOTION")
    tokens.expect("Frames:")
    declared = int(tokens.next())
    tokens.expect("Frame")
    tokens.expect("Time:")
    frame_time = float(tokens.next())
    if frame_time <= 0.0:
        raise BvhError("Frame Time must be > 0")
    channel_count = sum(len(j.channels) for j in joints)
    rows = []
    row_no = 0
    while not tokens.at_end():
        row = tokens.take_line_floats()
        if not row:
            continue
        row_no += 1
        if len(row) != channel_count:
            raise BvhError(
                f"frame {row_no}: got {len(row)} values, expected {channel_count}"
            )
        rows.append(row)
    if len(rows) != declared:
        raise BvhError(f"declared {declared} frames but found {len(rows)}")
    frames = np.asarray(rows, dtype=float).reshape(len(rows), channel_count)
    return BvhClip(joints=joints, frames=frames, frame_time=frame_time,
                   unit_scale=unit_scale)


def _parse_joint(tokens: "_Tokens", joints: list[BvhJoint], parent: int | None,
                 kind: str) -> None:
    if kind == "End":
        tokens.expect("Site")
        name = joints[parent].name + "_end"
    else:
        name = tokens.next()
    tokens.expect("{")
    tokens.expect("OFFSET")
    offset = np.array([float(tokens.next()) for _ in range(3)])
    channels: tuple[str, ...] = ()
    if kind != "End":
        tokens.expect("CHANNELS")
        n = int(tokens.next())
        ch = tuple(tokens.next() for _ in range(n))
        for c in ch:
            if c not in VALID_CHANNELS:
                raise BvhError(f"unknown channel '{c}' (line {tokens.line})")
        channels = ch
    index = len(joints)
    joints.append(
        BvhJoint(name=name, parent=parent, offset=offset, channels=channels,
                 is_end_site=(kind == "End"))
    )
    while True:
        kw = tokens.next()
        if kw == "}":
            return
        if kw in ("JOINT", "End"):
            _parse_joint(tokens, joints, parent=index, kind=kw)
        else:
            raise BvhError(f"unknown keyword '{kw}' (line {tokens.line})")


class _Tokens:
    def __init__(self, text: str):
        self._lines = text.splitlines()
        self._row = 0
        self._col_tokens: list[str] = []

    @property
    def line(self) -> int:
        return self._row

    def _fill(self) -> None:
        while not self._col_tokens and self._row < len(self._lines):
            self._col_tokens = self._lines[self._row].split()
            self._row += 1

    def next(self) -> str:
        self._fill()
        if not self._col_tokens:
            raise BvhError("unexpected end of document")
        return self._col_tokens.pop(0)

    def expect(self, token: str) -> None:
        got = self.next()
        if got != token:
            raise BvhError(f"expected '{token}', got '{got}' (line {self.line})")

    def at_end(self) -> bool:
        self._fill()
        return not self._col_tokens

    def take_line_floats(self) -> list[float]:
        self._fill()
        vals = [float(v) for v in self._col_tokens]
        self._col_tokens = []
        return vals


def export_bvh(clip: BvhClip, float_format: str = "{:.6f}") -> str:
    """Write a clip back to BVH text.

    Joints are emitted depth-first (the only order the format can express);
    channel columns are permuted to match, which is the identity for clips
    that came from ``parse_bvh``.  Round trip guarantee:
    ``parse_bvh(export_bvh(c))`` reproduces the structure exactly and every
    channel value within the precision of ``float_format`` (1e-4 at the
    default six decimals).
    """
    if clip.frame_count == 0:
        raise BvhError("cannot export a clip with zero frames")
    children: dict[int, list[int]] = {}
    root = None
    for i, j in enumerate(clip.joints):
        if j.parent is None:
            root = i
        else:
            children.setdefault(j.parent, []).append(i)
    if root is None:
        raise BvhError("clip has no root joint")
    lines: list[str] = ["HIERARCHY"]
    slices = clip.channel_slices()
    column_order: list[slice] = []

    def fmt(v: float) -> str:
        return float_format.format(v)

    def emit(index: int, depth: int) -> None:
        joint = clip.joints[index]
        pad = "\t" * depth
        if joint.is_end_site:
            lines.append(f"{pad}End Site")
        elif joint.parent is None:
            lines.append(f"{pad}ROOT {joint.name}")
        else:
            lines.append(f"{pad}JOINT {joint.name}")
        lines.append(f"{pad}{{")
        off = joint.offset
        lines.append(
            f"{pad}\tOFFSET {fmt(off[0])} {fmt(off[1])} {fmt(off[2])}"
        )
        if not joint.is_end_site:
            ch = " ".join(joint.channels)
            lines.append(f"{pad}\tCHANNELS {len(joint.channels)} {ch}".rstrip())
            column_order.append(slices[index])
            for c in children.get(index, []):
                emit(c, depth + 1)
        lines.append(f"{pad}}}")

    emit(root, 0)
    lines.append("MOTION")
    lines.append(f"Frames: {clip.frame_count}")
    lines.append(f"Frame Time: {clip.frame_time:.7f}")
    for row in clip.frames:
        values = [v for sl in column_order for v in row[sl]]
        lines.append(" ".join(fmt(v) for v in values))
    return "\n".join(lines) + "\n"


def local_matrix(joint: BvhJoint, values: np.ndarray, unit_scale: float) -> np.ndarray:
    """4x4 local transform of one joint from its channel values (meters)."""
    translation = joint.offset.astype(float).copy()
    rotation = np.eye(3)
    for channel, value in zip(joint.channels, values):
        if channel.endswith("position"):
            translation[_AXIS_INDEX[channel[0]]] += value
        else:
            rotation = rotation @ _ROTATION_FN[channel](math.radians(value))
    m = np.eye(4)
    m[:3, :3] = rotation
    m[:3, 3] = translation / unit_scale
    return m


def fk(clip: BvhClip, frame: int, root_transform: Transform | None = None) -> SkeletonPose:
    """Resolve world transforms of every joint for one frame.

    ``root_transform`` is the avatar's world root (the parent of the BVH
    root); identity when omitted.
    """
    if not 0 <= frame < clip.frame_count:
        raise IndexError(
            f"frame {frame} out of range (clip has {clip.frame_count})"
        )
    row = clip.frames[frame]
    slices = clip.channel_slices()
    world = np.empty((len(clip.joints), 4, 4))
    base = root_transform.matrix() if root_transform is not None else np.eye(4)
    positions = np.empty((len(clip.joints), 3))
    rotations = np.empty((len(clip.joints), 3, 3))
    for i, joint in enumerate(clip.joints):
        local = local_matrix(joint, row[slices[i]], clip.unit_scale)
        parent = base if joint.parent is None else world[joint.parent]
        world[i] = parent @ local
        positions[i] = world[i][:3, 3]
        rotations[i] = world[i][:3, :3]
    if not np.all(np.isfinite(positions)):
        raise BvhError(f"non-finite joint transform in frame {frame}")
    return SkeletonPose(
        joint_names=tuple(j.name for j in clip.joints),
        positions=positions,
        rotations=rotations,
    )


# ---------------------------------------------------------------------------
# Built-in clips.  The package bundles procedurally generated motion instead
# of binary assets: a looping walk cycle and a "walk up and wait" crossing
# clip used by the demo scenario.  Both are authored directly in the world
# frame (z up, x forward), offsets in centimeters.

# Depth-first order so the walk clip round-trips through BVH text exactly.
# The root offset stays zero: its position channels carry the world pose.
_WALK_JOINTS: list[tuple[str, int | None, tuple[float, float, float]]] = [
    ("Hips", None, (0.0, 0.0, 0.0)),
    ("Spine", 0, (0.0, 0.0, 25.0)),
    ("Neck", 1, (0.0, 0.0, 30.0)),
    ("Head", 2, (0.0, 0.0, 15.0)),
    ("LeftArm", 1, (0.0, 20.0, 22.0)),
    ("LeftForeArm", 4, (0.0, 0.0, -28.0)),
    ("LeftHand", 5, (0.0, 0.0, -25.0)),
    ("RightArm", 1, (0.0, -20.0, 22.0)),
    ("RightForeArm", 7, (0.0, 0.0, -28.0)),
    ("RightHand", 8, (0.0, 0.0, -25.0)),
    ("LeftUpLeg", 0, (0.0, 10.0, -5.0)),
    ("LeftLeg", 10, (0.0, 0.0, -42.0)),
    ("LeftFoot", 11, (0.0, 0.0, -42.0)),
    ("RightUpLeg", 0, (0.0, -10.0, -5.0)),
    ("RightLeg", 13, (0.0, 0.0, -42.0)),
    ("RightFoot", 14, (0.0, 0.0, -42.0)),
]


def _walk_skeleton() -> list[BvhJoint]:
    joints = []
    for name, parent, offset in _WALK_JOINTS:
        channels: tuple[str, ...]
        if parent is None:
            channels = ("Xposition", "Yposition", "Zposition",
                        "Zrotation", "Yrotation", "Xrotation")
        else:
            channels = ("Zrotation", "Yrotation", "Xrotation")
        joints.append(
            BvhJoint(name=name, parent=parent,
                     offset=np.array(offset, dtype=float), channels=channels)
        )
    return joints


def _pose_row(phase: float, root_xyz_cm: tuple[float, float, float],
              root_yaw_deg: float, moving: float) -> list[float]:
    """One motion row: swinging limbs scaled by ``moving`` in [0, 1]."""
    swing = 28.0 * moving * math.sin(2.0 * math.pi * phase)
    arm = -14.0 * moving * math.sin(2.0 * math.pi * phase)
    knee_l = max(0.0, -30.0 * moving * math.sin(2.0 * math.pi * phase))
    knee_r = max(0.0, 30.0 * moving * math.sin(2.0 * math.pi * phase))
    row = [root_xyz_cm[0], root_xyz_cm[1], root_xyz_cm[2],
           root_yaw_deg, 0.0, 0.0]
    per_joint = {
        "Spine": (0.0, 0.0, 0.0),
        "Neck": (0.0, 0.0, 0.0),
        "Head": (0.0, 0.0, 0.0),
        "LeftUpLeg": (0.0, swing, 0.0),
        "LeftLeg": (0.0, knee_l, 0.0),
        "LeftFoot": (0.0, 0.0, 0.0),
        "RightUpLeg": (0.0, -swing, 0.0),
        "RightLeg": (0.0, knee_r, 0.0),
        "RightFoot": (0.0, 0.0, 0.0),
        "LeftArm": (0.0, arm, 0.0),
        "LeftForeArm": (0.0, 0.0, 0.0),
        "LeftHand": (0.0, 0.0, 0.0),
        "RightArm": (0.0, -arm, 0.0),
        "RightForeArm": (0.0, 0.0, 0.0),
        "RightHand": (0.0, 0.0, 0.0),
    }
    for name, _, _ in _WALK_JOINTS[1:]:
        z, y, x = per_joint[name]
        row.extend([z, y, x])
    return row


def make_walk_clip(frames: int = 40, frame_time: float = 0.05) -> BvhClip:
    """Looping in-place walk cycle (root stays at the origin)."""
    rows = [
        _pose_row(i / frames, (0.0, 0.0, 95.0 + 2.0 * math.sin(4 * math.pi * i / frames)),
                  0.0, 1.0)
        for i in range(frames)
    ]
    return BvhClip(joints=_walk_skeleton(), frames=np.asarray(rows, dtype=float),
                   frame_time=frame_time, unit_scale=100.0)


def make_crossing_clip(start_xy: tuple[float, float] = (0.0, 0.0),
                       heading_deg: float = 90.0,
                       walk_distance: float = 7.6,
                       speed: float = 1.4,
                       frames: int = 600,
                       frame_time: float = 0.05,
                       stride: float = 1.4) -> BvhClip:
    """Walk ``walk_distance`` meters along ``heading_deg`` and then stand.

    Root motion lives in the clip's root position channels (file units are
    centimeters), so replaying the clip moves the avatar through the map.
    """
    rows = []
    hdg = math.radians(heading_deg)
    for i in range(frames):
        t = i * frame_time
        dist = min(speed * t, walk_distance)
        moving = 1.0 if dist < walk_distance else 0.0
        phase = (dist / stride) % 1.0
        x = (start_xy[0] + dist * math.cos(hdg)) * 100.0
        y = (start_xy[1] + dist * math.sin(hdg)) * 100.0
        bob = 2.0 * math.sin(4 * math.pi * phase) * moving
        rows.append(_pose_row(phase, (x, y, 95.0 + bob), heading_deg, moving))
    return BvhClip(joints=_walk_skeleton(), frames=np.asarray(rows, dtype=float),
                   frame_time=frame_time, unit_scale=100.0)
