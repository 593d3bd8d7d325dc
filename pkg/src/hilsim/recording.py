"""Tick recording, deterministic replay, and sensor-frame export.

A log is line-delimited JSON: one header line, then one line per frame in
order.  Replay parses the stored state back verbatim (state replay, not
re-simulation), so exports stay reproducible even if simulation code
changes.  Floats are serialized with repr round-trip precision; equal
runs produce byte-identical logs.

Export formats:
  LiDAR         -> ASCII PLY, per vertex ``x y z label actor_id``
  camera depth  -> 16-bit binary PGM in millimeters (clamped at 65535)
  camera rgb    -> binary PPM
  segmentation  -> binary PPM in the fixed palette
Filenames follow ``{sensor}_{frame:06}.{ext}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .avatar import DEFAULT_RIG, AvatarRig
from .geom import Transform
from .sensors import (
    PALETTE,
    CameraConfig,
    CameraFrame,
    LidarConfig,
    PointCloud,
    lidar_scan,
    render_camera,
)
from .world import WorldSnapshot, scene_from_snapshot, snapshot_from_dict, \
    snapshot_to_dict

FORMAT_VERSION = 1


class RecordError(ValueError):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


@dataclass
class RecordLog:
    map_ref: str = ""
    dt: float = 0.05
    seed: int = 0
    joint_names: list[str] = field(default_factory=list)
    rig: AvatarRig = DEFAULT_RIG
    frames: list[WorldSnapshot] = field(default_factory=list)

    def header_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "map": self.map_ref,
            "dt": self.dt,
            "seed": self.seed,
            "joint_names": self.joint_names,
            "rig": [list(b) for b in self.rig.bones],
        }

    def __len__(self) -> int:
        return len(self.frames)


def record_tick(log: RecordLog, snapshot: WorldSnapshot) -> RecordLog:
    """Append one tick; frames must arrive contiguously from 0."""
    expected = log.frames[-1].frame + 1 if log.frames else 0
    if snapshot.frame != expected:
        raise RecordError(
            f"out-of-order frame {snapshot.frame}, expected {expected}"
        )
    if not log.joint_names:
        for w in snapshot.walkers:
            if w.pose is not None:
                log.joint_names = list(w.pose.joint_names)
                break
    log.frames.append(snapshot)
    return log


def serialize_log(log: RecordLog) -> str:
    lines = [_dumps(log.header_dict())]
    lines.extend(_dumps(snapshot_to_dict(s)) for s in log.frames)
    return "\n".join(lines) + "\n"


def write_log(log: RecordLog, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_log(log))


def parse_log(text: str) -> RecordLog:
    """Parse a serialized log; truncated records report the last good frame."""
    lines = text.splitlines()
    if not lines:
        raise RecordError("empty log")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise RecordError(f"bad log header: {exc.msg}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise RecordError(
            f"unsupported format_version {header.get('format_version')!r}"
        )
    rig = AvatarRig(bones=tuple(
        (str(p), str(c), float(r)) for p, c, r in header.get("rig", [])
    )) if header.get("rig") else DEFAULT_RIG
    log = RecordLog(
        map_ref=header.get("map", ""),
        dt=float(header["dt"]),
        seed=int(header["seed"]),
        joint_names=list(header.get("joint_names", [])),
        rig=rig,
    )
    for i, line in enumerate(lines[1:]):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            snapshot = snapshot_from_dict(doc)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            last_good = log.frames[-1].frame if log.frames else None
            raise RecordError(
                f"truncated or corrupt record at line {i + 2}; "
                f"last complete frame: {last_good}"
            ) from exc
        expected = log.frames[-1].frame + 1 if log.frames else 0
        if snapshot.frame != expected:
            raise RecordError(
                f"frame {snapshot.frame} out of order at line {i + 2}, "
                f"expected {expected}"
            )
        log.frames.append(snapshot)
    _check_joint_lengths(log)
    return log


def read_log(path: str) -> RecordLog:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_log(fh.read())


def _check_joint_lengths(log: RecordLog) -> None:
    if not log.joint_names:
        return
    expected = len(log.joint_names)
    for snapshot in log.frames:
        for w in snapshot.walkers:
            if w.pose is not None and len(w.pose.joint_names) != expected:
                raise RecordError(
                    f"frame {snapshot.frame}: walker {w.id} has "
                    f"{len(w.pose.joint_names)} joints, header declares "
                    f"{expected}"
                )


def replay(log: RecordLog):
    """Stream the recorded snapshots in order (random access via seek)."""
    yield from log.frames


def seek(log: RecordLog, frame: int) -> WorldSnapshot:
    if not 0 <= frame < len(log.frames):
        raise IndexError(f"frame {frame} out of range (log has {len(log.frames)})")
    return log.frames[frame]


# ---------------------------------------------------------------------------
# Sensor configuration files: JSON list of sensor entries.


@dataclass(frozen=True)
class SensorSpec:
    name: str
    kind: str  # lidar | camera
    lidar: LidarConfig | None = None
    camera: CameraConfig | None = None
    attach_to: int | None = None  # actor id; None = fixed world pose
    pose: Transform = field(default_factory=Transform)


def parse_sensor_specs(text: str) -> list[SensorSpec]:
    doc = json.loads(text)
    if not isinstance(doc, list):
        raise RecordError("sensor config must be a JSON list")
    specs = []
    for entry in doc:
        kind = entry["kind"]
        name = entry.get("name", kind)
        mount = Transform.from_list(entry.get("mount", [0, 0, 0, 0, 0, 0]))
        attach = entry.get("attach_to")
        if kind == "lidar":
            config = LidarConfig(
                channels=int(entry.get("channels", 32)),
                v_fov=tuple(entry.get("v_fov", (-30.0, 10.0))),
                h_steps=int(entry.get("h_steps", 1000)),
                max_range=float(entry.get("max_range", 100.0)),
                mount=mount,
                noise_sigma=float(entry.get("noise_sigma", 0.0)),
                noise_seed=int(entry.get("noise_seed", 0)),
            )
            specs.append(SensorSpec(name=name, kind="lidar", lidar=config,
                                    attach_to=attach, pose=mount))
        elif kind == "camera":
            config = CameraConfig(
                width=int(entry.get("width", 640)),
                height=int(entry.get("height", 480)),
                h_fov=float(entry.get("h_fov", np.deg2rad(90.0))),
                max_range=float(entry.get("max_range", 1000.0)),
                mount=mount,
            )
            specs.append(SensorSpec(name=name, kind="camera", camera=config,
                                    attach_to=attach, pose=mount))
        else:
            raise RecordError(f"unknown sensor kind '{kind}'")
    return specs


def sensor_world_pose(spec: SensorSpec, snapshot: WorldSnapshot) -> Transform:
    """Mount pose composed onto the carrier actor, if any."""
    if spec.attach_to is None:
        return spec.pose
    for v in snapshot.vehicles:
        if v.id == spec.attach_to:
            carrier = v.transform
            break
    else:
        raise RecordError(f"sensor carrier actor {spec.attach_to} not found")
    m = carrier.matrix() @ spec.pose.matrix()
    yaw = float(np.arctan2(m[1, 0], m[0, 0]))
    pitch = float(np.arcsin(np.clip(-m[2, 0], -1.0, 1.0)))
    roll = float(np.arctan2(m[2, 1], m[2, 2]))
    return Transform(x=float(m[0, 3]), y=float(m[1, 3]), z=float(m[2, 3]),
                     yaw=yaw, pitch=pitch, roll=roll)


# ---------------------------------------------------------------------------
# File writers (bit-exact formats)


def ply_bytes(cloud: PointCloud) -> bytes:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar label",
        "property int actor_id",
        "end_header",
    ]
    for point, label, actor in zip(cloud.points, cloud.labels, cloud.actors):
        x, y, z = (float(v) for v in point)
        lines.append(f"{x!r} {y!r} {z!r} {int(label)} {int(actor)}")
    return ("\n".join(lines) + "\n").encode("ascii")


def depth_pgm_bytes(frame: CameraFrame) -> bytes:
    mm = np.rint(frame.depth * 1000.0)
    mm = np.clip(mm, 0, 65535).astype(">u2")
    header = f"P5\n{frame.width} {frame.height}\n65535\n".encode("ascii")
    return header + mm.tobytes()


def rgb_ppm_bytes(frame: CameraFrame) -> bytes:
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + frame.rgb.tobytes()


def segmentation_ppm_bytes(frame: CameraFrame) -> bytes:
    rgb = PALETTE[frame.labels].astype(np.uint8)
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + rgb.tobytes()


def export_frames(log: RecordLog, specs: list[SensorSpec], out_dir: str):
    """Re-sense every frame and write the dataset files.

    Returns the manifest: a list of {frame, sensor, files} entries, also
    written as ``manifest.json`` in the output directory.
    """
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise RecordError(f"output directory '{out_dir}' is not writable")
    manifest = []
    for snapshot in log.frames:
        scenes: dict[int | None, object] = {}
        for spec in specs:
            pose = sensor_world_pose(spec, snapshot)
            if spec.attach_to not in scenes:
                scenes[spec.attach_to] = scene_from_snapshot(
                    snapshot, log.rig, exclude_actor=spec.attach_to
                )
            scene = scenes[spec.attach_to]
            files = []
            if spec.kind == "lidar":
                cloud = lidar_scan(spec.lidar, pose, scene)
                name = f"{spec.name}_{snapshot.frame:06}.ply"
                _write(os.path.join(out_dir, name), ply_bytes(cloud))
                files.append(name)
            else:
                cam = render_camera(spec.camera, pose, scene)
                for plane, ext, data in (
                    ("rgb", "ppm", rgb_ppm_bytes(cam)),
                    ("depth", "pgm", depth_pgm_bytes(cam)),
                    ("seg", "ppm", segmentation_ppm_bytes(cam)),
                ):
                    name = f"{spec.name}_{plane}_{snapshot.frame:06}.{ext}"
                    _write(os.path.join(out_dir, name), data)
                    files.append(name)
            manifest.append({"frame": snapshot.frame, "sensor": spec.name,
                             "files": files})
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def _write(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)
