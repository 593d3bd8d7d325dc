"""Wire protocol: length-prefixed JSON frames and typed messages.

A frame is a 4-byte big-endian unsigned length followed by exactly that
many bytes of UTF-8 JSON encoding a single object with a ``type`` field.
The same payload objects travel one-per-text-frame over the web-socket
transport (no length prefix there).

Unknown message types decode into ``UnknownMessage`` so older peers
survive newer senders.  Malformed input raises ``ProtocolError`` and
nothing else: decoding arbitrary bytes must never crash the process.

Bulk sensor data rides as base64 of a fixed binary layout, documented at
``encode_points`` / ``encode_image``: little-endian float32 coordinates,
one uint8 label and one int32 actor id per point.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass, field, fields

import numpy as np

MAX_FRAME_BYTES = 16 * 1024 * 1024
PROTOCOL_VERSION = 1

TCP_DEFAULT_PORT = 2000
WS_DEFAULT_PORT = 2001


class ProtocolError(ValueError):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


_REGISTRY: dict[str, type] = {}


def message(type_name: str):
    """Register a dataclass as a wire message variant."""

    def wrap(cls):
        cls = dataclass(frozen=True)(cls)
        cls.type = type_name
        _REGISTRY[type_name] = cls
        return cls

    return wrap


@message("hello")
class Hello:
    role: str = "client"
    version: int = PROTOCOL_VERSION


@message("welcome")
class Welcome:
    tick_hz: float = 20.0
    session_id: int = 0
    version: int = PROTOCOL_VERSION


@message("spawn_actor")
class SpawnActor:
    blueprint: str = "vehicle.sedan"
    transform: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@message("actor_spawned")
class ActorSpawned:
    id: int = 0


@message("vehicle_control")
class VehicleControlMsg:
    id: int = 0
    throttle: float = 0.0
    steer: float = 0.0
    brake: float = 0.0


@message("walker_control")
class WalkerControlMsg:
    id: int = 0
    direction: tuple = (0.0, 0.0)
    speed: float = 0.0
    head_yaw: float | None = None


@message("avatar_pose")
class AvatarPoseMsg:
    id: int = 0
    joints: tuple = ()  # ((name, x, y, z, yaw, pitch, roll), ...)


@message("set_traffic_params")
class SetTrafficParams:
    speed_limit_factor: float = 1.0
    ignore_lights: bool = False
    ignore_pedestrians: bool = False
    comfort_decel: float = 3.0
    max_decel: float = 8.0


@message("tick")
class Tick:
    pass


@message("snapshot")
class SnapshotMsg:
    frame: int = 0
    data: dict = field(default_factory=dict)  # snapshot_to_dict payload


@message("subscribe_sensor")
class SubscribeSensor:
    sensor_kind: str = "lidar"
    config: dict = field(default_factory=dict)
    attach_to: int | None = None


@message("sensor_frame")
class SensorFrame:
    frame: int = 0
    sensor_id: int = 0
    kind: str = "lidar"
    data: dict = field(default_factory=dict)


@message("error")
class ErrorMsg:
    code: str = "error"
    detail: str = ""


@message("ack")
class Ack:
    ref: str = ""


@dataclass(frozen=True)
class UnknownMessage:
    type: str
    payload: dict


def message_to_dict(msg) -> dict:
    if isinstance(msg, UnknownMessage):
        doc = {"type": msg.type}
        doc.update(msg.payload)
        return doc
    doc = {"type": msg.type}
    for f in fields(msg):
        value = getattr(msg, f.name)
        doc[f.name] = _plain(value)
    return doc


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def message_from_dict(doc: dict):
    if not isinstance(doc, dict):
        raise ProtocolError("bad-payload", "payload is not an object")
    type_name = doc.get("type")
    if not isinstance(type_name, str):
        raise ProtocolError("bad-payload", "missing 'type' field")
    cls = _REGISTRY.get(type_name)
    if cls is None:
        payload = {k: v for k, v in doc.items() if k != "type"}
        return UnknownMessage(type=type_name, payload=payload)
    kwargs = {}
    try:
        for f in fields(cls):
            if f.name in doc:
                value = doc[f.name]
                if isinstance(value, list):
                    value = _tuplify(value)
                kwargs[f.name] = value
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ProtocolError("bad-payload", str(exc)) from exc


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def encode_payload(msg) -> bytes:
    return json.dumps(message_to_dict(msg), separators=(",", ":")).encode("utf-8")


def decode_payload(data: bytes):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError("bad-encoding", "payload is not valid UTF-8") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError("bad-json", exc.msg) from exc
    return message_from_dict(doc)


def encode_frame(msg) -> bytes:
    """Length-prefixed wire frame of one message."""
    payload = encode_payload(msg)
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolError("frame-too-large",
                            f"{len(payload)} bytes > {MAX_FRAME_BYTES}")
    return struct.pack(">I", len(payload)) + payload


def decode_frame(buf: bytes):
    """Decode one frame from the head of ``buf``.

    Returns ``(message, consumed_bytes)``; ``(None, 0)`` when the buffer
    does not yet hold a complete frame.  Raises ProtocolError (only) for
    invalid frames.
    """
    if len(buf) < 4:
        return None, 0
    (length,) = struct.unpack(">I", buf[:4])
    if length > MAX_FRAME_BYTES:
        raise ProtocolError("frame-too-large",
                            f"declared {length} bytes > {MAX_FRAME_BYTES}")
    if len(buf) < 4 + length:
        return None, 0
    payload = buf[4:4 + length]
    return decode_payload(payload), 4 + length


class FrameDecoder:
    """Incremental frame splitter for a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes):
        """Append bytes; yield every complete message now available."""
        self._buf.extend(data)
        while True:
            msg, consumed = decode_frame(bytes(self._buf))
            if consumed == 0:
                return
            del self._buf[:consumed]
            yield msg

    def pending_bytes(self) -> int:
        return len(self._buf)


# ---------------------------------------------------------------------------
# Binary payload helpers for sensor frames.


def encode_points(points: np.ndarray, labels: np.ndarray,
                  actors: np.ndarray) -> dict:
    """Point cloud -> {count, xyz, label, actor} with base64 fields.

    Layout: xyz as little-endian float32 triplets, labels as uint8,
    actors as little-endian int32, all in point order.
    """
    xyz = np.ascontiguousarray(points, dtype="<f4")
    lab = np.ascontiguousarray(labels, dtype=np.uint8)
    act = np.ascontiguousarray(actors, dtype="<i4")
    return {
        "count": int(len(lab)),
        "xyz": base64.b64encode(xyz.tobytes()).decode("ascii"),
        "label": base64.b64encode(lab.tobytes()).decode("ascii"),
        "actor": base64.b64encode(act.tobytes()).decode("ascii"),
    }


def decode_points(doc: dict):
    count = int(doc["count"])
    xyz = np.frombuffer(base64.b64decode(doc["xyz"]), dtype="<f4")
    labels = np.frombuffer(base64.b64decode(doc["label"]), dtype=np.uint8)
    actors = np.frombuffer(base64.b64decode(doc["actor"]), dtype="<i4")
    return xyz.reshape(count, 3), labels, actors


def encode_image(rgb: np.ndarray, depth: np.ndarray,
                 labels: np.ndarray) -> dict:
    """Camera planes -> base64: rgb uint8, depth little-endian float32,
    labels uint8; row-major."""
    h, w = labels.shape
    return {
        "width": int(w),
        "height": int(h),
        "rgb": base64.b64encode(
            np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()).decode("ascii"),
        "depth": base64.b64encode(
            np.ascontiguousarray(depth, dtype="<f4").tobytes()).decode("ascii"),
        "label": base64.b64encode(
            np.ascontiguousarray(labels, dtype=np.uint8).tobytes()).decode("ascii"),
    }


def decode_image(doc: dict):
    w, h = int(doc["width"]), int(doc["height"])
    rgb = np.frombuffer(base64.b64decode(doc["rgb"]),
                        dtype=np.uint8).reshape(h, w, 3)
    depth = np.frombuffer(base64.b64decode(doc["depth"]),
                          dtype="<f4").reshape(h, w)
    labels = np.frombuffer(base64.b64decode(doc["label"]),
                           dtype=np.uint8).reshape(h, w)
    return rgb, depth, labels
