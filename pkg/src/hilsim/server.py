"""Socket server: many sessions, one world, tick-boundary command queue.

Two transports speak the same message schema: raw TCP with length-prefixed
frames (default port 2000) and a browser bridge (default port 2001) that
serves static files over HTTP and upgrades ``/ws`` to a web socket carrying
one JSON message per text frame.

Two modes:
  lockstep  -- the world advances only on ``tick`` from the authority
               session (the first to say hello with role "authority").
  realtime  -- an internal clock steps the world at ``1/dt`` Hz and tick
               messages are rejected.

All world mutation funnels through ``ServerEngine.tick`` under one lock;
command messages are validated immediately, enqueued, and applied by the
world at the next tick.  Snapshots fan out through bounded per-session
buffers (64 frames); a session that cannot keep up is disconnected rather
than allowed to stall the loop.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import queue
import socket
import struct
import threading
import time

from .avatar import TrackerSample
from .bvh import SkeletonPose
from .geom import Transform
from .protocol import (
    Ack,
    ActorSpawned,
    AvatarPoseMsg,
    ErrorMsg,
    FrameDecoder,
    Hello,
    ProtocolError,
    SensorFrame,
    SetTrafficParams,
    SnapshotMsg,
    SpawnActor,
    SubscribeSensor,
    Tick,
    UnknownMessage,
    VehicleControlMsg,
    WalkerControlMsg,
    Welcome,
    encode_frame,
    encode_image,
    encode_payload,
    encode_points,
)
from .recording import SensorSpec, sensor_world_pose
from .sensors import CameraConfig, LidarConfig, lidar_scan, render_camera
from .traffic import TrafficParams, VehicleControl
from .world import World, scene_from_snapshot, snapshot_to_dict

import numpy as np

log = logging.getLogger(__name__)

SESSION_BUFFER_FRAMES = 64
WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
MAX_WS_FRAME = 32 * 1024 * 1024


class Session:
    """One connected client, transport-agnostic."""

    def __init__(self, session_id: int, send_fn):
        self.id = session_id
        self.role = ""
        self.hello_done = False
        self.is_authority = False
        self.outbox: queue.Queue = queue.Queue(maxsize=SESSION_BUFFER_FRAMES)
        self.subscriptions: list[tuple[int, SensorSpec]] = []
        self.alive = True
        self._send_fn = send_fn

    def enqueue(self, msg) -> bool:
        """Queue a message for delivery; False when the buffer overflowed."""
        try:
            self.outbox.put_nowait(msg)
            return True
        except queue.Full:
            return False


class ServerEngine:
    """Session registry plus the single-writer tick pipeline."""

    def __init__(self, world: World, mode: str = "realtime"):
        if mode not in ("realtime", "lockstep"):
            raise ValueError(f"unknown mode '{mode}'")
        self.world = world
        self.mode = mode
        self.lock = threading.RLock()
        self.sessions: dict[int, Session] = {}
        self._next_session = 1
        self._next_sensor = 1
        self.authority_id: int | None = None
        self.on_disconnect = None  # hook(session)

    @property
    def tick_hz(self) -> float:
        return 1.0 / self.world.dt

    def register_session(self, send_fn) -> Session:
        with self.lock:
            session = Session(self._next_session, send_fn)
            self._next_session += 1
            self.sessions[session.id] = session
            return session

    def drop_session(self, session: Session) -> None:
        with self.lock:
            session.alive = False
            self.sessions.pop(session.id, None)
            if self.authority_id == session.id:
                self.authority_id = None

    # -- message handling ---------------------------------------------------

    def handle_message(self, session: Session, msg) -> list:
        """Replies for one inbound message (exactly one per request)."""
        if isinstance(msg, UnknownMessage):
            return [ErrorMsg(code="unknown-type", detail=msg.type)]
        if not session.hello_done and not isinstance(msg, Hello):
            return [ErrorMsg(code="protocol-state",
                             detail="hello required first")]
        try:
            return self._dispatch(session, msg)
        except ProtocolError as exc:
            return [ErrorMsg(code=exc.code, detail=exc.detail)]

    def _dispatch(self, session: Session, msg) -> list:
        if isinstance(msg, Hello):
            session.hello_done = True
            session.role = msg.role
            if msg.role == "authority":
                with self.lock:
                    if self.mode == "lockstep" and self.authority_id is None:
                        self.authority_id = session.id
                        session.is_authority = True
            return [Welcome(tick_hz=self.tick_hz, session_id=session.id)]

        if isinstance(msg, SpawnActor):
            with self.lock:
                try:
                    actor_id = self.world.spawn_actor(
                        msg.blueprint, Transform.from_list(msg.transform))
                except Exception as exc:
                    return [ErrorMsg(code="spawn-failed", detail=str(exc))]
            return [ActorSpawned(id=actor_id)]

        if isinstance(msg, VehicleControlMsg):
            with self.lock:
                if msg.id in {w.id for w in self.world.walker_states()}:
                    return [ErrorMsg(code="wrong-actor-kind",
                                     detail=f"actor {msg.id} is a walker")]
                if msg.id not in {v.id for v in self.world.vehicle_states()}:
                    return [ErrorMsg(code="unknown-actor",
                                     detail=f"no actor {msg.id}")]
                self.world.queue_vehicle_control(
                    msg.id, VehicleControl(msg.throttle, msg.steer, msg.brake))
            return [Ack(ref="vehicle_control")]

        if isinstance(msg, WalkerControlMsg):
            with self.lock:
                if msg.id in {v.id for v in self.world.vehicle_states()}:
                    return [ErrorMsg(code="wrong-actor-kind",
                                     detail=f"actor {msg.id} is a vehicle")]
                if msg.id not in {w.id for w in self.world.walker_states()}:
                    return [ErrorMsg(code="unknown-actor",
                                     detail=f"no actor {msg.id}")]
                self.world.queue_walker_control(
                    msg.id, tuple(msg.direction), msg.speed, msg.head_yaw)
            return [Ack(ref="walker_control")]

        if isinstance(msg, AvatarPoseMsg):
            with self.lock:
                if msg.id not in {w.id for w in self.world.walker_states()}:
                    return [ErrorMsg(code="unknown-actor",
                                     detail=f"no walker {msg.id}")]
                pose = _pose_from_joints(msg.joints)
                if pose is not None:
                    self.world.queue_avatar_pose(msg.id, pose)
            return [Ack(ref="avatar_pose")]

        if isinstance(msg, SetTrafficParams):
            try:
                params = TrafficParams(
                    speed_limit_factor=msg.speed_limit_factor,
                    ignore_lights=msg.ignore_lights,
                    ignore_pedestrians=msg.ignore_pedestrians,
                    comfort_decel=msg.comfort_decel,
                    max_decel=msg.max_decel,
                )
            except ValueError as exc:
                return [ErrorMsg(code="bad-params", detail=str(exc))]
            with self.lock:
                self.world.queue_traffic_params(params)
            return [Ack(ref="set_traffic_params")]

        if isinstance(msg, SubscribeSensor):
            try:
                spec = _sensor_spec_from_msg(msg, self._next_sensor)
            except (ValueError, KeyError) as exc:
                return [ErrorMsg(code="bad-sensor-config", detail=str(exc))]
            with self.lock:
                sensor_id = self._next_sensor
                self._next_sensor += 1
                session.subscriptions.append((sensor_id, spec))
            return [Ack(ref=f"sensor:{sensor_id}")]

        if isinstance(msg, Tick):
            if self.mode != "lockstep":
                return [ErrorMsg(code="not-authorized",
                                 detail="realtime server rejects tick")]
            if not session.is_authority:
                return [ErrorMsg(code="not-authorized",
                                 detail="session lacks tick authority")]
            self.tick()
            return [Ack(ref="tick")]

        return [ErrorMsg(code="unexpected-message", detail=msg.type)]

    # -- tick + broadcast -----------------------------------------------------

    def tick(self):
        with self.lock:
            snapshot = self.world.step()
            sessions = list(self.sessions.values())
        self.broadcast_snapshot(sessions, snapshot)
        return snapshot

    def broadcast_snapshot(self, sessions, snapshot) -> None:
        doc = snapshot_to_dict(snapshot)
        msg = SnapshotMsg(frame=snapshot.frame, data=doc)
        sensor_cache: dict[int, object] = {}
        for session in sessions:
            if not session.hello_done or not session.alive:
                continue
            ok = session.enqueue(msg)
            for sensor_id, spec in session.subscriptions:
                if not ok:
                    break
                frame_msg = self._sensor_frame(sensor_cache, sensor_id, spec,
                                               snapshot)
                ok = session.enqueue(frame_msg)
            if not ok:
                log.warning("session %d overflowed its buffer; disconnecting",
                            session.id)
                self.drop_session(session)
                if self.on_disconnect:
                    self.on_disconnect(session)

    def _sensor_frame(self, cache, sensor_id: int, spec: SensorSpec,
                      snapshot) -> SensorFrame:
        if sensor_id in cache:
            return cache[sensor_id]
        pose = sensor_world_pose(spec, snapshot)
        scene = scene_from_snapshot(snapshot, self.world.rig,
                                    exclude_actor=spec.attach_to)
        if spec.kind == "lidar":
            cloud = lidar_scan(spec.lidar, pose, scene)
            data = encode_points(cloud.points, cloud.labels, cloud.actors)
        else:
            cam = render_camera(spec.camera, pose, scene)
            data = encode_image(cam.rgb, cam.depth, cam.labels)
        msg = SensorFrame(frame=snapshot.frame, sensor_id=sensor_id,
                          kind=spec.kind, data=data)
        cache[sensor_id] = msg
        return msg


def _pose_from_joints(joints) -> SkeletonPose | None:
    if not joints:
        return None
    names = []
    positions = []
    rotations = []
    for entry in joints:
        name, x, y, z, yaw, pitch, roll = entry
        names.append(str(name))
        positions.append((float(x), float(y), float(z)))
        rotations.append(Transform(0, 0, 0, float(yaw), float(pitch),
                                   float(roll)).rotation())
    return SkeletonPose(joint_names=tuple(names),
                        positions=np.asarray(positions, dtype=float),
                        rotations=np.asarray(rotations, dtype=float))


def _sensor_spec_from_msg(msg: SubscribeSensor, sensor_id: int) -> SensorSpec:
    config = dict(msg.config)
    mount = Transform.from_list(config.pop("mount", [0, 0, 0, 0, 0, 0]))
    if msg.sensor_kind == "lidar":
        lidar = LidarConfig(
            channels=int(config.get("channels", 32)),
            v_fov=tuple(config.get("v_fov", (-30.0, 10.0))),
            h_steps=int(config.get("h_steps", 1000)),
            max_range=float(config.get("max_range", 100.0)),
            mount=mount,
        )
        return SensorSpec(name=f"lidar{sensor_id}", kind="lidar", lidar=lidar,
                          attach_to=msg.attach_to, pose=mount)
    if msg.sensor_kind == "camera":
        camera = CameraConfig(
            width=int(config.get("width", 640)),
            height=int(config.get("height", 480)),
            h_fov=float(config.get("h_fov", np.deg2rad(90.0))),
            max_range=float(config.get("max_range", 1000.0)),
            mount=mount,
        )
        return SensorSpec(name=f"camera{sensor_id}", kind="camera",
                          camera=camera, attach_to=msg.attach_to, pose=mount)
    raise ValueError(f"unknown sensor kind '{msg.sensor_kind}'")


# ---------------------------------------------------------------------------
# Transports


class Server:
    """TCP + web-socket front ends over one ServerEngine."""

    def __init__(self, world: World, mode: str = "realtime",
                 host: str = "127.0.0.1", port: int = 2000,
                 ws_port: int = 2001, static_dir: str | None = None):
        self.engine = ServerEngine(world, mode)
        self.host = host
        self._tcp = _listen(host, port)
        self._ws = _listen(host, ws_port)
        self.port = self._tcp.getsockname()[1]
        self.ws_port = self._ws.getsockname()[1]
        self.static_dir = static_dir
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    def start(self) -> None:
        self._spawn(self._accept_loop, self._tcp, self._tcp_session)
        self._spawn(self._accept_loop, self._ws, self._ws_session)
        if self.engine.mode == "realtime":
            self._spawn(self._tick_loop)

    def stop(self) -> None:
        self._stop.set()
        for sock in (self._tcp, self._ws):
            try:
                sock.close()
            except OSError:
                pass
        with self.engine.lock:
            sessions = list(self.engine.sessions.values())
        for session in sessions:
            self.engine.drop_session(session)
        for t in self._threads:
            t.join(timeout=2.0)

    def _spawn(self, target, *args) -> None:
        t = threading.Thread(target=target, args=args, daemon=True)
        t.start()
        self._threads.append(t)

    def _tick_loop(self) -> None:
        period = self.engine.world.dt
        next_due = time.monotonic()
        while not self._stop.is_set():
            now = time.monotonic()
            if now < next_due:
                time.sleep(min(period, next_due - now))
                continue
            self.engine.tick()
            next_due += period
            if now - next_due > 1.0:  # fell far behind; resync
                next_due = now + period

    def _accept_loop(self, listener: socket.socket, handler) -> None:
        listener.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            self._spawn(handler, conn)

    # -- raw TCP transport ----------------------------------------------------

    def _tcp_session(self, conn: socket.socket) -> None:
        conn.settimeout(0.2)
        session = self.engine.register_session(None)
        writer = threading.Thread(target=self._writer_loop,
                                  args=(session, conn, _send_tcp), daemon=True)
        writer.start()
        decoder = FrameDecoder()
        try:
            while not self._stop.is_set() and session.alive:
                try:
                    data = conn.recv(65536)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                try:
                    for msg in decoder.feed(data):
                        for reply in self.engine.handle_message(session, msg):
                            session.enqueue(reply)
                except ProtocolError as exc:
                    session.enqueue(ErrorMsg(code=exc.code, detail=exc.detail))
                    break
        finally:
            self.engine.drop_session(session)
            session.outbox.put(None)
            writer.join(timeout=1.0)
            try:
                conn.close()
            except OSError:
                pass

    def _writer_loop(self, session: Session, conn: socket.socket,
                     send_fn) -> None:
        while session.alive or not session.outbox.empty():
            try:
                msg = session.outbox.get(timeout=0.2)
            except queue.Empty:
                if self._stop.is_set():
                    return
                continue
            if msg is None:
                return
            try:
                send_fn(conn, msg)
            except OSError:
                self.engine.drop_session(session)
                return

    # -- web-socket + static HTTP transport ------------------------------------

    def _ws_session(self, conn: socket.socket) -> None:
        conn.settimeout(5.0)
        try:
            request = _read_http_request(conn)
        except (OSError, ValueError):
            conn.close()
            return
        if request is None:
            conn.close()
            return
        path, headers = request
        clean = path.split("?")[0]
        if clean == "/ws" and headers.get("upgrade", "").lower() == "websocket":
            self._ws_messages(conn, headers)
        elif clean == "/map.json":
            from .roads import serialize_scene

            body = serialize_scene(self.engine.world.road_map).encode("utf-8")
            _http_response(conn, 200, body, "application/json")
            conn.close()
        else:
            _serve_static(conn, path, self.static_dir)
            conn.close()

    def _ws_messages(self, conn: socket.socket, headers: dict) -> None:
        key = headers.get("sec-websocket-key", "")
        accept = base64.b64encode(
            hashlib.sha1((key + WS_GUID).encode("ascii")).digest()
        ).decode("ascii")
        response = (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
        )
        conn.sendall(response.encode("ascii"))
        conn.settimeout(0.2)
        session = self.engine.register_session(None)
        writer = threading.Thread(target=self._writer_loop,
                                  args=(session, conn, _send_ws), daemon=True)
        writer.start()
        reader = _WsReader(conn)
        try:
            while not self._stop.is_set() and session.alive:
                try:
                    frame = reader.read_message()
                except socket.timeout:
                    continue
                except (OSError, ValueError):
                    break
                if frame is None:  # close
                    break
                try:
                    msg = _ws_decode(frame)
                except ProtocolError as exc:
                    session.enqueue(ErrorMsg(code=exc.code, detail=exc.detail))
                    continue
                for reply in self.engine.handle_message(session, msg):
                    session.enqueue(reply)
        finally:
            self.engine.drop_session(session)
            session.outbox.put(None)
            writer.join(timeout=1.0)
            try:
                conn.close()
            except OSError:
                pass


def _listen(host: str, port: int) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen(16)
    return sock


def _send_tcp(conn: socket.socket, msg) -> None:
    conn.sendall(encode_frame(msg))


def _send_ws(conn: socket.socket, msg) -> None:
    payload = encode_payload(msg)
    header = bytearray([0x81])  # FIN + text
    n = len(payload)
    if n < 126:
        header.append(n)
    elif n < 65536:
        header.append(126)
        header.extend(struct.pack(">H", n))
    else:
        header.append(127)
        header.extend(struct.pack(">Q", n))
    conn.sendall(bytes(header) + payload)


def _ws_decode(payload: bytes):
    from .protocol import decode_payload

    return decode_payload(payload)


class _WsReader:
    """Minimal RFC 6455 server-side frame reader (masked client frames).

    Parsing is buffer-driven so a recv timeout mid-frame keeps the partial
    bytes and resumes cleanly on the next call.
    """

    def __init__(self, conn: socket.socket):
        self.conn = conn
        self._buf = bytearray()
        self._fragments: list[bytes] = []

    def _parse_frame(self):
        """(fin, opcode, payload) from the buffer, or None if incomplete."""
        buf = self._buf
        if len(buf) < 2:
            return None
        fin = bool(buf[0] & 0x80)
        opcode = buf[0] & 0x0F
        masked = bool(buf[1] & 0x80)
        length = buf[1] & 0x7F
        offset = 2
        if length == 126:
            if len(buf) < 4:
                return None
            (length,) = struct.unpack(">H", bytes(buf[2:4]))
            offset = 4
        elif length == 127:
            if len(buf) < 10:
                return None
            (length,) = struct.unpack(">Q", bytes(buf[2:10]))
            offset = 10
        if length > MAX_WS_FRAME:
            raise ValueError(f"websocket frame of {length} bytes")
        mask_len = 4 if masked else 0
        if len(buf) < offset + mask_len + length:
            return None
        mask = bytes(buf[offset:offset + mask_len]) if masked else b""
        start = offset + mask_len
        data = bytes(buf[start:start + length])
        if masked:
            data = bytes(b ^ mask[i % 4] for i, b in enumerate(data))
        del buf[:start + length]
        return fin, opcode, data

    def read_message(self) -> bytes | None:
        """One complete (possibly fragmented) message; None when the peer
        closed.  Raises socket.timeout between frames without losing state.
        """
        while True:
            frame = self._parse_frame()
            if frame is None:
                data = self.conn.recv(65536)
                if not data:
                    return None
                self._buf.extend(data)
                continue
            fin, opcode, payload = frame
            if opcode == 0x8:  # close
                return None
            if opcode == 0x9:  # ping -> pong
                header = bytes([0x8A, len(payload)]) if len(payload) < 126 \
                    else bytes([0x8A, 126]) + struct.pack(">H", len(payload))
                self.conn.sendall(header + payload)
                continue
            if opcode == 0xA:  # pong
                continue
            self._fragments.append(payload)
            if not fin:
                continue
            message = b"".join(self._fragments)
            self._fragments = []
            return message


def _read_http_request(conn: socket.socket):
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = conn.recv(4096)
        if not chunk:
            return None
        data += chunk
        if len(data) > 65536:
            raise ValueError("request too large")
    head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    lines = head.split("\r\n")
    parts = lines[0].split(" ")
    if len(parts) != 3 or parts[0] != "GET":
        raise ValueError("only GET supported")
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            headers[k.strip().lower()] = v.strip()
    return parts[1], headers


_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".json": "application/json",
    ".csv": "text/csv",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json",
    ".wav": "audio/wav",
}


def _serve_static(conn: socket.socket, path: str, static_dir: str | None):
    if static_dir is None:
        _http_response(conn, 404, b"no static directory configured")
        return
    rel = path.split("?")[0].lstrip("/") or "index.html"
    root = os.path.abspath(static_dir)
    full = os.path.abspath(os.path.join(root, rel))
    if full != root and not full.startswith(root + os.sep):
        _http_response(conn, 403, b"forbidden")
        return
    if os.path.isdir(full):
        full = os.path.join(full, "index.html")
    if not os.path.isfile(full):
        _http_response(conn, 404, b"not found")
        return
    with open(full, "rb") as fh:
        body = fh.read()
    ext = os.path.splitext(full)[1].lower()
    ctype = _CONTENT_TYPES.get(ext, "application/octet-stream")
    _http_response(conn, 200, body, ctype)


def _http_response(conn: socket.socket, status: int, body: bytes,
                   ctype: str = "text/plain") -> None:
    reason = {200: "OK", 403: "Forbidden", 404: "Not Found"}.get(status, "?")
    head = (
        f"HTTP/1.1 {status} {reason}\r\n"
        f"Content-Type: {ctype}\r\n"
        f"Content-Length: {len(body)}\r\n"
        "Connection: close\r\n\r\n"
    )
    try:
        conn.sendall(head.encode("ascii") + body)
    except OSError:
        pass
