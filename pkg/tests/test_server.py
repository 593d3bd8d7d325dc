"""Socket server: handshakes, command validation, lockstep, broadcast."""

import base64
import hashlib
import json
import os
import socket
import struct
import time

import numpy as np
import pytest

from hilsim.geom import Transform
from hilsim.protocol import (
    Ack,
    ActorSpawned,
    ErrorMsg,
    FrameDecoder,
    Hello,
    SnapshotMsg,
    SensorFrame,
    SpawnActor,
    SubscribeSensor,
    Tick,
    VehicleControlMsg,
    WalkerControlMsg,
    Welcome,
    decode_payload,
    encode_frame,
    encode_payload,
)
from hilsim.server import Server, ServerEngine, Session
from hilsim.world import World


class TcpClient:
    def __init__(self, port, timeout=5.0):
        self.sock = socket.create_connection(("127.0.0.1", port),
                                             timeout=timeout)
        self.decoder = FrameDecoder()
        self.inbox = []

    def send(self, msg):
        self.sock.sendall(encode_frame(msg))

    def recv(self, want=1, timeout=5.0):
        deadline = time.monotonic() + timeout
        while len(self.inbox) < want:
            if time.monotonic() > deadline:
                raise TimeoutError(f"only {len(self.inbox)} messages")
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("closed")
            self.inbox.extend(self.decoder.feed(data))
        out, self.inbox = self.inbox[:want], self.inbox[want:]
        return out if want > 1 else out[0]

    def drain_until(self, predicate, timeout=5.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.inbox:
                msg = self.inbox.pop(0)
                if predicate(msg):
                    return msg
                continue
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("closed")
            self.inbox.extend(self.decoder.feed(data))
        raise TimeoutError("predicate never matched")

    def close(self):
        self.sock.close()


@pytest.fixture
def lockstep_server():
    world = World()
    server = Server(world, mode="lockstep", port=0, ws_port=0)
    server.start()
    yield server
    server.stop()


@pytest.fixture
def realtime_server():
    world = World()
    server = Server(world, mode="realtime", port=0, ws_port=0)
    server.start()
    yield server
    server.stop()


# -- engine-level handling (no sockets) ----------------------------------------


def make_session(engine):
    session = engine.register_session(None)
    return session


def test_hello_welcome():
    engine = ServerEngine(World(), mode="lockstep")
    session = make_session(engine)
    (reply,) = engine.handle_message(session, Hello(role="ui"))
    assert isinstance(reply, Welcome)
    assert reply.tick_hz == pytest.approx(20.0)
    assert reply.session_id == session.id


def test_command_before_hello_rejected():
    engine = ServerEngine(World(), mode="lockstep")
    session = make_session(engine)
    (reply,) = engine.handle_message(session, Tick())
    assert isinstance(reply, ErrorMsg)
    assert reply.code == "protocol-state"


def test_spawn_and_vehicle_control_ack():
    engine = ServerEngine(World(), mode="lockstep")
    session = make_session(engine)
    engine.handle_message(session, Hello())
    (spawned,) = engine.handle_message(
        session, SpawnActor(blueprint="vehicle.sedan",
                            transform=(0, 0, 0, 0, 0, 0)))
    assert isinstance(spawned, ActorSpawned)
    (ack,) = engine.handle_message(
        session, VehicleControlMsg(id=spawned.id, throttle=0.4))
    assert isinstance(ack, Ack)


def test_vehicle_control_to_walker_is_wrong_kind():
    engine = ServerEngine(World(), mode="lockstep")
    session = make_session(engine)
    engine.handle_message(session, Hello())
    (spawned,) = engine.handle_message(
        session, SpawnActor(blueprint="walker.avatar",
                            transform=(0, 0, 0, 0, 0, 0)))
    (reply,) = engine.handle_message(
        session, VehicleControlMsg(id=spawned.id, throttle=1.0))
    assert isinstance(reply, ErrorMsg)
    assert reply.code == "wrong-actor-kind"


def test_unknown_actor_control():
    engine = ServerEngine(World(), mode="lockstep")
    session = make_session(engine)
    engine.handle_message(session, Hello())
    (reply,) = engine.handle_message(session, VehicleControlMsg(id=99))
    assert reply.code == "unknown-actor"


def test_tick_requires_authority_in_lockstep():
    engine = ServerEngine(World(), mode="lockstep")
    boss = make_session(engine)
    guest = make_session(engine)
    engine.handle_message(boss, Hello(role="authority"))
    engine.handle_message(guest, Hello(role="ui"))
    (err,) = engine.handle_message(guest, Tick())
    assert err.code == "not-authorized"
    (ack,) = engine.handle_message(boss, Tick())
    assert isinstance(ack, Ack)
    assert engine.world.frame == 1


def test_tick_rejected_in_realtime():
    engine = ServerEngine(World(), mode="realtime")
    session = make_session(engine)
    engine.handle_message(session, Hello(role="authority"))
    (err,) = engine.handle_message(session, Tick())
    assert err.code == "not-authorized"


def test_broadcast_frame_order_no_gaps():
    engine = ServerEngine(World(), mode="lockstep")
    session = make_session(engine)
    engine.handle_message(session, Hello(role="authority"))
    for _ in range(10):
        engine.handle_message(session, Tick())
    frames = []
    while not session.outbox.empty():
        msg = session.outbox.get_nowait()
        if isinstance(msg, SnapshotMsg):
            frames.append(msg.frame)
    assert frames == list(range(1, 11))


def test_slow_session_disconnected_others_unaffected():
    engine = ServerEngine(World(), mode="lockstep")
    boss = make_session(engine)
    slow = make_session(engine)
    engine.handle_message(boss, Hello(role="authority"))
    engine.handle_message(slow, Hello(role="ui"))
    # never drain `slow`; overflow at 64 queued frames drops it
    for _ in range(80):
        engine.handle_message(boss, Tick())
        while not boss.outbox.empty():
            boss.outbox.get_nowait()
    assert slow.id not in engine.sessions
    assert boss.id in engine.sessions
    assert engine.world.frame == 80


def test_sensor_subscription_gets_frames():
    engine = ServerEngine(World(), mode="lockstep")
    session = make_session(engine)
    engine.handle_message(session, Hello(role="authority"))
    engine.handle_message(session, SpawnActor(blueprint="walker.avatar",
                                              transform=(5, 0, 0, 0, 0, 0)))
    (ack,) = engine.handle_message(
        session,
        SubscribeSensor(sensor_kind="lidar",
                        config={"channels": 2, "h_steps": 90,
                                "v_fov": (-10.0, 0.0),
                                "mount": [0, 0, 1.8, 0, 0, 0]}))
    assert ack.ref.startswith("sensor:")
    engine.handle_message(session, Tick())
    got_snapshot = got_sensor = False
    while not session.outbox.empty():
        msg = session.outbox.get_nowait()
        if isinstance(msg, SnapshotMsg):
            got_snapshot = True
        if isinstance(msg, SensorFrame):
            got_sensor = True
            assert msg.kind == "lidar"
            assert msg.data["count"] > 0
    assert got_snapshot and got_sensor


def test_routed_vehicle_drives_itself_through_engine_ticks():
    from hilsim.scenario import crosswalk_map
    from hilsim.traffic import Route
    import numpy as np

    world = World(road_map=crosswalk_map())
    world.spawn_actor("vehicle.sedan", Transform(), speed=10.0,
                      route=Route(np.array([[0.0, 0.0], [150.0, 0.0]]), 10.0))
    world.spawn_actor("walker.avatar", Transform(60.0, -1.0, 0.0),
                      direction=(0.0, 1.0))
    engine = ServerEngine(world, mode="lockstep")
    boss = engine.register_session(None)
    engine.handle_message(boss, Hello(role="authority"))
    for _ in range(200):  # 10 s: plenty to reach and yield
        engine.handle_message(boss, Tick())
    av = world.latest.vehicles[0]
    assert av.speed < 0.05
    assert av.ehmi.mode == "stopped"
    assert av.transform.x < 54.0  # held before the stop line


# -- TCP transport ------------------------------------------------------------------


def test_tcp_session_round_trip(lockstep_server):
    client = TcpClient(lockstep_server.port)
    client.send(Hello(role="authority"))
    welcome = client.recv()
    assert isinstance(welcome, Welcome)
    client.send(SpawnActor(blueprint="vehicle.sedan",
                           transform=(0, 0, 0, 0, 0, 0)))
    spawned = client.recv()
    assert isinstance(spawned, ActorSpawned)
    client.send(Tick())
    msgs = client.recv(want=2)
    kinds = {type(m) for m in msgs}
    assert kinds == {Ack, SnapshotMsg}
    client.close()


def test_tcp_three_subscribers_same_frame(lockstep_server):
    boss = TcpClient(lockstep_server.port)
    boss.send(Hello(role="authority"))
    boss.recv()
    watchers = []
    for _ in range(2):
        w = TcpClient(lockstep_server.port)
        w.send(Hello(role="ui"))
        w.recv()
        watchers.append(w)
    boss.send(Tick())
    frames = []
    snap = boss.drain_until(lambda m: isinstance(m, SnapshotMsg))
    frames.append(snap.frame)
    for w in watchers:
        snap = w.drain_until(lambda m: isinstance(m, SnapshotMsg))
        frames.append(snap.frame)
    assert frames == [1, 1, 1]
    boss.close()
    for w in watchers:
        w.close()


def test_realtime_server_broadcasts_unprompted(realtime_server):
    client = TcpClient(realtime_server.port)
    client.send(Hello(role="ui"))
    client.recv()
    first = client.drain_until(lambda m: isinstance(m, SnapshotMsg))
    second = client.drain_until(lambda m: isinstance(m, SnapshotMsg))
    assert second.frame == first.frame + 1
    client.close()


# -- WebSocket transport ---------------------------------------------------------------


class WsClient:
    """Minimal RFC 6455 client for tests."""

    def __init__(self, port, path="/ws", timeout=5.0):
        self.sock = socket.create_connection(("127.0.0.1", port),
                                             timeout=timeout)
        key = base64.b64encode(os.urandom(16)).decode()
        request = (
            f"GET {path} HTTP/1.1\r\nHost: localhost\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
        )
        self.sock.sendall(request.encode())
        response = b""
        while b"\r\n\r\n" not in response:
            response += self.sock.recv(4096)
        assert b"101" in response.split(b"\r\n")[0]
        guid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
        expect = base64.b64encode(
            hashlib.sha1((key + guid).encode()).digest()).decode()
        assert expect.encode() in response
        self._buf = response.split(b"\r\n\r\n", 1)[1]

    def send(self, msg):
        payload = encode_payload(msg)
        mask = os.urandom(4)
        header = bytearray([0x81])
        n = len(payload)
        if n < 126:
            header.append(0x80 | n)
        elif n < 65536:
            header.append(0x80 | 126)
            header.extend(struct.pack(">H", n))
        else:
            header.append(0x80 | 127)
            header.extend(struct.pack(">Q", n))
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        self.sock.sendall(bytes(header) + mask + masked)

    def _read_exact(self, n):
        while len(self._buf) < n:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("closed")
            self._buf += chunk
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def recv(self):
        head = self._read_exact(2)
        opcode = head[0] & 0x0F
        length = head[1] & 0x7F
        if length == 126:
            (length,) = struct.unpack(">H", self._read_exact(2))
        elif length == 127:
            (length,) = struct.unpack(">Q", self._read_exact(8))
        data = self._read_exact(length)
        if opcode == 0x8:
            raise ConnectionError("server closed")
        return decode_payload(data)

    def recv_until(self, predicate, timeout=5.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            msg = self.recv()
            if predicate(msg):
                return msg
        raise TimeoutError

    def close(self):
        self.sock.close()


def test_websocket_handshake_and_messages(realtime_server):
    with realtime_server.engine.lock:
        wid = realtime_server.engine.world.spawn_actor(
            "walker.avatar", Transform())
    ws = WsClient(realtime_server.ws_port)
    ws.send(Hello(role="ui"))
    welcome = ws.recv()
    assert isinstance(welcome, Welcome)
    ws.send(WalkerControlMsg(id=wid, direction=(1.0, 0.0), speed=1.4))
    ack = ws.recv_until(lambda m: isinstance(m, Ack))
    assert ack.ref == "walker_control"
    snap = ws.recv_until(lambda m: isinstance(m, SnapshotMsg))
    assert snap.data["walkers"][0]["id"] == wid
    ws.close()


def test_websocket_survives_slow_split_frames(realtime_server):
    # A frame delivered in two TCP segments with a pause longer than the
    # server's 0.2 s read timeout must still parse (no desync).
    ws = WsClient(realtime_server.ws_port)
    payload = encode_payload(Hello(role="ui"))
    mask = os.urandom(4)
    header = bytearray([0x81, 0x80 | len(payload)])
    masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    wire = bytes(header) + mask + masked
    ws.sock.sendall(wire[:5])
    time.sleep(0.5)  # longer than the server-side socket timeout
    ws.sock.sendall(wire[5:])
    welcome = ws.recv()
    assert isinstance(welcome, Welcome)
    ws.close()


def test_websocket_fragmented_message(realtime_server):
    # Two continuation fragments carrying one JSON message.
    ws = WsClient(realtime_server.ws_port)
    payload = encode_payload(Hello(role="ui"))
    half = len(payload) // 2
    fragments = [(0x01, payload[:half]),   # text, FIN=0
                 (0x80, payload[half:])]   # continuation, FIN=1
    for fin_op, data in fragments:
        mask = os.urandom(4)
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(data))
        frame = bytes([fin_op, 0x80 | len(data)]) + mask + masked
        ws.sock.sendall(frame)
    welcome = ws.recv()
    assert isinstance(welcome, Welcome)
    ws.close()


def test_websocket_and_tcp_share_one_world(realtime_server):
    tcp = TcpClient(realtime_server.port)
    tcp.send(Hello(role="ui"))
    tcp.recv()
    tcp.send(SpawnActor(blueprint="vehicle.sedan",
                        transform=(3, 0, 0, 0, 0, 0)))
    spawned = tcp.drain_until(lambda m: isinstance(m, ActorSpawned))
    ws = WsClient(realtime_server.ws_port)
    ws.send(Hello(role="ui"))
    ws.recv()
    snap = ws.recv_until(lambda m: isinstance(m, SnapshotMsg))
    assert any(v["id"] == spawned.id for v in snap.data["vehicles"])
    tcp.close()
    ws.close()


def test_static_file_serving(tmp_path):
    (tmp_path / "index.html").write_text("<html>ui</html>")
    world = World()
    server = Server(world, mode="realtime", port=0, ws_port=0,
                    static_dir=str(tmp_path))
    server.start()
    try:
        sock = socket.create_connection(("127.0.0.1", server.ws_port),
                                        timeout=5.0)
        sock.sendall(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n")
        data = b""
        while b"</html>" not in data:
            chunk = sock.recv(4096)
            if not chunk:
                break
            data += chunk
        assert b"200 OK" in data
        assert b"<html>ui</html>" in data
        sock.close()
        # missing file -> 404
        sock = socket.create_connection(("127.0.0.1", server.ws_port),
                                        timeout=5.0)
        sock.sendall(b"GET /nope.js HTTP/1.1\r\nHost: x\r\n\r\n")
        data = sock.recv(65536)
        assert b"404" in data
        sock.close()
    finally:
        server.stop()


def test_map_json_endpoint():
    from hilsim.scenario import crosswalk_map

    world = World(road_map=crosswalk_map())
    server = Server(world, mode="realtime", port=0, ws_port=0)
    server.start()
    try:
        sock = socket.create_connection(("127.0.0.1", server.ws_port),
                                        timeout=5.0)
        sock.sendall(b"GET /map.json HTTP/1.1\r\nHost: x\r\n\r\n")
        data = b""
        while True:
            chunk = sock.recv(65536)
            if not chunk:
                break
            data += chunk
        sock.close()
        assert b"200 OK" in data
        body = data.split(b"\r\n\r\n", 1)[1]
        doc = json.loads(body)
        assert len(doc["segments"]) == 1
        assert len(doc["crosswalks"]) == 1
    finally:
        server.stop()


def test_path_traversal_blocked(tmp_path):
    (tmp_path / "index.html").write_text("ok")
    world = World()
    server = Server(world, mode="realtime", port=0, ws_port=0,
                    static_dir=str(tmp_path))
    server.start()
    try:
        sock = socket.create_connection(("127.0.0.1", server.ws_port),
                                        timeout=5.0)
        sock.sendall(b"GET /../../../etc/passwd HTTP/1.1\r\nHost: x\r\n\r\n")
        data = sock.recv(65536)
        assert b"403" in data or b"404" in data
        sock.close()
    finally:
        server.stop()
