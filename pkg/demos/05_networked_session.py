"""A scripted client session against a live server.

Starts a lockstep server in-process, connects over TCP like any external
tool would, spawns a vehicle and a walker, drives both for two seconds of
simulated time and prints what the broadcast snapshots show. The same
messages flow over the web-socket endpoint for the browser client.
"""

import socket
import threading

from hilsim.protocol import (
    ActorSpawned,
    FrameDecoder,
    Hello,
    SnapshotMsg,
    SpawnActor,
    Tick,
    VehicleControlMsg,
    WalkerControlMsg,
    encode_frame,
)
from hilsim.server import Server
from hilsim.world import World


def send(sock, msg):
    sock.sendall(encode_frame(msg))


def pump(sock, decoder, inbox):
    data = sock.recv(65536)
    if data:
        inbox.extend(decoder.feed(data))


server = Server(World(), mode="lockstep", port=0, ws_port=0)
server.start()
print(f"lockstep server on tcp:{server.port} ws:{server.ws_port}")

sock = socket.create_connection(("127.0.0.1", server.port))
decoder = FrameDecoder()
inbox = []

send(sock, Hello(role="authority"))
pump(sock, decoder, inbox)
print("handshake:", inbox.pop(0))

send(sock, SpawnActor(blueprint="vehicle.sedan", transform=(0, 0, 0, 0, 0, 0)))
send(sock, SpawnActor(blueprint="walker.avatar", transform=(15, 3, 0, 0, 0, 0)))
while len(inbox) < 2:
    pump(sock, decoder, inbox)
car = inbox.pop(0)
walker = inbox.pop(0)
assert isinstance(car, ActorSpawned) and isinstance(walker, ActorSpawned)
print(f"spawned vehicle #{car.id} and walker #{walker.id}")

send(sock, VehicleControlMsg(id=car.id, throttle=0.8))
send(sock, WalkerControlMsg(id=walker.id, direction=(1.0, 0.0), speed=1.4,
                            head_yaw=0.0))

# Tick authority: the world advances only when this session says so.
for _ in range(40):  # 2 s at 20 Hz
    send(sock, Tick())

deadline = 400
while deadline > 0:
    pump(sock, decoder, inbox)
    snapshots = [m for m in inbox if isinstance(m, SnapshotMsg)]
    if snapshots and snapshots[-1].frame >= 40:
        break
    deadline -= 1

for snap in (s for s in inbox if isinstance(s, SnapshotMsg)):
    if snap.frame % 10 == 0:
        v = snap.data["vehicles"][0]
        w = snap.data["walkers"][0]
        print(f"frame {snap.frame:3d}: car x={v['transform'][0]:6.2f} "
              f"v={v['speed']:4.2f} m/s | walker x={w['transform'][0]:6.2f}")

sock.close()
server.stop()
print("session closed")
