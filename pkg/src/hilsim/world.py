"""World state and the deterministic fixed-step tick loop.

All mutation happens inside ``World.step``; external inputs (controls,
spawns from the network, parameter changes) enter through a command queue
that is drained at the start of the next tick, making each tick a
transaction.  Snapshots are immutable values safe to hand to any thread.

Two runs from the same map, seed and command log produce byte-identical
snapshot sequences: actors advance in id order and all arithmetic is
plain float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .avatar import (
    DEFAULT_RIG,
    AvatarRig,
    Capsule,
    FusionConfig,
    TrackerSample,
    avatar_capsules,
    compose_avatar,
)
from .audio import AudioCue, AudioSource, listener_cues
from .bvh import BvhClip, SkeletonPose, fk
from .geom import Transform, normalize_angle
from .roads import RoadMap, TrafficLightSpec
from .sensors import SceneGeometry
from .traffic import (
    BicycleParams,
    EhmiState,
    Route,
    TrafficParams,
    VehicleControl,
    bicycle_step,
    ehmi_update,
    plan_vehicle,
)

DEFAULT_DT = 0.05  # s (20 Hz)
WALKER_RADIUS = 0.3  # m footprint disc
HOLD_SPEED = 0.05  # m/s: "complete stop" threshold

BLUEPRINTS = {
    "vehicle.sedan": {
        "wheelbase": 2.7,
        "half_extents": (2.35, 0.95, 0.75),
    },
    "walker.avatar": {
        "radius": WALKER_RADIUS,
        "height": 1.8,
    },
    "light.standard": {
        "pole_radius": 0.15,
        "pole_height": 4.0,
    },
    "prop.box": {
        "half_extents": (0.5, 0.5, 0.5),
    },
}


class WorldError(RuntimeError):
    pass


class UnknownBlueprintError(WorldError):
    pass


class SpawnOverlapError(WorldError):
    pass


@dataclass(frozen=True)
class VehicleState:
    id: int
    transform: Transform
    speed: float
    wheelbase: float
    half_extents: tuple[float, float, float]
    control: VehicleControl
    ehmi: EhmiState

    def __post_init__(self):
        # NaN passes both (frozen by the world's fault handling, not here).
        if self.speed < 0.0:
            raise ValueError("speed must be >= 0")
        if self.wheelbase <= 0.0:
            raise ValueError("wheelbase must be > 0")
        if any(h <= 0.0 for h in self.half_extents):
            raise ValueError("half_extents must all be > 0")


@dataclass(frozen=True)
class WalkerState:
    id: int
    transform: Transform
    speed: float
    direction: tuple[float, float]
    drive_mode: str  # ui-drive | bvh-replay | live-fusion
    pose: SkeletonPose | None

    def __post_init__(self):
        norm = math.hypot(self.direction[0], self.direction[1])
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"direction must be a unit vector, norm {norm}")
        if self.drive_mode not in ("ui-drive", "bvh-replay", "live-fusion"):
            raise ValueError(f"unknown drive mode '{self.drive_mode}'")


@dataclass(frozen=True)
class TrafficLightState:
    id: int
    transform: Transform
    phase: str  # red | green | amber
    remaining: float
    durations: dict[str, float]
    stop_line: np.ndarray  # (2, 2)


@dataclass(frozen=True)
class PropState:
    id: int
    transform: Transform
    half_extents: tuple[float, float, float]


@dataclass(frozen=True)
class Event:
    kind: str
    actors: tuple[int, ...]
    data: dict


@dataclass(frozen=True)
class WorldSnapshot:
    frame: int
    sim_time: float
    rng_seed: int
    vehicles: tuple[VehicleState, ...]
    walkers: tuple[WalkerState, ...]
    lights: tuple[TrafficLightState, ...]
    props: tuple[PropState, ...]
    events: tuple[Event, ...]
    audio: tuple[AudioCue, ...]


_PHASE_NEXT = {"red": "green", "green": "amber", "amber": "red"}


def traffic_light_step(light: TrafficLightState, dt: float) -> TrafficLightState:
    """Count the phase timer down; cycle red -> green -> amber on expiry."""
    remaining = light.remaining - dt
    if remaining > 1e-9:
        return replace(light, remaining=remaining)
    phase = _PHASE_NEXT[light.phase]
    return replace(light, phase=phase, remaining=light.durations[phase])


# ---------------------------------------------------------------------------
# 2D footprint overlap


def _rect_axes(transform: Transform):
    c, s = math.cos(transform.yaw), math.sin(transform.yaw)
    return np.array([[c, s], [-s, c]])  # rows: local x/y axes in world


def rect_disc_penetration(rect_tf: Transform, half: tuple[float, float],
                          center, radius: float) -> float:
    """Penetration depth of a disc into an oriented rectangle (2D)."""
    axes = _rect_axes(rect_tf)
    rel = np.array([center[0] - rect_tf.x, center[1] - rect_tf.y])
    local = axes @ rel
    he = np.array(half[:2])
    clamped = np.clip(local, -he, he)
    if np.all(clamped == local):
        # Disc center inside the rectangle.
        return radius + float(np.min(he - np.abs(local)))
    return radius - float(np.linalg.norm(local - clamped))


def rect_rect_penetration(tf_a: Transform, half_a, tf_b: Transform,
                          half_b) -> float:
    """SAT penetration depth of two oriented rectangles (2D)."""
    axes_a = _rect_axes(tf_a)
    axes_b = _rect_axes(tf_b)
    d = np.array([tf_b.x - tf_a.x, tf_b.y - tf_a.y])
    ha = np.array(half_a[:2])
    hb = np.array(half_b[:2])
    depth = math.inf
    for axis in np.vstack([axes_a, axes_b]):
        ra = float(np.abs(axes_a @ axis) @ ha)
        rb = float(np.abs(axes_b @ axis) @ hb)
        overlap = ra + rb - abs(float(np.dot(d, axis)))
        if overlap <= 0.0:
            return overlap
        depth = min(depth, overlap)
    return depth


# ---------------------------------------------------------------------------


class _UiWalkerDriver:
    """UI-steered walker: commanded direction in the avatar frame."""

    def __init__(self, clip: BvhClip | None, stride: float = 1.4):
        self.clip = clip
        self.stride = stride
        self.distance = 0.0
        self.command_dir = (0.0, 0.0)
        self.command_speed = 0.0
        self.heading: float | None = None

    def set_command(self, direction, speed: float, head_yaw: float | None):
        norm = math.hypot(direction[0], direction[1])
        if norm > 0.0:
            self.command_dir = (direction[0] / norm, direction[1] / norm)
        else:
            self.command_dir = (0.0, 0.0)
        self.command_speed = max(0.0, float(speed))
        if head_yaw is not None:
            self.heading = normalize_angle(float(head_yaw))

    def prime(self, walker: WalkerState) -> WalkerState:
        if self.clip is None:
            return walker
        return replace(walker, pose=fk(self.clip, 0, walker.transform))

    def step(self, walker: WalkerState, sim_time: float, frame: int,
             dt: float) -> WalkerState:
        heading = self.heading if self.heading is not None else walker.transform.yaw
        moving = self.command_dir != (0.0, 0.0) and self.command_speed > 0.0
        if moving:
            c, s = math.cos(heading), math.sin(heading)
            wx = c * self.command_dir[0] - s * self.command_dir[1]
            wy = s * self.command_dir[0] + c * self.command_dir[1]
            speed = self.command_speed
            self.distance += speed * dt
            direction = (wx, wy)
        else:
            speed = 0.0
            direction = walker.direction
        tf = walker.transform
        new_tf = Transform(
            x=tf.x + direction[0] * speed * dt,
            y=tf.y + direction[1] * speed * dt,
            z=tf.z,
            yaw=heading,
        )
        pose = None
        if self.clip is not None:
            phase = (self.distance / self.stride) % 1.0
            idx = min(int(phase * self.clip.frame_count),
                      self.clip.frame_count - 1)
            pose = fk(self.clip, idx, new_tf)
        return replace(walker, transform=new_tf, speed=speed,
                       direction=direction, pose=pose)


class _BvhWalkerDriver:
    """Replays a clip; root motion channels carry the walker through the map."""

    def __init__(self, clip: BvhClip, base: Transform):
        self.clip = clip
        self.base = base
        self._last_xy: tuple[float, float] | None = None

    def prime(self, walker: WalkerState) -> WalkerState:
        pose = fk(self.clip, 0, self.base)
        root = pose.positions[0]
        rot = pose.rotations[0]
        yaw = math.atan2(rot[1, 0], rot[0, 0])
        self._last_xy = (float(root[0]), float(root[1]))
        return replace(
            walker,
            transform=Transform(x=float(root[0]), y=float(root[1]), z=0.0,
                                yaw=yaw),
            pose=pose,
        )

    def step(self, walker: WalkerState, sim_time: float, frame: int,
             dt: float) -> WalkerState:
        idx = min(int(round(sim_time / self.clip.frame_time)),
                  self.clip.frame_count - 1)
        pose = fk(self.clip, idx, self.base)
        root = pose.positions[0]
        rot = pose.rotations[0]
        yaw = math.atan2(rot[1, 0], rot[0, 0])
        x, y = float(root[0]), float(root[1])
        if self._last_xy is None:
            speed = 0.0
            direction = walker.direction
        else:
            dx, dy = x - self._last_xy[0], y - self._last_xy[1]
            dist = math.hypot(dx, dy)
            speed = dist / dt
            direction = (dx / dist, dy / dist) if dist > 1e-12 else walker.direction
        self._last_xy = (x, y)
        new_tf = Transform(x=x, y=y, z=0.0, yaw=yaw)
        return replace(walker, transform=new_tf, speed=speed,
                       direction=direction, pose=pose)


class _FusionWalkerDriver:
    """Base motion plus tracker overrides (threshold gating, neck, hands)."""

    def __init__(self, base_driver, samples: list[TrackerSample],
                 config: FusionConfig | None = None):
        self.base = base_driver
        self.samples = sorted(samples, key=lambda s: s.time)
        self.config = config or FusionConfig()
        self.live_sample: TrackerSample | None = None

    def prime(self, walker: WalkerState) -> WalkerState:
        primed = self.base.prime(walker)
        sample = self._sample_at(0.0)
        if primed.pose is None or sample is None:
            return primed
        return replace(primed, pose=compose_avatar(primed.pose, sample,
                                                   self.config))

    def _sample_at(self, sim_time: float) -> TrackerSample | None:
        if self.live_sample is not None:
            return self.live_sample
        chosen = None
        for s in self.samples:
            if s.time <= sim_time + 1e-9:
                chosen = s
            else:
                break
        return chosen

    def step(self, walker: WalkerState, sim_time: float, frame: int,
             dt: float) -> WalkerState:
        stepped = self.base.step(walker, sim_time, frame, dt)
        sample = self._sample_at(sim_time)
        if stepped.pose is None or sample is None:
            return stepped
        pose = compose_avatar(stepped.pose, sample, self.config)
        root = pose.positions[pose.index(self.config.root_joint)]
        new_tf = replace(stepped.transform, x=float(root[0]), y=float(root[1]))
        return replace(stepped, transform=new_tf, pose=pose)


class World:
    """Owner of all actor state; advances in fixed, deterministic ticks."""

    def __init__(self, road_map: RoadMap | None = None, dt: float = DEFAULT_DT,
                 seed: int = 0, traffic_params: TrafficParams | None = None,
                 bicycle_params: BicycleParams | None = None,
                 bounds: float = 1000.0, rig: AvatarRig = DEFAULT_RIG):
        self.road_map = road_map or RoadMap()
        self.dt = float(dt)
        self.seed = int(seed)
        self.traffic_params = traffic_params or TrafficParams()
        self.bicycle_params = bicycle_params or BicycleParams()
        self.bounds = float(bounds)
        self.rig = rig
        self.frame = 0
        self._next_id = 1
        self._vehicles: dict[int, VehicleState] = {}
        self._walkers: dict[int, WalkerState] = {}
        self._lights: dict[int, TrafficLightState] = {}
        self._props: dict[int, PropState] = {}
        self._routes: dict[int, Route] = {}
        self._drivers: dict[int, object] = {}
        self._manual_controls: dict[int, VehicleControl] = {}
        self._pending: list[tuple] = []
        self._pending_events: list[Event] = []
        self._out_of_bounds: set[int] = set()
        self._frozen: set[int] = set()
        self.avatar_id: int | None = None
        self.ambient_sources = [AudioSource(actor=None, kind="ambient",
                                            base_gain=0.4)]
        self.latest = self._snapshot(events=[])
        for spec in self.road_map.lights:
            self._spawn_light_from_spec(spec)

    # -- actor management ---------------------------------------------------

    def vehicle_states(self) -> list[VehicleState]:
        return [self._vehicles[i] for i in sorted(self._vehicles)]

    def walker_states(self) -> list[WalkerState]:
        return [self._walkers[i] for i in sorted(self._walkers)]

    def light_states(self) -> list[TrafficLightState]:
        return [self._lights[i] for i in sorted(self._lights)]

    def prop_states(self) -> list[PropState]:
        return [self._props[i] for i in sorted(self._props)]

    def route_for(self, actor_id: int) -> Route | None:
        return self._routes.get(actor_id)

    def actor_exists(self, actor_id: int) -> bool:
        return (actor_id in self._vehicles or actor_id in self._walkers
                or actor_id in self._lights or actor_id in self._props)

    def spawn_actor(self, blueprint: str, transform: Transform, **options) -> int:
        """Create an actor; ids are assigned monotonically from 1."""
        if blueprint not in BLUEPRINTS:
            raise UnknownBlueprintError(f"unknown blueprint '{blueprint}'")
        self._check_spawn_overlap(blueprint, transform, options)
        actor_id = self._next_id
        self._next_id += 1
        if blueprint == "vehicle.sedan":
            defaults = BLUEPRINTS[blueprint]
            state = VehicleState(
                id=actor_id,
                transform=transform,
                speed=float(options.get("speed", 0.0)),
                wheelbase=float(options.get("wheelbase", defaults["wheelbase"])),
                half_extents=tuple(options.get("half_extents",
                                               defaults["half_extents"])),
                control=VehicleControl(),
                ehmi=EhmiState(),
            )
            self._vehicles[actor_id] = state
            route = options.get("route")
            if route is not None:
                self._routes[actor_id] = route
        elif blueprint == "walker.avatar":
            state = WalkerState(
                id=actor_id,
                transform=transform,
                speed=0.0,
                direction=tuple(options.get("direction", (1.0, 0.0))),
                drive_mode=options.get("drive_mode", "ui-drive"),
                pose=None,
            )
            driver = self._make_driver(state, options)
            state = driver.prime(state)
            self._walkers[actor_id] = state
            self._drivers[actor_id] = driver
            if self.avatar_id is None:
                self.avatar_id = actor_id
        elif blueprint == "light.standard":
            durations = options.get("durations",
                                    {"red": 10.0, "green": 10.0, "amber": 3.0})
            initial = options.get("initial", "red")
            stop_line = np.asarray(
                options.get("stop_line", [[transform.x, transform.y - 2.0],
                                          [transform.x, transform.y + 2.0]]),
                dtype=float).reshape(2, 2)
            state = TrafficLightState(
                id=actor_id, transform=transform, phase=initial,
                remaining=float(durations[initial]), durations=dict(durations),
                stop_line=stop_line,
            )
            self._lights[actor_id] = state
        else:  # prop.box
            state = PropState(
                id=actor_id,
                transform=transform,
                half_extents=tuple(options.get(
                    "half_extents", BLUEPRINTS["prop.box"]["half_extents"])),
            )
            self._props[actor_id] = state
        self._pending_events.append(
            Event(kind="spawn", actors=(actor_id,), data={"blueprint": blueprint})
        )
        return actor_id

    def destroy_actor(self, actor_id: int) -> None:
        for pool in (self._vehicles, self._walkers, self._lights, self._props):
            if actor_id in pool:
                del pool[actor_id]
                self._routes.pop(actor_id, None)
                self._drivers.pop(actor_id, None)
                self._manual_controls.pop(actor_id, None)
                self._pending_events.append(
                    Event(kind="destroy", actors=(actor_id,), data={})
                )
                if self.avatar_id == actor_id:
                    self.avatar_id = None
                return
        raise WorldError(f"no actor {actor_id}")

    def _make_driver(self, state: WalkerState, options: dict):
        mode = state.drive_mode
        clip = options.get("clip")
        if mode == "ui-drive":
            return _UiWalkerDriver(clip, stride=options.get("stride", 1.4))
        if mode == "bvh-replay":
            if clip is None:
                raise WorldError("bvh-replay walker needs a clip")
            return _BvhWalkerDriver(clip, state.transform)
        if mode == "live-fusion":
            if clip is None:
                raise WorldError("live-fusion walker needs a base clip")
            base = _BvhWalkerDriver(clip, state.transform)
            return _FusionWalkerDriver(base, options.get("tracker_samples", []),
                                       options.get("fusion_config"))
        raise WorldError(f"unknown drive mode '{mode}'")

    def _spawn_light_from_spec(self, spec: TrafficLightSpec) -> int:
        return self.spawn_actor(
            "light.standard",
            Transform(x=float(spec.position[0]), y=float(spec.position[1])),
            durations=spec.durations,
            initial=spec.initial,
            stop_line=spec.stop_line,
        )

    def _footprints(self):
        out = []
        for v in self.vehicle_states():
            out.append(("rect", v.id, v.transform, v.half_extents[:2]))
        for p in self.prop_states():
            out.append(("rect", p.id, p.transform, p.half_extents[:2]))
        for w in self.walker_states():
            out.append(("disc", w.id, w.transform, WALKER_RADIUS))
        return out

    def _check_spawn_overlap(self, blueprint: str, transform: Transform,
                             options: dict) -> None:
        if blueprint == "vehicle.sedan":
            half = tuple(options.get("half_extents",
                                     BLUEPRINTS[blueprint]["half_extents"]))
            new = ("rect", transform, half[:2])
        elif blueprint == "prop.box":
            half = tuple(options.get("half_extents",
                                     BLUEPRINTS[blueprint]["half_extents"]))
            new = ("rect", transform, half[:2])
        elif blueprint == "walker.avatar":
            new = ("disc", transform, WALKER_RADIUS)
        else:
            return  # lights are scenery poles, no footprint check
        for kind, other_id, tf, size in self._footprints():
            depth = _footprint_penetration(new, (kind, tf, size))
            if depth > 0.0:
                raise SpawnOverlapError(
                    f"spawn overlaps actor {other_id} by {depth:.3f} m"
                )

    # -- command queue ------------------------------------------------------

    def queue_vehicle_control(self, actor_id: int, control: VehicleControl):
        self._pending.append(("vehicle_control", actor_id, control))

    def queue_walker_control(self, actor_id: int, direction, speed: float,
                             head_yaw: float | None = None):
        self._pending.append(("walker_control", actor_id, direction, speed,
                              head_yaw))

    def queue_traffic_params(self, params: TrafficParams):
        self._pending.append(("traffic_params", params))

    def queue_avatar_pose(self, actor_id: int, pose: SkeletonPose):
        self._pending.append(("avatar_pose", actor_id, pose))

    def queue_tracker_sample(self, actor_id: int, sample: TrackerSample):
        self._pending.append(("tracker_sample", actor_id, sample))

    def _apply_pending(self) -> dict[int, SkeletonPose]:
        injected: dict[int, SkeletonPose] = {}
        for command in self._pending:
            kind = command[0]
            if kind == "vehicle_control":
                _, actor_id, control = command
                if actor_id in self._vehicles:
                    self._manual_controls[actor_id] = control
            elif kind == "walker_control":
                _, actor_id, direction, speed, head_yaw = command
                driver = self._drivers.get(actor_id)
                if isinstance(driver, _UiWalkerDriver):
                    driver.set_command(direction, speed, head_yaw)
                elif isinstance(driver, _FusionWalkerDriver) and \
                        isinstance(driver.base, _UiWalkerDriver):
                    driver.base.set_command(direction, speed, head_yaw)
            elif kind == "traffic_params":
                self.traffic_params = command[1]
            elif kind == "avatar_pose":
                _, actor_id, pose = command
                if actor_id in self._walkers:
                    injected[actor_id] = pose
            elif kind == "tracker_sample":
                _, actor_id, sample = command
                driver = self._drivers.get(actor_id)
                if isinstance(driver, _FusionWalkerDriver):
                    driver.live_sample = sample
        self._pending.clear()
        return injected

    # -- tick ---------------------------------------------------------------

    def step(self, dt: float | None = None) -> WorldSnapshot:
        """Advance one tick and return the immutable snapshot."""
        if dt is not None and abs(dt - self.dt) > 1e-12:
            raise WorldError(
                f"dt {dt} does not match the run's fixed step {self.dt}"
            )
        dt = self.dt
        self.frame += 1
        sim_time = self.frame * dt
        events: list[Event] = list(self._pending_events)
        self._pending_events = []
        injected_poses = self._apply_pending()

        walkers = self.walker_states()
        lights = self.light_states()
        for vid in sorted(self._vehicles):
            vehicle = self._vehicles[vid]
            if vid in self._frozen:
                continue
            if not _state_finite(vehicle):
                events.append(self._freeze(vid))
                continue
            route = self._routes.get(vid)
            if route is not None:
                plan = plan_vehicle(vehicle, walkers, lights, self.road_map,
                                    route, self.traffic_params,
                                    self.bicycle_params)
                control = plan.control
                yielding = plan.yielding
            else:
                control = self._manual_controls.get(vid, vehicle.control)
                yielding = False
            new_state = bicycle_step(vehicle, control, dt, self.bicycle_params)
            if not _state_finite(new_state):
                events.append(self._freeze(vid))
                new_state = vehicle
            ehmi = ehmi_update(vehicle.ehmi, yielding, new_state.speed)
            if ehmi.mode == "stopped" and vehicle.ehmi.mode != "stopped":
                events.append(Event(kind="complete-stop", actors=(vid,),
                                    data={"speed": new_state.speed}))
            self._vehicles[vid] = replace(new_state, ehmi=ehmi)

        for wid in sorted(self._walkers):
            walker = self._walkers[wid]
            if wid in self._frozen:
                continue
            if not _walker_finite(walker):
                events.append(self._freeze(wid))
                continue
            driver = self._drivers.get(wid)
            if driver is not None:
                walker = driver.step(walker, sim_time, self.frame, dt)
            if wid in injected_poses:
                pose = injected_poses[wid]
                root = pose.positions[0]
                walker = replace(
                    walker,
                    transform=replace(walker.transform, x=float(root[0]),
                                      y=float(root[1])),
                    pose=pose,
                )
            if not _walker_finite(walker):
                events.append(self._freeze(wid))
                walker = self._walkers[wid]
            self._walkers[wid] = walker

        for lid in sorted(self._lights):
            self._lights[lid] = traffic_light_step(self._lights[lid], dt)

        events.extend(self.detect_collisions())
        events.extend(self._bounds_events())

        snapshot = self._snapshot(events, sim_time=sim_time)
        self.latest = snapshot
        return snapshot

    def _freeze(self, actor_id: int) -> Event:
        self._frozen.add(actor_id)
        return Event(kind="fault", actors=(actor_id,),
                     data={"reason": "non-finite state"})

    def detect_collisions(self) -> list[Event]:
        """Overlapping footprint pairs with positive penetration depth."""
        events = []
        footprints = self._footprints()
        for i in range(len(footprints)):
            for j in range(i + 1, len(footprints)):
                kind_a, id_a, tf_a, size_a = footprints[i]
                kind_b, id_b, tf_b, size_b = footprints[j]
                if kind_a == "disc" and kind_b == "disc":
                    continue  # walkers pass each other
                depth = _footprint_penetration(
                    (kind_a, tf_a, size_a), (kind_b, tf_b, size_b)
                )
                if depth > 0.0:
                    pair = tuple(sorted((id_a, id_b)))
                    events.append(Event(kind="collision", actors=pair,
                                        data={"depth": depth}))
        return events

    def _bounds_events(self) -> list[Event]:
        events = []
        for states in (self.vehicle_states(), self.walker_states()):
            for actor in states:
                outside = (abs(actor.transform.x) > self.bounds
                           or abs(actor.transform.y) > self.bounds)
                if outside and actor.id not in self._out_of_bounds:
                    self._out_of_bounds.add(actor.id)
                    events.append(Event(kind="out-of-bounds",
                                        actors=(actor.id,), data={}))
                elif not outside:
                    self._out_of_bounds.discard(actor.id)
        return events

    # -- snapshot assembly ----------------------------------------------------

    def _audio_cues(self) -> tuple[AudioCue, ...]:
        if self.avatar_id is None or self.avatar_id not in self._walkers:
            return ()
        listener = self._walkers[self.avatar_id].transform
        sources = list(self.ambient_sources)
        positions = {}
        controls = {}
        for v in self.vehicle_states():
            sources.append(AudioSource(actor=v.id, kind="engine"))
            positions[v.id] = (v.transform.x, v.transform.y)
            controls[v.id] = v.control
        for w in self.walker_states():
            if w.id == self.avatar_id:
                continue
            sources.append(AudioSource(actor=w.id, kind="footsteps",
                                       base_gain=0.6))
            positions[w.id] = (w.transform.x, w.transform.y)
        return tuple(listener_cues(listener, sources, positions, controls))

    def _snapshot(self, events, sim_time: float | None = None) -> WorldSnapshot:
        return WorldSnapshot(
            frame=self.frame,
            sim_time=self.frame * self.dt if sim_time is None else sim_time,
            rng_seed=self.seed,
            vehicles=tuple(self.vehicle_states()),
            walkers=tuple(self.walker_states()),
            lights=tuple(self.light_states()),
            props=tuple(self.prop_states()),
            events=tuple(events),
            audio=self._audio_cues(),
        )

    def snapshot(self) -> WorldSnapshot:
        """Fresh snapshot of the current state (no tick advance)."""
        snapshot = self._snapshot(events=[])
        self.latest = snapshot
        return snapshot

    # -- sensing ------------------------------------------------------------

    def build_scene(self, exclude_actor: int | None = None) -> SceneGeometry:
        return scene_from_snapshot(self.latest, self.rig,
                                   exclude_actor=exclude_actor)


def scene_from_snapshot(snapshot: WorldSnapshot, rig: AvatarRig = DEFAULT_RIG,
                        exclude_actor: int | None = None) -> SceneGeometry:
    """Analytic sensing scene: ground plane, vehicle boxes, avatar capsules."""
    scene = SceneGeometry()
    scene.add_ground(0.0, "road")
    for v in snapshot.vehicles:
        if v.id == exclude_actor:
            continue
        center = replace(v.transform, z=v.transform.z + v.half_extents[2])
        scene.add_box(center.position, center.rotation(), v.half_extents,
                      "vehicle", v.id)
    for p in snapshot.props:
        center = replace(p.transform, z=p.transform.z + p.half_extents[2])
        scene.add_box(center.position, center.rotation(), p.half_extents,
                      "building", p.id)
    for light in snapshot.lights:
        pole = BLUEPRINTS["light.standard"]
        center = replace(light.transform, z=pole["pole_height"] / 2.0)
        scene.add_box(center.position, center.rotation(),
                      (pole["pole_radius"], pole["pole_radius"],
                       pole["pole_height"] / 2.0),
                      "pole", light.id)
    for w in snapshot.walkers:
        if w.id == exclude_actor:
            continue
        if w.pose is not None:
            for capsule in avatar_capsules(w.pose, rig, actor=w.id):
                scene.add_capsule(capsule)
        else:
            scene.add_capsule(Capsule(
                p0=np.array([w.transform.x, w.transform.y, WALKER_RADIUS]),
                p1=np.array([w.transform.x, w.transform.y,
                             BLUEPRINTS["walker.avatar"]["height"]
                             - WALKER_RADIUS]),
                radius=WALKER_RADIUS,
                label="pedestrian",
                actor=w.id,
            ))
    return scene


def _footprint_penetration(a, b) -> float:
    kind_a, tf_a, size_a = a
    kind_b, tf_b, size_b = b
    if kind_a == "rect" and kind_b == "rect":
        return rect_rect_penetration(tf_a, size_a, tf_b, size_b)
    if kind_a == "rect" and kind_b == "disc":
        return rect_disc_penetration(tf_a, size_a, (tf_b.x, tf_b.y), size_b)
    if kind_a == "disc" and kind_b == "rect":
        return rect_disc_penetration(tf_b, size_b, (tf_a.x, tf_a.y), size_a)
    da = math.hypot(tf_a.x - tf_b.x, tf_a.y - tf_b.y)
    return size_a + size_b - da


def _state_finite(state: VehicleState) -> bool:
    tf = state.transform
    return all(math.isfinite(v) for v in
               (tf.x, tf.y, tf.z, tf.yaw, state.speed))


def _walker_finite(state: WalkerState) -> bool:
    tf = state.transform
    if not all(math.isfinite(v) for v in (tf.x, tf.y, tf.z, tf.yaw)):
        return False
    if state.pose is not None and not np.all(np.isfinite(state.pose.positions)):
        return False
    return True


# ---------------------------------------------------------------------------
# Snapshot serialization.  Dicts are built in a fixed key order and floats
# rely on repr round-tripping, so equal snapshots serialize to equal bytes.


def snapshot_to_dict(snapshot: WorldSnapshot) -> dict:
    return {
        "frame": snapshot.frame,
        "sim_time": snapshot.sim_time,
        "rng_seed": snapshot.rng_seed,
        "vehicles": [_vehicle_to_dict(v) for v in snapshot.vehicles],
        "walkers": [_walker_to_dict(w) for w in snapshot.walkers],
        "lights": [_light_to_dict(l) for l in snapshot.lights],
        "props": [_prop_to_dict(p) for p in snapshot.props],
        "events": [
            {"kind": e.kind, "actors": list(e.actors), "data": e.data}
            for e in snapshot.events
        ],
        "audio": [
            {
                "actor": c.actor,
                "kind": c.kind,
                "gain": c.gain,
                "pan": c.pan,
                "intensity": c.intensity,
                "brake_cue": c.brake_cue,
            }
            for c in snapshot.audio
        ],
    }


def snapshot_from_dict(doc: dict) -> WorldSnapshot:
    return WorldSnapshot(
        frame=int(doc["frame"]),
        sim_time=float(doc["sim_time"]),
        rng_seed=int(doc["rng_seed"]),
        vehicles=tuple(_vehicle_from_dict(v) for v in doc["vehicles"]),
        walkers=tuple(_walker_from_dict(w) for w in doc["walkers"]),
        lights=tuple(_light_from_dict(l) for l in doc["lights"]),
        props=tuple(_prop_from_dict(p) for p in doc["props"]),
        events=tuple(
            Event(kind=e["kind"], actors=tuple(e["actors"]), data=e["data"])
            for e in doc["events"]
        ),
        audio=tuple(
            AudioCue(actor=c["actor"], kind=c["kind"], gain=c["gain"],
                     pan=c["pan"], intensity=c["intensity"],
                     brake_cue=c["brake_cue"])
            for c in doc["audio"]
        ),
    )


def _vehicle_to_dict(v: VehicleState) -> dict:
    return {
        "id": v.id,
        "transform": v.transform.to_list(),
        "speed": v.speed,
        "wheelbase": v.wheelbase,
        "half_extents": list(v.half_extents),
        "control": {"throttle": v.control.throttle, "steer": v.control.steer,
                    "brake": v.control.brake},
        "ehmi": {"mode": v.ehmi.mode, "strip_active": v.ehmi.strip_active,
                 "strip_color": list(v.ehmi.strip_color)},
    }


def _vehicle_from_dict(d: dict) -> VehicleState:
    return VehicleState(
        id=int(d["id"]),
        transform=Transform.from_list(d["transform"]),
        speed=float(d["speed"]),
        wheelbase=float(d["wheelbase"]),
        half_extents=tuple(d["half_extents"]),
        control=VehicleControl(**d["control"]),
        ehmi=EhmiState(mode=d["ehmi"]["mode"],
                       strip_active=d["ehmi"]["strip_active"],
                       strip_color=tuple(d["ehmi"]["strip_color"])),
    )


def _walker_to_dict(w: WalkerState) -> dict:
    doc = {
        "id": w.id,
        "transform": w.transform.to_list(),
        "speed": w.speed,
        "direction": list(w.direction),
        "drive_mode": w.drive_mode,
        "pose": None,
    }
    if w.pose is not None:
        doc["pose"] = {
            "joint_names": list(w.pose.joint_names),
            "positions": w.pose.positions.tolist(),
            "rotations": w.pose.rotations.reshape(-1, 9).tolist(),
        }
    return doc


def _walker_from_dict(d: dict) -> WalkerState:
    pose = None
    if d.get("pose") is not None:
        p = d["pose"]
        pose = SkeletonPose(
            joint_names=tuple(p["joint_names"]),
            positions=np.asarray(p["positions"], dtype=float),
            rotations=np.asarray(p["rotations"], dtype=float).reshape(-1, 3, 3),
        )
    return WalkerState(
        id=int(d["id"]),
        transform=Transform.from_list(d["transform"]),
        speed=float(d["speed"]),
        direction=tuple(d["direction"]),
        drive_mode=d["drive_mode"],
        pose=pose,
    )


def _light_to_dict(l: TrafficLightState) -> dict:
    return {
        "id": l.id,
        "transform": l.transform.to_list(),
        "phase": l.phase,
        "remaining": l.remaining,
        "durations": l.durations,
        "stop_line": l.stop_line.tolist(),
    }


def _light_from_dict(d: dict) -> TrafficLightState:
    return TrafficLightState(
        id=int(d["id"]),
        transform=Transform.from_list(d["transform"]),
        phase=d["phase"],
        remaining=float(d["remaining"]),
        durations={k: float(v) for k, v in d["durations"].items()},
        stop_line=np.asarray(d["stop_line"], dtype=float).reshape(2, 2),
    )


def _prop_to_dict(p: PropState) -> dict:
    return {
        "id": p.id,
        "transform": p.transform.to_list(),
        "half_extents": list(p.half_extents),
    }


def _prop_from_dict(d: dict) -> PropState:
    return PropState(
        id=int(d["id"]),
        transform=Transform.from_list(d["transform"]),
        half_extents=tuple(d["half_extents"]),
    )
