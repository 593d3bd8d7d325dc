"""Declarative scenarios: build a world, run it, record every tick.

A scenario file is JSON: a map reference, an actor roster, traffic
parameters, a duration in ticks and a seed.  ``run_scenario`` is a pure
function of the config: same config + seed means byte-identical logs.

``crosswalk_demo`` is the bundled reference scenario: one autonomous
vehicle approaches a crosswalk while a replayed pedestrian walks in and
waits; the vehicle must come to a complete stop before the stop line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bvh import BvhClip, make_crossing_clip, make_walk_clip, parse_bvh
from .avatar import parse_tracker_stream
from .geom import Transform
from .recording import RecordLog, record_tick
from .roads import RoadMap, parse_opendrive_subset, parse_scene
from .traffic import Route, TrafficParams
from .world import World, rect_disc_penetration

DEMO_CROSSWALK_CENTER_X = 60.0


class ScenarioError(ValueError):
    pass


@dataclass
class ActorSpec:
    blueprint: str
    transform: Transform
    options: dict = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    name: str
    road_map: RoadMap
    map_ref: str
    actors: list[ActorSpec]
    duration: int = 600
    dt: float = 0.05
    seed: int = 0
    traffic_params: TrafficParams = field(default_factory=TrafficParams)
    expect: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.duration < 1:
            raise ScenarioError("duration must be >= 1 tick")
        bounds = _map_bounds(self.road_map)
        for actor in self.actors:
            x, y = actor.transform.x, actor.transform.y
            if not (bounds[0] <= x <= bounds[2] and bounds[1] <= y <= bounds[3]):
                raise ScenarioError(
                    f"spawn point ({x:.1f}, {y:.1f}) is off the map"
                )


def _map_bounds(road_map: RoadMap, margin: float = 50.0):
    xs, ys = [], []
    for seg in road_map.segments:
        xs.extend(seg.centerline[:, 0])
        ys.extend(seg.centerline[:, 1])
    for t in road_map.spawn_points:
        xs.append(t.x)
        ys.append(t.y)
    if not xs:
        return (-margin, -margin, margin, margin)
    return (min(xs) - margin, min(ys) - margin,
            max(xs) + margin, max(ys) + margin)


@dataclass
class ScenarioSummary:
    ticks: int
    collisions: int
    collision_pairs: list[tuple[int, ...]]
    complete_stops: int
    min_gap: float
    final_vehicle_speeds: dict[int, float]

    def lines(self) -> list[str]:
        out = [
            f"ticks: {self.ticks}",
            f"collisions: {self.collisions}",
            f"complete stops: {self.complete_stops}",
            f"min gap: {self.min_gap:.2f} m"
            if math.isfinite(self.min_gap) else "min gap: n/a",
        ]
        for vid, speed in sorted(self.final_vehicle_speeds.items()):
            out.append(f"vehicle {vid} final speed: {speed:.3f} m/s")
        return out


def run_scenario(config: ScenarioConfig) -> tuple[RecordLog, ScenarioSummary]:
    """Simulate the configured number of ticks, recording every one."""
    config.validate()
    world = World(road_map=config.road_map, dt=config.dt, seed=config.seed,
                  traffic_params=config.traffic_params)
    for actor in config.actors:
        world.spawn_actor(actor.blueprint, actor.transform, **actor.options)
    log = RecordLog(map_ref=config.map_ref, dt=config.dt, seed=config.seed)
    record_tick(log, world.snapshot())

    collision_pairs: set[tuple[int, ...]] = set()
    complete_stops = 0
    min_gap = math.inf
    for _ in range(config.duration):
        snapshot = world.step()
        record_tick(log, snapshot)
        for event in snapshot.events:
            if event.kind == "collision":
                collision_pairs.add(event.actors)
            elif event.kind == "complete-stop":
                complete_stops += 1
        min_gap = min(min_gap, _closest_gap(snapshot))
    summary = ScenarioSummary(
        ticks=config.duration,
        collisions=len(collision_pairs),
        collision_pairs=sorted(collision_pairs),
        complete_stops=complete_stops,
        min_gap=min_gap,
        final_vehicle_speeds={v.id: v.speed for v in
                              world.latest.vehicles},
    )
    return log, summary


def _closest_gap(snapshot) -> float:
    gap = math.inf
    for v in snapshot.vehicles:
        for w in snapshot.walkers:
            penetration = rect_disc_penetration(
                v.transform, v.half_extents[:2],
                (w.transform.x, w.transform.y), 0.3)
            gap = min(gap, -penetration)
    return gap


# ---------------------------------------------------------------------------
# Config files


def load_scenario(source: str) -> ScenarioConfig:
    """Resolve a builtin name or read a scenario JSON file."""
    if source in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[source]()
    with open(source, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read(), name=source)


def parse_scenario(text: str, name: str = "scenario") -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario syntax error: {exc.msg}") from exc
    road_map, map_ref = _load_map(doc.get("map", {"builtin": "crosswalk"}))
    params = TrafficParams(**doc.get("traffic_params", {}))
    actors = [_parse_actor(entry) for entry in doc.get("actors", [])]
    return ScenarioConfig(
        name=doc.get("name", name),
        road_map=road_map,
        map_ref=map_ref,
        actors=actors,
        duration=int(doc.get("duration", 600)),
        dt=float(doc.get("dt", 0.05)),
        seed=int(doc.get("seed", 0)),
        traffic_params=params,
        expect=doc.get("expect", {}),
    )


def _load_map(doc) -> tuple[RoadMap, str]:
    if isinstance(doc, str):
        doc = {"builtin": doc} if doc in BUILTIN_MAPS else {"file": doc}
    if "builtin" in doc:
        name = doc["builtin"]
        if name not in BUILTIN_MAPS:
            raise ScenarioError(f"unknown builtin map '{name}'")
        return BUILTIN_MAPS[name](), f"builtin:{name}"
    if "file" in doc:
        path = doc["file"]
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        if path.endswith(".xodr"):
            return parse_opendrive_subset(text), path
        return parse_scene(text), path
    raise ScenarioError("map must name a builtin or a file")


def _parse_actor(entry: dict) -> ActorSpec:
    blueprint = entry["blueprint"]
    transform = Transform.from_list(entry.get("transform", [0] * 6))
    options: dict = {}
    if "speed" in entry:
        options["speed"] = float(entry["speed"])
    if "half_extents" in entry:
        options["half_extents"] = tuple(entry["half_extents"])
    if "route" in entry:
        r = entry["route"]
        options["route"] = Route(waypoints=np.asarray(r["waypoints"], dtype=float),
                                 target_speed=float(r["target_speed"]))
    if "drive_mode" in entry:
        options["drive_mode"] = entry["drive_mode"]
    if "clip" in entry:
        options["clip"] = _load_clip(entry["clip"])
    if "stride" in entry:
        options["stride"] = float(entry["stride"])
    if "tracker_stream" in entry:
        with open(entry["tracker_stream"], "r", encoding="utf-8") as fh:
            options["tracker_samples"] = parse_tracker_stream(fh.read())
    return ActorSpec(blueprint=blueprint, transform=transform, options=options)


def _load_clip(doc) -> BvhClip:
    if isinstance(doc, str):
        with open(doc, "r", encoding="utf-8") as fh:
            return parse_bvh(fh.read())
    if "file" in doc:
        with open(doc["file"], "r", encoding="utf-8") as fh:
            return parse_bvh(fh.read(), unit_scale=doc.get("unit_scale", 100.0))
    if doc.get("builtin") == "walk":
        return make_walk_clip(frames=int(doc.get("frames", 40)),
                              frame_time=float(doc.get("frame_time", 0.05)))
    if doc.get("builtin") == "crossing":
        return make_crossing_clip(
            start_xy=tuple(doc.get("start", (0.0, 0.0))),
            heading_deg=float(doc.get("heading_deg", 90.0)),
            walk_distance=float(doc.get("walk_distance", 7.6)),
            speed=float(doc.get("speed", 1.4)),
            frames=int(doc.get("frames", 600)),
            frame_time=float(doc.get("frame_time", 0.05)),
        )
    raise ScenarioError(f"cannot load clip from {doc!r}")


# ---------------------------------------------------------------------------
# Builtins


def crosswalk_map() -> RoadMap:
    """Straight two-lane road with one zebra crossing and stop lines."""
    cx = DEMO_CROSSWALK_CENTER_X
    doc = {
        "segments": [
            {
                "id": 1,
                "centerline": [[-10.0, 0.0], [150.0, 0.0]],
                "lane_width": 3.5,
                "lanes_forward": 1,
                "lanes_backward": 1,
                "speed_limit": 10.0,
            }
        ],
        "crosswalks": [
            {
                "id": 1,
                "segment": 1,
                "polygon": [[cx - 2.0, -5.0], [cx + 2.0, -5.0],
                            [cx + 2.0, 5.0], [cx - 2.0, 5.0]],
                "stop_lines": {
                    "forward": [[cx - 6.0, -4.0], [cx - 6.0, 4.0]],
                    "backward": [[cx + 6.0, -4.0], [cx + 6.0, 4.0]],
                },
            }
        ],
        "spawn_points": [[0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                         [cx, -8.6, 0.0, 1.5707963267948966, 0.0, 0.0]],
    }
    return parse_scene(json.dumps(doc))


BUILTIN_MAPS = {
    "crosswalk": crosswalk_map,
}


def crosswalk_demo(ignore_pedestrians: bool = False,
                   duration: int = 600) -> ScenarioConfig:
    """One AV meets one replayed pedestrian at the bundled crosswalk."""
    cx = DEMO_CROSSWALK_CENTER_X
    road_map = crosswalk_map()
    actors = [
        ActorSpec(
            blueprint="vehicle.sedan",
            transform=Transform(0.0, 0.0, 0.0, 0.0),
            options={
                "speed": 10.0,
                "route": Route(waypoints=np.array([[0.0, 0.0], [150.0, 0.0]]),
                               target_speed=10.0),
            },
        ),
        ActorSpec(
            blueprint="walker.avatar",
            # Root motion lives in the clip, relative to this spawn pose.
            transform=Transform(cx, -8.6, 0.0, 0.0),
            options={
                "drive_mode": "bvh-replay",
                "direction": (0.0, 1.0),
                "clip": make_crossing_clip(
                    start_xy=(0.0, 0.0), heading_deg=90.0, walk_distance=7.6,
                    speed=1.4, frames=duration + 1, frame_time=0.05,
                ),
            },
        ),
    ]
    return ScenarioConfig(
        name="crosswalk_demo",
        road_map=road_map,
        map_ref="builtin:crosswalk",
        actors=actors,
        duration=duration,
        dt=0.05,
        seed=0,
        traffic_params=TrafficParams(ignore_pedestrians=ignore_pedestrians),
        expect={"complete_stop": not ignore_pedestrians,
                "zero_collisions": not ignore_pedestrians},
    )


def crosswalk_demo_ignoring() -> ScenarioConfig:
    config = crosswalk_demo(ignore_pedestrians=True)
    config.name = "crosswalk_demo_ignoring"
    config.expect = {"collision": True}
    return config


BUILTIN_SCENARIOS = {
    "crosswalk_demo": crosswalk_demo,
    "crosswalk_demo_ignoring": crosswalk_demo_ignoring,
}
