"""Road layouts: the native scene format, an OpenDRIVE subset, map queries.

A map is a flat collection of road segments, crosswalks, timed traffic
lights and spawn points.  Maps are immutable after parsing and safe to
share between threads.

The native scene format is a UTF-8 JSON document with the top-level keys
``segments``, ``crosswalks``, ``lights`` and ``spawn_points`` (omitted
lists default to empty).  Lengths are meters, angles radians.  See
``serialize_scene`` for the exact field layout; ``parse_scene`` and
``serialize_scene`` round-trip losslessly.

The OpenDRIVE reader supports the subset needed for interchange: roads
with ``line`` plan-view geometries, one lane section with constant-width
driving lanes, and optional crosswalk objects.  Arcs and spirals are
rejected explicitly rather than approximated.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .geom import (
    Transform,
    point_along_polyline,
    polygon_area,
    polygon_centroid,
    polyline_length,
    segment_intersection,
)

STOP_LINE_MAX_DISTANCE = 50.0  # m from crosswalk centroid


class SceneError(ValueError):
    """Malformed scene document (syntax or reference errors)."""


class UnsupportedElementError(SceneError):
    """OpenDRIVE element outside the supported subset."""


@dataclass(frozen=True)
class RoadSegment:
    id: int
    centerline: np.ndarray  # (N, 2) m
    lane_width: float
    lanes_forward: int
    lanes_backward: int
    speed_limit: float  # m/s

    def length(self) -> float:
        return polyline_length(self.centerline)


@dataclass(frozen=True)
class Crosswalk:
    id: int
    segment: int
    polygon: np.ndarray  # (V, 2) m, convex
    stop_lines: dict[str, np.ndarray]  # approach -> (2, 2) segment

    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.polygon)


@dataclass(frozen=True)
class TrafficLightSpec:
    id: int
    position: np.ndarray  # (2,) m
    stop_line: np.ndarray  # (2, 2) m
    durations: dict[str, float]  # phase -> s
    initial: str = "red"


@dataclass(frozen=True)
class RoadMap:
    segments: list[RoadSegment] = field(default_factory=list)
    crosswalks: list[Crosswalk] = field(default_factory=list)
    lights: list[TrafficLightSpec] = field(default_factory=list)
    spawn_points: list[Transform] = field(default_factory=list)

    def segment_by_id(self, sid: int) -> RoadSegment:
        for seg in self.segments:
            if seg.id == sid:
                return seg
        raise KeyError(f"no segment with id {sid}")

    def crosswalk_by_id(self, cid: int) -> Crosswalk:
        for cw in self.crosswalks:
            if cw.id == cid:
                return cw
        raise KeyError(f"no crosswalk with id {cid}")


def _validate(road_map: RoadMap) -> RoadMap:
    seen = set()
    for seg in road_map.segments:
        if seg.id in seen:
            raise SceneError(f"duplicate segment id {seg.id}")
        seen.add(seg.id)
        if len(seg.centerline) < 2:
            raise SceneError(f"segment {seg.id}: centerline needs >= 2 points")
        diffs = np.linalg.norm(np.diff(seg.centerline, axis=0), axis=1)
        if np.any(diffs == 0.0):
            raise SceneError(f"segment {seg.id}: zero-length centerline piece")
        if seg.lane_width <= 0.0:
            raise SceneError(f"segment {seg.id}: lane_width must be > 0")
        if seg.speed_limit <= 0.0:
            raise SceneError(f"segment {seg.id}: speed_limit must be > 0")
        if seg.lanes_forward < 0 or seg.lanes_backward < 0:
            raise SceneError(f"segment {seg.id}: negative lane count")
    cw_seen = set()
    for cw in road_map.crosswalks:
        if cw.id in cw_seen:
            raise SceneError(f"duplicate crosswalk id {cw.id}")
        cw_seen.add(cw.id)
        if cw.segment not in seen:
            raise SceneError(
                f"crosswalk {cw.id} references missing segment {cw.segment}"
            )
        if len(cw.polygon) < 3:
            raise SceneError(f"crosswalk {cw.id}: polygon needs >= 3 vertices")
        if abs(polygon_area(cw.polygon)) <= 0.0:
            raise SceneError(f"crosswalk {cw.id}: polygon has zero area")
        if not _is_convex(cw.polygon):
            raise SceneError(f"crosswalk {cw.id}: polygon must be convex")
        centroid = cw.centroid()
        for approach, line in cw.stop_lines.items():
            mid = 0.5 * (line[0] + line[1])
            if float(np.linalg.norm(mid - centroid)) > STOP_LINE_MAX_DISTANCE:
                raise SceneError(
                    f"crosswalk {cw.id}: stop line '{approach}' farther than "
                    f"{STOP_LINE_MAX_DISTANCE} m from the crosswalk"
                )
            if _segment_enters_polygon(line, cw.polygon):
                raise SceneError(
                    f"crosswalk {cw.id}: stop line '{approach}' crosses the "
                    f"crosswalk polygon"
                )
    return road_map


def _is_convex(polygon: np.ndarray) -> bool:
    v = np.asarray(polygon, dtype=float)
    n = len(v)
    sign = 0.0
    for i in range(n):
        a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) < 1e-12:
            continue  # collinear corner
        if sign == 0.0:
            sign = cross
        elif sign * cross < 0.0:
            return False
    return True


def _segment_enters_polygon(line: np.ndarray, polygon: np.ndarray,
                            samples: int = 33) -> bool:
    """True when any sampled interior point of the segment lies strictly
    inside the polygon (boundary touches are allowed)."""
    from .geom import point_in_polygon

    a, b = np.asarray(line, dtype=float)
    for k in range(samples + 1):
        p = a + (b - a) * (k / samples)
        if point_in_polygon(p, polygon):
            edge = min(
                float(np.linalg.norm(p - q))
                for q in _edge_closest_points(p, polygon)
            )
            if edge > 1e-9:
                return True
    return False


def _edge_closest_points(p: np.ndarray, polygon: np.ndarray):
    v = np.asarray(polygon, dtype=float)
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        ab = b - a
        denom = float(np.dot(ab, ab))
        t = 0.0 if denom == 0.0 else float(np.clip(np.dot(p - a, ab) / denom,
                                                   0.0, 1.0))
        yield a + t * ab


def parse_scene(text: str) -> RoadMap:
    """Parse the native scene format into a validated RoadMap."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene syntax error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SceneError("scene document must be a single object")
    segments = [
        RoadSegment(
            id=int(s["id"]),
            centerline=np.asarray(s["centerline"], dtype=float).reshape(-1, 2),
            lane_width=float(s.get("lane_width", 3.5)),
            lanes_forward=int(s.get("lanes_forward", 1)),
            lanes_backward=int(s.get("lanes_backward", 1)),
            speed_limit=float(s.get("speed_limit", 13.89)),
        )
        for s in doc.get("segments", [])
    ]
    crosswalks = [
        Crosswalk(
            id=int(c["id"]),
            segment=int(c["segment"]),
            polygon=np.asarray(c["polygon"], dtype=float).reshape(-1, 2),
            stop_lines={
                approach: np.asarray(line, dtype=float).reshape(2, 2)
                for approach, line in c.get("stop_lines", {}).items()
            },
        )
        for c in doc.get("crosswalks", [])
    ]
    lights = [
        TrafficLightSpec(
            id=int(l["id"]),
            position=np.asarray(l["position"], dtype=float).reshape(2),
            stop_line=np.asarray(l["stop_line"], dtype=float).reshape(2, 2),
            durations={k: float(v) for k, v in l["durations"].items()},
            initial=str(l.get("initial", "red")),
        )
        for l in doc.get("lights", [])
    ]
    spawn_points = [Transform.from_list(p) for p in doc.get("spawn_points", [])]
    return _validate(
        RoadMap(
            segments=segments,
            crosswalks=crosswalks,
            lights=lights,
            spawn_points=spawn_points,
        )
    )


def serialize_scene(road_map: RoadMap) -> str:
    """Render a RoadMap back into the native scene format."""
    doc = {
        "segments": [
            {
                "id": s.id,
                "centerline": s.centerline.tolist(),
                "lane_width": s.lane_width,
                "lanes_forward": s.lanes_forward,
                "lanes_backward": s.lanes_backward,
                "speed_limit": s.speed_limit,
            }
            for s in road_map.segments
        ],
        "crosswalks": [
            {
                "id": c.id,
                "segment": c.segment,
                "polygon": c.polygon.tolist(),
                "stop_lines": {k: v.tolist() for k, v in c.stop_lines.items()},
            }
            for c in road_map.crosswalks
        ],
        "lights": [
            {
                "id": l.id,
                "position": l.position.tolist(),
                "stop_line": l.stop_line.tolist(),
                "durations": l.durations,
                "initial": l.initial,
            }
            for l in road_map.lights
        ],
        "spawn_points": [t.to_list() for t in road_map.spawn_points],
    }
    return json.dumps(doc, indent=2)


def parse_opendrive_subset(text: str) -> RoadMap:
    """Parse an OpenDRIVE document restricted to line geometries.

    Each ``line`` plan-view geometry becomes a two-point centerline piece;
    consecutive geometries of one road are concatenated.  Lane counts and
    the lane width come from the first lane section.  ``arc``/``spiral``
    (and any other curved) geometries raise UnsupportedElementError.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise SceneError(f"OpenDRIVE syntax error: {exc}") from exc
    segments = []
    crosswalks = []
    next_cw_id = 1
    for road in root.iter("road"):
        rid = int(road.get("id", len(segments) + 1))
        plan_view = road.find("planView")
        if plan_view is None:
            raise SceneError(f"road {rid}: missing planView")
        points: list[tuple[float, float]] = []
        for geom in plan_view.findall("geometry"):
            kinds = [child.tag for child in geom]
            if kinds != ["line"]:
                bad = next((k for k in kinds if k != "line"), "unknown")
                raise UnsupportedElementError(
                    f"road {rid}: unsupported geometry element '{bad}'"
                )
            x = float(geom.get("x"))
            y = float(geom.get("y"))
            hdg = float(geom.get("hdg"))
            length = float(geom.get("length"))
            end = (x + length * math.cos(hdg), y + length * math.sin(hdg))
            if not points:
                points.append((x, y))
            points.append(end)
        if len(points) < 2:
            raise SceneError(f"road {rid}: no supported geometry")

        lanes_forward, lanes_backward, lane_width = _first_lane_section(road, rid)
        speed_limit = 13.89
        type_el = road.find("type")
        if type_el is not None:
            speed_el = type_el.find("speed")
            if speed_el is not None:
                speed_limit = float(speed_el.get("max"))
        centerline = np.asarray(points, dtype=float)
        segments.append(
            RoadSegment(
                id=rid,
                centerline=centerline,
                lane_width=lane_width,
                lanes_forward=lanes_forward,
                lanes_backward=lanes_backward,
                speed_limit=speed_limit,
            )
        )

        objects = road.find("objects")
        if objects is not None:
            for obj in objects.findall("object"):
                if obj.get("type") != "crosswalk":
                    continue
                crosswalks.append(
                    _crosswalk_from_object(next_cw_id, segments[-1], obj)
                )
                next_cw_id += 1
    return _validate(RoadMap(segments=segments, crosswalks=crosswalks))


def _first_lane_section(road: ET.Element, rid: int) -> tuple[int, int, float]:
    lanes_el = road.find("lanes")
    if lanes_el is None:
        return 1, 1, 3.5
    section = lanes_el.find("laneSection")
    if section is None:
        return 1, 1, 3.5
    lanes_forward = 0
    lanes_backward = 0
    lane_width = 3.5
    for side, attr in (("right", "forward"), ("left", "backward")):
        side_el = section.find(side)
        if side_el is None:
            continue
        count = 0
        for lane in side_el.findall("lane"):
            if lane.get("type") != "driving":
                continue
            count += 1
            width_el = lane.find("width")
            if width_el is not None:
                lane_width = float(width_el.get("a"))
        if attr == "forward":
            lanes_forward = count
        else:
            lanes_backward = count
    return lanes_forward, lanes_backward, lane_width


def _crosswalk_from_object(cw_id: int, seg: RoadSegment, obj: ET.Element) -> Crosswalk:
    s = float(obj.get("s", 0.0))
    length = float(obj.get("length", 4.0))  # along the road
    width = float(obj.get("width", 8.0))  # across the road
    center = point_along_polyline(seg.centerline, s)
    before = point_along_polyline(seg.centerline, max(s - 0.5, 0.0))
    after = point_along_polyline(seg.centerline, s + 0.5)
    direction = after - before
    norm = float(np.linalg.norm(direction))
    direction = direction / norm if norm > 0 else np.array([1.0, 0.0])
    lateral = np.array([-direction[1], direction[0]])
    half_l = 0.5 * length
    half_w = 0.5 * width
    polygon = np.array(
        [
            center - direction * half_l - lateral * half_w,
            center + direction * half_l - lateral * half_w,
            center + direction * half_l + lateral * half_w,
            center - direction * half_l + lateral * half_w,
        ]
    )
    stop_offset = half_l + 2.0
    stop_lines = {
        "forward": np.array(
            [
                center - direction * stop_offset - lateral * half_w,
                center - direction * stop_offset + lateral * half_w,
            ]
        ),
        "backward": np.array(
            [
                center + direction * stop_offset - lateral * half_w,
                center + direction * stop_offset + lateral * half_w,
            ]
        ),
    }
    return Crosswalk(id=cw_id, segment=seg.id, polygon=polygon, stop_lines=stop_lines)


def stop_distance_along_route(route: np.ndarray, crosswalk: Crosswalk) -> float | None:
    """Arc length from route start to its first crossing of a stop line.

    Returns None when the route never crosses any of the crosswalk's stop
    lines.
    """
    pts = np.asarray(route, dtype=float)[:, :2]
    acc = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        seg_len = float(np.linalg.norm(b - a))
        best_t = None
        for line in crosswalk.stop_lines.values():
            t = segment_intersection(a, b, line[0], line[1])
            if t is not None and (best_t is None or t < best_t):
                best_t = t
        if best_t is not None:
            return acc + best_t * seg_len
        acc += seg_len
    return None
