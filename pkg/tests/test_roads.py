"""Map model: scene parsing, OpenDRIVE subset, stop-line queries."""

import json
import math

import numpy as np
import pytest

from hilsim.geom import polyline_length
from hilsim.roads import (
    Crosswalk,
    SceneError,
    UnsupportedElementError,
    parse_opendrive_subset,
    parse_scene,
    serialize_scene,
    stop_distance_along_route,
)

MINIMAL_SCENE = json.dumps({
    "segments": [{
        "id": 1,
        "centerline": [[0.0, 0.0], [100.0, 0.0]],
        "lane_width": 3.5,
        "lanes_forward": 1,
        "lanes_backward": 1,
        "speed_limit": 10.0,
    }],
})


def brute_polyline_length(points):
    """Independent arc-length oracle: plain pairwise hypot sum."""
    total = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        total += math.hypot(x1 - x0, y1 - y0)
    return total


def test_minimal_scene():
    road_map = parse_scene(MINIMAL_SCENE)
    assert len(road_map.segments) == 1
    assert len(road_map.crosswalks) == 0
    assert road_map.segments[0].length() == 100.0


def test_omitted_lists_default_empty():
    road_map = parse_scene(MINIMAL_SCENE)
    assert road_map.lights == []
    assert road_map.spawn_points == []


def test_dangling_crosswalk_reference():
    doc = json.loads(MINIMAL_SCENE)
    doc["crosswalks"] = [{
        "id": 1,
        "segment": 99,
        "polygon": [[0, -2], [4, -2], [4, 2], [0, 2]],
        "stop_lines": {"forward": [[-2, -2], [-2, 2]]},
    }]
    with pytest.raises(SceneError, match="missing segment 99"):
        parse_scene(json.dumps(doc))


def test_syntax_error_reports_line():
    with pytest.raises(SceneError, match="line"):
        parse_scene('{"segments": [\n  {"id": }\n]}')


def test_zero_length_segment_rejected():
    doc = {
        "segments": [{"id": 1, "centerline": [[5.0, 5.0], [5.0, 5.0]],
                      "speed_limit": 10.0}],
    }
    with pytest.raises(SceneError, match="zero-length"):
        parse_scene(json.dumps(doc))


def test_duplicate_segment_ids_rejected():
    doc = json.loads(MINIMAL_SCENE)
    doc["segments"].append(dict(doc["segments"][0]))
    with pytest.raises(SceneError, match="duplicate segment id"):
        parse_scene(json.dumps(doc))


def test_far_stop_line_rejected():
    doc = json.loads(MINIMAL_SCENE)
    doc["crosswalks"] = [{
        "id": 1, "segment": 1,
        "polygon": [[48, -3], [52, -3], [52, 3], [48, 3]],
        "stop_lines": {"forward": [[-60, -3], [-60, 3]]},
    }]
    with pytest.raises(SceneError, match="farther than"):
        parse_scene(json.dumps(doc))


def test_concave_crosswalk_polygon_rejected():
    doc = json.loads(MINIMAL_SCENE)
    doc["crosswalks"] = [{
        "id": 1, "segment": 1,
        "polygon": [[48, -3], [52, -3], [50, 0], [52, 3], [48, 3]],
        "stop_lines": {"forward": [[44, -3], [44, 3]]},
    }]
    with pytest.raises(SceneError, match="convex"):
        parse_scene(json.dumps(doc))


def test_stop_line_through_polygon_rejected():
    doc = json.loads(MINIMAL_SCENE)
    doc["crosswalks"] = [{
        "id": 1, "segment": 1,
        "polygon": [[48, -3], [52, -3], [52, 3], [48, 3]],
        "stop_lines": {"forward": [[46, 0], [54, 0]]},  # cuts the interior
    }]
    with pytest.raises(SceneError, match="crosses"):
        parse_scene(json.dumps(doc))


def test_stop_line_touching_edge_allowed():
    doc = json.loads(MINIMAL_SCENE)
    doc["crosswalks"] = [{
        "id": 1, "segment": 1,
        "polygon": [[48.0, -3.0], [52.0, -3.0], [52.0, 3.0], [48.0, 3.0]],
        "stop_lines": {"forward": [[48.0, -3.0], [48.0, 3.0]]},  # on the edge
    }]
    road_map = parse_scene(json.dumps(doc))
    assert len(road_map.crosswalks) == 1


def test_scene_round_trip_identity():
    doc = json.loads(MINIMAL_SCENE)
    doc["crosswalks"] = [{
        "id": 7, "segment": 1,
        "polygon": [[48.0, -3.0], [52.0, -3.0], [52.0, 3.0], [48.0, 3.0]],
        "stop_lines": {"forward": [[44.0, -3.0], [44.0, 3.0]],
                       "backward": [[56.0, -3.0], [56.0, 3.0]]},
    }]
    doc["lights"] = [{
        "id": 2, "position": [44.0, 4.0],
        "stop_line": [[44.0, -3.0], [44.0, 3.0]],
        "durations": {"red": 5.0, "green": 7.0, "amber": 2.0},
        "initial": "green",
    }]
    doc["spawn_points"] = [[1.0, 2.0, 0.0, 0.5, 0.0, 0.0]]
    first = parse_scene(json.dumps(doc))
    second = parse_scene(serialize_scene(first))
    assert serialize_scene(first) == serialize_scene(second)
    assert [s.id for s in second.segments] == [1]
    assert second.crosswalks[0].stop_lines.keys() == {"forward", "backward"}
    assert second.lights[0].initial == "green"
    assert second.spawn_points[0].yaw == 0.5


# -- OpenDRIVE subset --------------------------------------------------------


def _xodr(geometries, lanes="", objects=""):
    return f"""<?xml version="1.0"?>
<OpenDRIVE>
  <road id="1" length="100">
    <type s="0" type="town"><speed max="10.0"/></type>
    <planView>{geometries}</planView>
    <lanes><laneSection s="0">{lanes}</laneSection></lanes>
    {objects}
  </road>
</OpenDRIVE>"""


def test_opendrive_single_line():
    text = _xodr('<geometry x="0" y="0" hdg="0" length="100"><line/></geometry>')
    road_map = parse_opendrive_subset(text)
    seg = road_map.segments[0]
    assert np.allclose(seg.centerline, [[0, 0], [100, 0]])
    assert seg.speed_limit == 10.0


def test_opendrive_rotated_line():
    text = _xodr(
        f'<geometry x="0" y="0" hdg="{math.pi / 2}" length="100"><line/></geometry>'
    )
    seg = parse_opendrive_subset(text).segments[0]
    assert np.allclose(seg.centerline, [[0, 0], [0, 100]], atol=1e-9)


def test_opendrive_chained_lines_total_length():
    # Oracle: polyline length of the concatenated pieces must equal 40 + 60.
    text = _xodr(
        '<geometry x="0" y="0" hdg="0" length="40"><line/></geometry>'
        f'<geometry x="40" y="0" hdg="{math.pi / 4}" length="60"><line/></geometry>'
    )
    seg = parse_opendrive_subset(text).segments[0]
    expected = brute_polyline_length([tuple(p) for p in seg.centerline])
    assert abs(expected - 100.0) < 1e-9
    assert abs(polyline_length(seg.centerline) - 100.0) < 1e-9


def test_opendrive_arc_rejected_by_name():
    text = _xodr('<geometry x="0" y="0" hdg="0" length="50"><arc curvature="0.1"/></geometry>')
    with pytest.raises(UnsupportedElementError, match="arc"):
        parse_opendrive_subset(text)


def test_opendrive_malformed_xml():
    with pytest.raises(SceneError, match="syntax"):
        parse_opendrive_subset("<OpenDRIVE><road>")


def test_opendrive_lane_counts_and_width():
    lanes = (
        '<left><lane id="1" type="driving"><width a="3.0"/></lane></left>'
        '<right><lane id="-1" type="driving"><width a="3.0"/></lane>'
        '<lane id="-2" type="driving"><width a="3.0"/></lane></right>'
    )
    text = _xodr('<geometry x="0" y="0" hdg="0" length="100"><line/></geometry>',
                 lanes=lanes)
    seg = parse_opendrive_subset(text).segments[0]
    assert seg.lanes_forward == 2
    assert seg.lanes_backward == 1
    assert seg.lane_width == 3.0


def test_opendrive_crosswalk_object():
    objects = '<objects><object type="crosswalk" s="50" length="4" width="8"/></objects>'
    text = _xodr('<geometry x="0" y="0" hdg="0" length="100"><line/></geometry>',
                 objects=objects)
    road_map = parse_opendrive_subset(text)
    assert len(road_map.crosswalks) == 1
    cw = road_map.crosswalks[0]
    assert np.allclose(cw.centroid(), [50.0, 0.0], atol=1e-9)


# -- stop_distance_along_route ------------------------------------------------


def _crosswalk_at(x, half_width=4.0):
    return Crosswalk(
        id=1, segment=1,
        polygon=np.array([[x - 2, -half_width], [x + 2, -half_width],
                          [x + 2, half_width], [x - 2, half_width]]),
        stop_lines={
            "forward": np.array([[x - 6, -half_width], [x - 6, half_width]]),
            "backward": np.array([[x + 6, -half_width], [x + 6, half_width]]),
        },
    )


def brute_first_crossing(route, lines):
    """Oracle: dense sampling of the route against every stop line."""
    best = None
    acc = 0.0
    for a, b in zip(route[:-1], route[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        steps = max(2, int(seg / 0.001))
        prev = a
        for i in range(1, steps + 1):
            p = (a[0] + (b[0] - a[0]) * i / steps,
                 a[1] + (b[1] - a[1]) * i / steps)
            for (q1, q2) in lines:
                if _segments_cross(prev, p, q1, q2):
                    s = acc + seg * (i - 0.5) / steps
                    if best is None or s < best:
                        best = s
            prev = p
        acc += seg
        if best is not None:
            return best
    return best


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def test_stop_distance_straight_route():
    route = np.array([[0.0, 0.0], [100.0, 0.0]])
    cw = _crosswalk_at(36.0)
    assert stop_distance_along_route(route, cw) == pytest.approx(30.0)


def test_stop_distance_parallel_route_is_none():
    route = np.array([[0.0, 10.0], [100.0, 10.0]])
    cw = _crosswalk_at(36.0)
    assert stop_distance_along_route(route, cw) is None


def test_stop_distance_second_crosswalk_matches_bruteforce():
    route = np.array([[0.0, 0.0], [60.0, 0.0], [60.0, 40.0]])
    second = Crosswalk(
        id=2, segment=1,
        polygon=np.array([[58, 28], [62, 28], [62, 32], [58, 32]]),
        stop_lines={"forward": np.array([[58.0, 24.0], [62.0, 24.0]])},
    )
    got = stop_distance_along_route(route, second)
    lines = [(tuple(l[0]), tuple(l[1])) for l in second.stop_lines.values()]
    expected = brute_first_crossing([tuple(p) for p in route], lines)
    assert got == pytest.approx(60.0 + 24.0)
    assert got == pytest.approx(expected, abs=0.01)


def test_polyline_length_rigid_invariance():
    rng = np.random.default_rng(7)
    for _ in range(20):
        pts = rng.uniform(-50, 50, size=(rng.integers(2, 8), 2))
        angle = rng.uniform(-math.pi, math.pi)
        shift = rng.uniform(-100, 100, size=2)
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        moved = pts @ rot.T + shift
        assert abs(polyline_length(pts) - polyline_length(moved)) < 1e-9


def test_random_documents_satisfy_invariants():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n_seg = int(rng.integers(1, 4))
        doc = {"segments": [], "crosswalks": []}
        for sid in range(1, n_seg + 1):
            start = rng.uniform(-100, 100, 2)
            direction = rng.uniform(-1, 1, 2)
            direction /= np.linalg.norm(direction) + 1e-9
            points = [start + direction * (25.0 * k) for k in range(3)]
            doc["segments"].append({
                "id": sid,
                "centerline": [p.tolist() for p in points],
                "lane_width": float(rng.uniform(2.5, 4.0)),
                "lanes_forward": int(rng.integers(0, 3)),
                "lanes_backward": int(rng.integers(0, 3)),
                "speed_limit": float(rng.uniform(5, 20)),
            })
        road_map = parse_scene(json.dumps(doc))
        ids = [s.id for s in road_map.segments]
        assert len(ids) == len(set(ids))
        for seg in road_map.segments:
            assert len(seg.centerline) >= 2
            assert seg.lane_width > 0
            assert seg.speed_limit > 0
