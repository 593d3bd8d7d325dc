"""Shared geometric primitives: transforms, angles, polylines.

Frame convention used everywhere in this package: right-handed, x/y ground
plane, z up, lengths in meters, yaw counterclockwise from +x in radians.
Angles are normalized to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Transform:
    """Rigid pose: position in meters plus yaw/pitch/roll in radians.

    Rotation order is yaw about z, then pitch about y, then roll about x
    (R = Rz @ Ry @ Rx).
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))
        object.__setattr__(self, "pitch", normalize_angle(self.pitch))
        object.__setattr__(self, "roll", normalize_angle(self.roll))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def rotation(self) -> np.ndarray:
        """3x3 rotation matrix of this pose."""
        return rot_z(self.yaw) @ rot_y(self.pitch) @ rot_x(self.roll)

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix of this pose."""
        m = np.eye(4)
        m[:3, :3] = self.rotation()
        m[:3, 3] = (self.x, self.y, self.z)
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (..., 3) from this frame into the parent frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation().T + self.position

    def forward(self) -> np.ndarray:
        """Unit +x axis of this frame expressed in the parent frame."""
        return self.rotation()[:, 0]

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.z, self.yaw, self.pitch, self.roll]

    @staticmethod
    def from_list(values) -> "Transform":
        x, y, z, yaw, pitch, roll = (float(v) for v in values)
        return Transform(x, y, z, yaw, pitch, roll)


def polyline_length(points: np.ndarray) -> float:
    """Total arc length of an (N, 2) or (N, 3) polyline."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def point_along_polyline(points: np.ndarray, s: float) -> np.ndarray:
    """Point at arc length ``s`` along a polyline, clamped to its ends."""
    pts = np.asarray(points, dtype=float)
    if s <= 0.0:
        return pts[0].copy()
    remaining = s
    for a, b in zip(pts[:-1], pts[1:]):
        seg = float(np.linalg.norm(b - a))
        if remaining <= seg and seg > 0.0:
            return a + (b - a) * (remaining / seg)
        remaining -= seg
    return pts[-1].copy()


def project_onto_polyline(points: np.ndarray, p) -> float:
    """Arc length of the closest point on the polyline to ``p`` (2D)."""
    pts = np.asarray(points, dtype=float)[:, :2]
    p = np.asarray(p, dtype=float)[:2]
    best_s = 0.0
    best_d = math.inf
    acc = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        ab = b - a
        seg = float(np.linalg.norm(ab))
        if seg == 0.0:
            continue
        t = float(np.clip(np.dot(p - a, ab) / (seg * seg), 0.0, 1.0))
        q = a + t * ab
        d = float(np.linalg.norm(p - q))
        if d < best_d:
            best_d = d
            best_s = acc + t * seg
        acc += seg
    return best_s


def segment_intersection(p1, p2, q1, q2) -> float | None:
    """Parameter t in [0, 1] along p1->p2 of its crossing with q1->q2.

    Returns None for parallel or non-crossing segments.  Endpoint touches
    count as intersections.
    """
    p1 = np.asarray(p1, dtype=float)[:2]
    p2 = np.asarray(p2, dtype=float)[:2]
    q1 = np.asarray(q1, dtype=float)[:2]
    q2 = np.asarray(q2, dtype=float)[:2]
    r = p2 - p1
    s = q2 - q1
    denom = r[0] * s[1] - r[1] * s[0]
    if denom == 0.0:
        return None
    qp = q1 - p1
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if -1e-12 <= t <= 1.0 + 1e-12 and -1e-12 <= u <= 1.0 + 1e-12:
        return float(np.clip(t, 0.0, 1.0))
    return None


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area of a 2D polygon."""
    v = np.asarray(vertices, dtype=float)[:, :2]
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)[:, :2]
    return v.mean(axis=0)


def point_in_polygon(p, vertices: np.ndarray) -> bool:
    """Even-odd test; points on an edge count as inside."""
    p = np.asarray(p, dtype=float)[:2]
    v = np.asarray(vertices, dtype=float)[:, :2]
    inside = False
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        if _on_segment(p, a, b):
            return True
        if (a[1] > p[1]) != (b[1] > p[1]):
            x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if x_cross > p[0]:
                inside = not inside
    return inside


def _on_segment(p, a, b, eps: float = 1e-12) -> bool:
    ab = b - a
    ap = p - a
    cross = ab[0] * ap[1] - ab[1] * ap[0]
    if abs(cross) > eps * max(1.0, float(np.linalg.norm(ab))):
        return False
    dot = float(np.dot(ap, ab))
    return -eps <= dot <= float(np.dot(ab, ab)) + eps


def distance_to_polygon(p, vertices: np.ndarray) -> float:
    """Distance from a 2D point to a polygon boundary; 0 if inside."""
    if point_in_polygon(p, vertices):
        return 0.0
    p = np.asarray(p, dtype=float)[:2]
    v = np.asarray(vertices, dtype=float)[:, :2]
    best = math.inf
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        best = min(best, _point_segment_distance(p, a, b))
    return best


def closest_point_on_polygon(p, vertices: np.ndarray) -> np.ndarray:
    """Closest boundary point of a polygon to a 2D point."""
    p = np.asarray(p, dtype=float)[:2]
    v = np.asarray(vertices, dtype=float)[:, :2]
    best = None
    best_d = math.inf
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        ab = b - a
        denom = float(np.dot(ab, ab))
        t = 0.0 if denom == 0.0 else float(np.clip(np.dot(p - a, ab) / denom, 0.0, 1.0))
        q = a + t * ab
        d = float(np.linalg.norm(p - q))
        if d < best_d:
            best_d = d
            best = q
    return best


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip(np.dot(p - a, ab) / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))
