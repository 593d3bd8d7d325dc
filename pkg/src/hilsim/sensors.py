"""Synthetic AV sensors: ray-casting LiDAR and pinhole cameras.

The scene is a set of analytic primitives (oriented boxes, capsules, a
ground plane) so every intersection is exactly checkable.  Rays are cast
in batches: one vectorized pass per primitive over all rays, which keeps a
32 x 1000-ray scan inside a real-time tick budget.

Hit ties at identical distance resolve to the lowest actor id; primitives
without an actor (environment) lose ties against actors.  Rays that start
inside a primitive hit its exit surface; scene builders exclude a sensor's
own carrier actor instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .avatar import Capsule
from .geom import Transform

LABELS = ("vehicle", "pedestrian", "road", "building", "pole", "sky")
LABEL_IDS = {name: i for i, name in enumerate(LABELS)}

# Flat segmentation palette (RGB); also the base color for shaded RGB.
PALETTE = np.array(
    [
        (0, 0, 142),      # vehicle
        (220, 20, 60),    # pedestrian
        (128, 64, 128),   # road
        (70, 70, 70),     # building
        (153, 153, 153),  # pole
        (70, 130, 180),   # sky
    ],
    dtype=np.float64,
)

# Fixed directional light for Lambert shading, pointing from the scene
# toward the light source.
LIGHT_DIR = np.array([0.3, -0.2, 0.9]) / np.linalg.norm([0.3, -0.2, 0.9])
AMBIENT = 0.2

_ENV_ORDER = 10**9  # sort key for actorless primitives: lose all ties


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit


@dataclass(frozen=True)
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray
    actor: int | None
    label: str


@dataclass(frozen=True)
class OrientedBox:
    center: np.ndarray  # (3,)
    rotation: np.ndarray  # (3, 3) box-to-world
    half_extents: np.ndarray  # (3,)
    label: str
    actor: int | None


class SceneGeometry:
    """Primitive collection with deterministic hit-tie ordering."""

    def __init__(self):
        self._entries: list[tuple[int, int, object]] = []
        self._counter = 0
        self._sorted = None

    def add_box(self, center, rotation, half_extents, label: str,
                actor: int | None = None) -> None:
        box = OrientedBox(
            center=np.asarray(center, dtype=float),
            rotation=np.asarray(rotation, dtype=float),
            half_extents=np.asarray(half_extents, dtype=float),
            label=label,
            actor=actor,
        )
        self._push(actor, box)

    def add_capsule(self, capsule: Capsule) -> None:
        self._push(capsule.actor, capsule)

    def add_ground(self, z: float = 0.0, label: str = "road") -> None:
        self._push(None, _GroundPlane(z=z, label=label))

    def _push(self, actor: int | None, prim) -> None:
        order = _ENV_ORDER if actor is None else int(actor)
        self._entries.append((order, self._counter, prim))
        self._counter += 1
        self._sorted = None

    def primitives(self) -> list[object]:
        if self._sorted is None:
            self._sorted = [p for _, _, p in sorted(self._entries,
                                                    key=lambda e: (e[0], e[1]))]
        return self._sorted

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class _GroundPlane:
    z: float
    label: str
    actor: int | None = None


def _box_t(box: OrientedBox, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    local_o = (origins - box.center) @ box.rotation
    local_d = dirs @ box.rotation
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / local_d
        t_lo = (-box.half_extents - local_o) * inv
        t_hi = (box.half_extents - local_o) * inv
    near = np.minimum(t_lo, t_hi)
    far = np.maximum(t_lo, t_hi)
    # Axis-parallel rays: the slab constrains only via the origin coordinate.
    parallel = local_d == 0.0
    outside = np.abs(local_o) > box.half_extents
    near = np.where(parallel, -np.inf, near)
    far = np.where(parallel, np.inf, far)
    tmin = np.max(near, axis=1)
    tmax = np.min(far, axis=1)
    miss = (tmax < tmin) | (tmax <= 0.0) | np.any(parallel & outside, axis=1)
    t = np.where(tmin > 0.0, tmin, tmax)
    return np.where(miss, np.inf, t)


def _box_normal(box: OrientedBox, origins: np.ndarray, dirs: np.ndarray,
                t: np.ndarray) -> np.ndarray:
    local_o = (origins - box.center) @ box.rotation
    local_d = dirs @ box.rotation
    p = local_o + t[:, None] * local_d
    ratio = np.abs(p) / box.half_extents
    axis = np.argmax(ratio, axis=1)
    normal_local = np.zeros_like(p)
    rows = np.arange(len(p))
    normal_local[rows, axis] = np.sign(p[rows, axis])
    return normal_local @ box.rotation.T


def _capsule_t(cap: Capsule, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    a = np.asarray(cap.p0, dtype=float)
    b = np.asarray(cap.p1, dtype=float)
    r = float(cap.radius)
    axis = b - a
    length = float(np.linalg.norm(axis))
    if length < 1e-12:
        return _sphere_t(a, r, origins, dirs)
    u = axis / length
    m = origins - a
    md = m @ u
    dd = dirs @ u
    m_perp = m - md[:, None] * u
    d_perp = dirs - dd[:, None] * u
    a2 = np.einsum("ij,ij->i", d_perp, d_perp)
    b2 = 2.0 * np.einsum("ij,ij->i", m_perp, d_perp)
    c2 = np.einsum("ij,ij->i", m_perp, m_perp) - r * r
    disc = b2 * b2 - 4.0 * a2 * c2
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        t_near = (-b2 - sq) / (2.0 * a2)
        t_far = (-b2 + sq) / (2.0 * a2)
    valid = (disc >= 0.0) & (a2 > 1e-16)
    s_near = md + t_near * dd
    s_far = md + t_far * dd
    near_ok = valid & (t_near > 0.0) & (s_near >= 0.0) & (s_near <= length)
    # From inside the cylinder section the near root is behind the origin;
    # the lateral exit is the far root (matches sphere/box exit semantics).
    far_ok = valid & (t_far > 0.0) & (s_far >= 0.0) & (s_far <= length)
    t_side = np.where(near_ok, t_near, np.where(far_ok, t_far, np.inf))
    t_cap_a = _sphere_t(a, r, origins, dirs)
    t_cap_b = _sphere_t(b, r, origins, dirs)
    return np.minimum(t_side, np.minimum(t_cap_a, t_cap_b))


def _capsule_normal(cap: Capsule, origins: np.ndarray, dirs: np.ndarray,
                    t: np.ndarray) -> np.ndarray:
    a = np.asarray(cap.p0, dtype=float)
    b = np.asarray(cap.p1, dtype=float)
    axis = b - a
    length = float(np.linalg.norm(axis))
    p = origins + t[:, None] * dirs
    if length < 1e-12:
        n = p - a
    else:
        u = axis / length
        s = np.clip((p - a) @ u, 0.0, length)
        n = p - (a + s[:, None] * u)
    norms = np.linalg.norm(n, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return n / norms


def _sphere_t(center: np.ndarray, r: float, origins: np.ndarray,
              dirs: np.ndarray) -> np.ndarray:
    m = origins - center
    b = np.einsum("ij,ij->i", m, dirs)
    c = np.einsum("ij,ij->i", m, m) - r * r
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t = -b - sq
    t_far = -b + sq
    # From inside the sphere the near root is negative; use the exit point.
    t = np.where(t > 0.0, t, t_far)
    return np.where((disc >= 0.0) & (t > 0.0), t, np.inf)


def _plane_t(plane: _GroundPlane, origins: np.ndarray,
             dirs: np.ndarray) -> np.ndarray:
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (plane.z - origins[:, 2]) / dz
    return np.where((dz != 0.0) & (t > 0.0), t, np.inf)


def _prim_t(prim, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    if isinstance(prim, OrientedBox):
        return _box_t(prim, origins, dirs)
    if isinstance(prim, Capsule):
        return _capsule_t(prim, origins, dirs)
    if isinstance(prim, _GroundPlane):
        return _plane_t(prim, origins, dirs)
    raise TypeError(f"unknown primitive {type(prim)!r}")


def _prim_normal(prim, origins: np.ndarray, dirs: np.ndarray,
                 t: np.ndarray) -> np.ndarray:
    if isinstance(prim, OrientedBox):
        return _box_normal(prim, origins, dirs, t)
    if isinstance(prim, Capsule):
        return _capsule_normal(prim, origins, dirs, t)
    if isinstance(prim, _GroundPlane):
        n = np.zeros((len(t), 3))
        n[:, 2] = np.where(dirs[:, 2] <= 0.0, 1.0, -1.0)
        return n
    raise TypeError(f"unknown primitive {type(prim)!r}")


def _bounding_sphere(prim):
    if isinstance(prim, OrientedBox):
        return prim.center, float(np.linalg.norm(prim.half_extents))
    if isinstance(prim, Capsule):
        mid = 0.5 * (np.asarray(prim.p0, dtype=float)
                     + np.asarray(prim.p1, dtype=float))
        half = 0.5 * float(np.linalg.norm(
            np.asarray(prim.p1, dtype=float) - np.asarray(prim.p0, dtype=float)))
        return mid, half + prim.radius
    return None  # unbounded (ground plane)


def cast_rays(origins: np.ndarray, dirs: np.ndarray, scene: SceneGeometry):
    """Vectorized nearest-hit query.

    Returns ``(t, prim_index)`` arrays; misses have ``t = inf`` and index
    -1.  Primitives are evaluated in actor-id order with a strict
    less-than update, which implements the lowest-actor-id tie break.  A
    bounding-sphere prefilter keeps the expensive per-primitive tests off
    rays that point nowhere near the primitive.
    """
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    prims = scene.primitives()
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    best_idx = np.full(n, -1, dtype=np.int64)
    if not prims or n == 0:
        return best_t, best_idx
    same_origin = bool(np.all(origins == origins[0]))
    origin0 = origins[0]
    for k, prim in enumerate(prims):
        sphere = _bounding_sphere(prim)
        if sphere is None or n < 64:
            t = _prim_t(prim, origins, dirs)
            better = t < best_t
            best_t[better] = t[better]
            best_idx[better] = k
            continue
        center, radius = sphere
        if same_origin:
            v = center - origin0
            t_close = dirs @ v
            d2 = float(v @ v) - t_close * t_close
        else:
            v = center - origins
            t_close = np.einsum("ij,ij->i", dirs, v)
            d2 = np.einsum("ij,ij->i", v, v) - t_close * t_close
        candidate = (d2 <= radius * radius) & (t_close > -radius)
        # A ray whose current hit is nearer than the whole sphere can't improve.
        candidate &= (t_close - radius) < best_t
        idx = np.flatnonzero(candidate)
        if idx.size == 0:
            continue
        sub_origins = (np.broadcast_to(origin0, (idx.size, 3)) if same_origin
                       else origins[idx])
        t = _prim_t(prim, sub_origins, dirs[idx])
        better = t < best_t[idx]
        chosen = idx[better]
        best_t[chosen] = t[better]
        best_idx[chosen] = k
    return best_t, best_idx


def hit_attributes(scene: SceneGeometry, origins, dirs, t, index):
    """Labels, actor ids and normals for the winning primitives."""
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    prims = scene.primitives()
    n = origins.shape[0]
    labels = np.full(n, LABEL_IDS["sky"], dtype=np.uint8)
    actors = np.zeros(n, dtype=np.int64)
    normals = np.zeros((n, 3))
    for k in np.unique(index):
        if k < 0:
            continue
        prim = prims[k]
        mask = index == k
        labels[mask] = LABEL_IDS[prim.label]
        actors[mask] = prim.actor if prim.actor is not None else 0
        normals[mask] = _prim_normal(prim, origins[mask], dirs[mask], t[mask])
    return labels, actors, normals


def ray_cast(ray: Ray, scene: SceneGeometry) -> Hit | None:
    """Nearest positive-t intersection of one ray, or None."""
    o = np.asarray(ray.origin, dtype=float).reshape(1, 3)
    d = np.asarray(ray.direction, dtype=float).reshape(1, 3)
    t, index = cast_rays(o, d, scene)
    if index[0] < 0:
        return None
    labels, actors, normals = hit_attributes(scene, o, d, t, index)
    prim = scene.primitives()[index[0]]
    return Hit(
        t=float(t[0]),
        point=(o[0] + t[0] * d[0]),
        normal=normals[0],
        actor=prim.actor,
        label=prim.label,
    )


@dataclass(frozen=True)
class LidarConfig:
    channels: int = 32
    v_fov: tuple[float, float] = (-30.0, 10.0)  # deg
    h_steps: int = 1000
    max_range: float = 100.0
    mount: Transform = field(default_factory=Transform)
    noise_sigma: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be > 0")


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3) world frame
    labels: np.ndarray  # (N,) uint8 label ids
    actors: np.ndarray  # (N,) int64, 0 = environment
    sensor_pose: Transform

    def ranges(self) -> np.ndarray:
        return np.linalg.norm(self.points - self.sensor_pose.position, axis=1)

    def label_names(self) -> list[str]:
        return [LABELS[i] for i in self.labels]

    def __len__(self) -> int:
        return len(self.points)


_GRID_CACHE: dict[tuple, np.ndarray] = {}


def _lidar_grid(config: LidarConfig) -> np.ndarray:
    key = ("lidar", config.channels, config.v_fov, config.h_steps)
    grid = _GRID_CACHE.get(key)
    if grid is None:
        elevations = np.deg2rad(np.linspace(config.v_fov[0], config.v_fov[1],
                                            config.channels))
        azimuths = np.arange(config.h_steps) * (2.0 * math.pi / config.h_steps)
        el, az = np.meshgrid(elevations, azimuths, indexing="ij")
        el = el.ravel()
        az = az.ravel()
        cos_el = np.cos(el)
        grid = np.stack([cos_el * np.cos(az), cos_el * np.sin(az), np.sin(el)],
                        axis=1)
        _GRID_CACHE[key] = grid
    return grid


def lidar_rays(config: LidarConfig, sensor_pose: Transform):
    """The scan's regular angular grid in world coordinates (channel-major)."""
    local = _lidar_grid(config)
    rotation = sensor_pose.rotation()
    dirs = local @ rotation.T
    origins = np.broadcast_to(sensor_pose.position, dirs.shape)
    return origins, dirs


def lidar_scan(config: LidarConfig, sensor_pose: Transform,
               scene: SceneGeometry) -> PointCloud:
    """Cast channels x h_steps rays; keep hits within max_range."""
    origins, dirs = lidar_rays(config, sensor_pose)
    t, index = cast_rays(origins, dirs, scene)
    if config.noise_sigma > 0.0:
        rng = np.random.default_rng(config.noise_seed)
        t = t + np.where(np.isfinite(t),
                         rng.normal(0.0, config.noise_sigma, t.shape), 0.0)
    keep = np.isfinite(t) & (t <= config.max_range)
    labels, actors, _ = hit_attributes(scene, origins[keep], dirs[keep],
                                       t[keep], index[keep])
    points = origins[keep] + t[keep, None] * dirs[keep]
    return PointCloud(points=points, labels=labels, actors=actors,
                      sensor_pose=sensor_pose)


@dataclass(frozen=True)
class CameraConfig:
    width: int = 640
    height: int = 480
    h_fov: float = math.radians(90.0)
    max_range: float = 1000.0
    mount: Transform = field(default_factory=Transform)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if not 0.0 < self.h_fov < math.pi:
            raise ValueError("h_fov must be in (0, pi)")


@dataclass(frozen=True)
class CameraFrame:
    width: int
    height: int
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float64, Euclidean ray depth; sentinel=max_range
    labels: np.ndarray  # (H, W) uint8 label ids


def camera_rays(config: CameraConfig, sensor_pose: Transform):
    """One primary ray per pixel through a pinhole at the sensor origin.

    Camera looks along its +x axis; image right is -y, image up is +z.
    """
    w, h = config.width, config.height
    key = ("camera", w, h, config.h_fov)
    local = _GRID_CACHE.get(key)
    if local is None:
        focal = (w / 2.0) / math.tan(config.h_fov / 2.0)
        cols = np.arange(w) + 0.5
        rows = np.arange(h) + 0.5
        y = (w / 2.0 - cols)  # +y left
        z = (h / 2.0 - rows)  # +z up
        zz, yy = np.meshgrid(z, y, indexing="ij")
        local = np.stack([np.full(zz.shape, focal), yy, zz],
                         axis=-1).reshape(-1, 3)
        local /= np.linalg.norm(local, axis=1, keepdims=True)
        _GRID_CACHE[key] = local
    rotation = sensor_pose.rotation()
    dirs = local @ rotation.T
    origins = np.broadcast_to(sensor_pose.position, dirs.shape)
    return origins, dirs


def render_camera(config: CameraConfig, sensor_pose: Transform,
                  scene: SceneGeometry) -> CameraFrame:
    """RGB + depth + segmentation frame from one pinhole camera."""
    origins, dirs = camera_rays(config, sensor_pose)
    t, index = cast_rays(origins, dirs, scene)
    hit = np.isfinite(t) & (t <= config.max_range)
    labels, actors, normals = hit_attributes(scene, origins, dirs, t, index)
    labels = np.where(hit, labels, LABEL_IDS["sky"]).astype(np.uint8)
    depth = np.where(hit, t, config.max_range)
    lambert = np.maximum(0.0, normals @ LIGHT_DIR)
    shade = np.where(hit, AMBIENT + (1.0 - AMBIENT) * lambert, 1.0)
    rgb = PALETTE[labels] * shade[:, None]
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    h, w = config.height, config.width
    return CameraFrame(
        width=w,
        height=h,
        rgb=rgb.reshape(h, w, 3),
        depth=depth.reshape(h, w),
        labels=labels.reshape(h, w),
    )


def box_from_pose(center_pose: Transform, half_extents, label: str,
                  actor: int | None) -> OrientedBox:
    return OrientedBox(
        center=center_pose.position,
        rotation=center_pose.rotation(),
        half_extents=np.asarray(half_extents, dtype=float),
        label=label,
        actor=actor,
    )
