"""Vehicle autopilot: kinematic bicycle, pure pursuit, yielding, eHMI.

Per-vehicle decisions are pure functions of the world state, evaluated
independently and applied atomically at the tick boundary.  The external
light strip (eHMI) follows the yield decision: it lights up while the
vehicle is slowing for or stopped at a crossing pedestrian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geom import (
    Transform,
    closest_point_on_polygon,
    distance_to_polygon,
    normalize_angle,
    point_along_polyline,
    point_in_polygon,
    project_onto_polyline,
    polyline_length,
)
from .roads import RoadMap, stop_distance_along_route


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


@dataclass(frozen=True)
class VehicleControl:
    throttle: float = 0.0
    steer: float = 0.0  # positive = left
    brake: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "throttle", _clamp(float(self.throttle), 0.0, 1.0))
        object.__setattr__(self, "steer", _clamp(float(self.steer), -1.0, 1.0))
        object.__setattr__(self, "brake", _clamp(float(self.brake), 0.0, 1.0))


@dataclass(frozen=True)
class TrafficParams:
    speed_limit_factor: float = 1.0
    ignore_lights: bool = False
    ignore_pedestrians: bool = False
    comfort_decel: float = 3.0  # m/s^2
    max_decel: float = 8.0  # m/s^2

    def __post_init__(self):
        if self.speed_limit_factor <= 0.0:
            raise ValueError("speed_limit_factor must be > 0")
        if self.comfort_decel <= 0.0:
            raise ValueError("comfort_decel must be > 0")
        if self.max_decel < self.comfort_decel:
            raise ValueError("max_decel must be >= comfort_decel")


EHMI_STRIP_COLOR = (0, 255, 255)  # cyan


@dataclass(frozen=True)
class EhmiState:
    mode: str = "off"  # off | cruising | yielding | stopped
    strip_active: bool = False
    strip_color: tuple[int, int, int] = EHMI_STRIP_COLOR

    def __post_init__(self):
        if self.strip_active != (self.mode in ("yielding", "stopped")):
            raise ValueError(
                f"strip_active={self.strip_active} contradicts mode "
                f"'{self.mode}'"
            )


@dataclass(frozen=True)
class Route:
    waypoints: np.ndarray  # (N, 2) m
    target_speed: float  # m/s

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        if len(wp) < 2:
            raise ValueError("route needs >= 2 waypoints")
        object.__setattr__(self, "waypoints", wp)

    def length(self) -> float:
        return polyline_length(self.waypoints)


@dataclass(frozen=True)
class BicycleParams:
    a_max: float = 3.0  # m/s^2 at full throttle
    b_max: float = 8.0  # m/s^2 at full brake
    delta_max: float = 0.5  # rad at full steer
    drag: float = 0.0  # 1/s


def bicycle_step(state, control: VehicleControl, dt: float,
                 params: BicycleParams = BicycleParams()):
    """Advance one vehicle by the kinematic bicycle model.

    Speed integrates throttle/brake/drag and clamps at zero; the yaw rate
    is v * tan(steer_angle) / wheelbase and the position advances along
    the new heading.  Returns a new state (dataclasses.replace).
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    v = max(
        0.0,
        state.speed
        + (params.a_max * control.throttle
           - params.b_max * control.brake
           - params.drag * state.speed) * dt,
    )
    tf = state.transform
    delta = params.delta_max * control.steer
    yaw = normalize_angle(tf.yaw + (v / state.wheelbase) * math.tan(delta) * dt)
    new_tf = Transform(
        x=tf.x + v * math.cos(yaw) * dt,
        y=tf.y + v * math.sin(yaw) * dt,
        z=tf.z,
        yaw=yaw,
        pitch=tf.pitch,
        roll=tf.roll,
    )
    return replace(state, transform=new_tf, speed=v, control=control)


@dataclass(frozen=True)
class PursuitResult:
    steer: float
    finished: bool


def pure_pursuit(state, route: Route | None, lookahead: float,
                 delta_max: float = BicycleParams.delta_max) -> PursuitResult:
    """Steer toward the point ``lookahead`` meters ahead on the route.

    Curvature is 2 * y_l / lookahead^2 with y_l the lateral offset of the
    lookahead point in the vehicle frame; the wheel angle atan(k * L) is
    normalized by ``delta_max`` into the unit steer command.
    """
    if lookahead <= 0.0:
        raise ValueError("lookahead must be > 0")
    if route is None or len(route.waypoints) < 2:
        return PursuitResult(steer=0.0, finished=True)
    pos = np.array([state.transform.x, state.transform.y])
    s0 = project_onto_polyline(route.waypoints, pos)
    total = route.length()
    if total - s0 <= 0.1:
        return PursuitResult(steer=0.0, finished=True)
    target = point_along_polyline(route.waypoints, s0 + lookahead)
    yaw = state.transform.yaw
    d = target - pos
    local_x = math.cos(yaw) * d[0] + math.sin(yaw) * d[1]
    local_y = -math.sin(yaw) * d[0] + math.cos(yaw) * d[1]
    if local_x <= 0.0 and abs(local_y) < 1e-9:
        return PursuitResult(steer=0.0, finished=False)
    curvature = 2.0 * local_y / (lookahead * lookahead)
    angle = math.atan(curvature * state.wheelbase)
    return PursuitResult(steer=_clamp(angle / delta_max, -1.0, 1.0),
                         finished=False)


HOLD_DISTANCE = 0.1  # m
HOLD_SPEED = 0.05  # m/s
_KP_THROTTLE = 0.5  # per m/s of speed error
_KP_BRAKE = 0.5


def longitudinal_plan(state, target_speed: float, stop_at: float | None,
                      params: TrafficParams) -> tuple[float, float]:
    """Throttle/brake toward a target speed, with an optional stop point.

    A stop point closer than the comfort-deceleration envelope triggers
    braking proportional to required/max deceleration; inside the envelope
    the speed target is capped to what still allows a comfort stop.  At
    the line (< 0.1 m) with the vehicle essentially stationary the brake
    holds.
    """
    v = state.speed
    if stop_at is not None:
        if stop_at < 0.0:
            raise ValueError("stop_at must be >= 0")
        if stop_at < HOLD_DISTANCE and v < HOLD_SPEED:
            return 0.0, 1.0
        required = math.inf if stop_at <= 1e-9 else v * v / (2.0 * stop_at)
        if required >= params.comfort_decel:
            return 0.0, _clamp(required / params.max_decel, 0.0, 1.0)
        target_speed = min(target_speed,
                           math.sqrt(2.0 * params.comfort_decel * stop_at))
    err = target_speed - v
    if err >= 0.0:
        return _clamp(_KP_THROTTLE * err, 0.0, 1.0), 0.0
    # Over target: brake immediately when stopping, else allow 0.5 m/s slack.
    over = -err if stop_at is not None else -err - 0.5
    return 0.0, _clamp(_KP_BRAKE * over, 0.0, 1.0)


INTENT_RADIUS = 3.0  # m
INTENT_SPEED = 0.1  # m/s approach component


def pedestrian_yield_decision(vehicle, walkers, road_map: RoadMap,
                              params: TrafficParams, route: Route | None,
                              r_intent: float = INTENT_RADIUS) -> float | None:
    """Distance along the route to the stop line of an engaged crosswalk.

    A crosswalk is engaged when a walker stands inside its polygon or is
    within ``r_intent`` of it while moving toward it faster than 0.1 m/s.
    Returns None with ``ignore_pedestrians`` set, when no crosswalk lies
    ahead on the route, or when none is engaged.
    """
    if params.ignore_pedestrians or route is None:
        return None
    remaining = _remaining_route(vehicle, route)
    if remaining is None:
        return None
    best: float | None = None
    for crosswalk in road_map.crosswalks:
        d_stop = stop_distance_along_route(remaining, crosswalk)
        if d_stop is None:
            continue
        if best is not None and d_stop >= best:
            continue
        if any(_walker_engages(w, crosswalk, r_intent) for w in walkers):
            best = d_stop
    return best


def _walker_engages(walker, crosswalk, r_intent: float) -> bool:
    pos = np.array([walker.transform.x, walker.transform.y])
    if point_in_polygon(pos, crosswalk.polygon):
        return True
    if distance_to_polygon(pos, crosswalk.polygon) > r_intent:
        return False
    toward = closest_point_on_polygon(pos, crosswalk.polygon) - pos
    norm = float(np.linalg.norm(toward))
    if norm == 0.0:
        return True
    velocity = walker.speed * np.asarray(walker.direction, dtype=float)
    return float(np.dot(velocity, toward / norm)) > INTENT_SPEED


def _remaining_route(vehicle, route: Route) -> np.ndarray | None:
    """Route polyline from the vehicle's projection to the end."""
    pos = np.array([vehicle.transform.x, vehicle.transform.y])
    s0 = project_onto_polyline(route.waypoints, pos)
    total = route.length()
    if total - s0 <= 1e-9:
        return None
    start = point_along_polyline(route.waypoints, s0)
    pts = [start]
    acc = 0.0
    for a, b in zip(route.waypoints[:-1], route.waypoints[1:]):
        seg = float(np.linalg.norm(b - a))
        if acc + seg > s0 + 1e-12:
            pts.append(b)
        acc += seg
    if len(pts) < 2:
        return None
    return np.asarray(pts)


def ehmi_update(prev: EhmiState, yielding: bool, v: float) -> EhmiState:
    """Light-strip state machine: active while yielding or stopped for it."""
    if yielding and v > HOLD_SPEED:
        mode = "yielding"
    elif yielding:
        mode = "stopped"
    else:
        mode = "cruising"
    return EhmiState(mode=mode, strip_active=mode in ("yielding", "stopped"),
                     strip_color=prev.strip_color)


STOP_MARGIN = 2.0  # m between front bumper and the stop line
DEFAULT_LOOKAHEAD = 6.0  # m


@dataclass(frozen=True)
class VehiclePlan:
    control: VehicleControl
    yielding: bool
    stop_at: float | None


def plan_vehicle(vehicle, walkers, lights, road_map: RoadMap,
                 route: Route | None, params: TrafficParams,
                 bicycle: BicycleParams = BicycleParams(),
                 lookahead: float = DEFAULT_LOOKAHEAD) -> VehiclePlan:
    """One vehicle's control decision for the next tick."""
    pursuit = pure_pursuit(vehicle, route, lookahead, bicycle.delta_max)
    stop_candidates: list[float] = []
    ped_stop = pedestrian_yield_decision(vehicle, walkers, road_map, params,
                                         route)
    if ped_stop is not None:
        stop_candidates.append(ped_stop)
    if not params.ignore_lights and route is not None:
        remaining = _remaining_route(vehicle, route)
        if remaining is not None:
            for light in lights:
                if light.phase != "red":
                    continue
                d = _line_distance_along(remaining, light.stop_line)
                if d is not None:
                    stop_candidates.append(d)
    stop_at: float | None = None
    if stop_candidates:
        standoff = vehicle.half_extents[0] + STOP_MARGIN
        stop_at = max(0.0, min(stop_candidates) - standoff)
    if pursuit.finished:
        brake = 1.0 if vehicle.speed > 0.0 else 0.0
        return VehiclePlan(control=VehicleControl(0.0, 0.0, brake),
                           yielding=False, stop_at=0.0)
    target = route.target_speed * params.speed_limit_factor
    throttle, brake = longitudinal_plan(vehicle, target, stop_at, params)
    return VehiclePlan(
        control=VehicleControl(throttle, pursuit.steer, brake),
        yielding=ped_stop is not None,
        stop_at=stop_at,
    )


def _line_distance_along(route_pts: np.ndarray, line: np.ndarray) -> float | None:
    from .geom import segment_intersection

    acc = 0.0
    for a, b in zip(route_pts[:-1], route_pts[1:]):
        seg = float(np.linalg.norm(b - a))
        t = segment_intersection(a, b, line[0], line[1])
        if t is not None:
            return acc + t * seg
        acc += seg
    return None


def traffic_manager_step(world, params: TrafficParams | None = None):
    """Controls for every routed vehicle, keyed by actor id."""
    params = params or world.traffic_params
    controls: dict[int, VehicleControl] = {}
    walkers = world.walker_states()
    lights = world.light_states()
    for vehicle in world.vehicle_states():
        route = world.route_for(vehicle.id)
        if route is None:
            continue
        plan = plan_vehicle(vehicle, walkers, lights, world.road_map, route,
                            params)
        controls[vehicle.id] = plan.control
    return controls
