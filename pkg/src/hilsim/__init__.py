"""hilsim: a headless, deterministic human-in-the-loop driving simulator.

A tick-synchronized world hosts autonomous vehicles and an articulated
pedestrian avatar driven by a real person (keyboard UI, replayed motion
files, or fused head/hand trackers).  Simulated AV sensors (ray-casting
LiDAR, RGB/depth/segmentation cameras) perceive the avatar down to its
joint capsules; every tick is recorded and can be replayed to export
multi-view synthetic sensor sequences.  Vehicles signal yielding intent
to pedestrians through a front light strip (eHMI).
"""

from .geom import Transform
from .roads import (
    Crosswalk,
    RoadMap,
    RoadSegment,
    SceneError,
    parse_opendrive_subset,
    parse_scene,
    serialize_scene,
    stop_distance_along_route,
)
from .bvh import BvhClip, SkeletonPose, export_bvh, fk, make_walk_clip, parse_bvh
from .avatar import (
    AvatarRig,
    Capsule,
    TrackerSample,
    avatar_capsules,
    compose_avatar,
    gate_headset,
    solve_arm_ik,
    walk_cycle_pose,
)
from .sensors import (
    CameraConfig,
    CameraFrame,
    Hit,
    LidarConfig,
    PointCloud,
    Ray,
    SceneGeometry,
    lidar_scan,
    ray_cast,
    render_camera,
)
from .traffic import (
    BicycleParams,
    EhmiState,
    Route,
    TrafficParams,
    VehicleControl,
    bicycle_step,
    ehmi_update,
    longitudinal_plan,
    pedestrian_yield_decision,
    pure_pursuit,
    traffic_manager_step,
)
from .audio import AudioCue, AudioSource, engine_intensity, listener_cues
from .world import (
    Event,
    TrafficLightState,
    VehicleState,
    WalkerState,
    World,
    WorldSnapshot,
    traffic_light_step,
)
from .recording import (
    RecordLog,
    export_frames,
    parse_log,
    read_log,
    record_tick,
    replay,
    serialize_log,
    write_log,
)
from .protocol import FrameDecoder, ProtocolError, decode_frame, encode_frame
from .server import Server, ServerEngine
from .scenario import ScenarioConfig, crosswalk_demo, load_scenario, run_scenario
from .presence import PresenceReport, score_presence

__version__ = "0.1.0"
