"""Head and hand trackers layered over a base walking pose.

A headset sample re-anchors the avatar root (with dead-zone gating so
sensor jitter does not creep), orients the neck, and each hand target
places its wrist with the elbow solved analytically.
"""

import math

import numpy as np

from hilsim.avatar import FusionConfig, TrackerSample, compose_avatar, solve_arm_ik
from hilsim.bvh import fk, make_walk_clip
from hilsim.geom import Transform

clip = make_walk_clip()
base = fk(clip, 0)
hips = base.positions[base.index("Hips")]
print(f"base pose: hips at ({hips[0]:.2f}, {hips[1]:.2f}, {hips[2]:.2f})")

# Jitter below the thresholds (1 cm, 1 degree) leaves the pose untouched.
tiny = TrackerSample(0.0, Transform(0.004, 0.0, 1.7, math.radians(0.4)))
fused = compose_avatar(base, tiny)
print("sub-threshold headset sample: root moved",
      bool(np.any(fused.positions[0] != base.positions[0])))

# A real step through: root snaps to the headset, neck takes its yaw.
stride = TrackerSample(0.0, Transform(0.35, 0.10, 1.7, math.radians(20)))
fused = compose_avatar(base, stride)
print(f"after a 0.36 m headset move: hips at "
      f"({fused.positions[0][0]:.2f}, {fused.positions[0][1]:.2f})")

# Reaching for a point: the analytic two-bone solution.
cfg = FusionConfig()
shoulder = base.positions[base.index("LeftArm")]
target = shoulder + np.array([0.30, 0.15, -0.20])
arm = solve_arm_ik(shoulder, cfg.upper_len, cfg.fore_len, target, cfg.pole)
print(f"reach for ({target[0]:.2f}, {target[1]:.2f}, {target[2]:.2f}): "
      f"elbow angle {math.degrees(arm.elbow_angle):.1f} deg, "
      f"reachable={arm.reachable}")
residual = (cfg.upper_len ** 2 + cfg.fore_len ** 2
            - 2 * cfg.upper_len * cfg.fore_len * math.cos(arm.elbow_angle)
            - float(np.sum((target - shoulder) ** 2)))
print(f"law-of-cosines residual: {residual:.2e}")
