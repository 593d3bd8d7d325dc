"""Positional audio cues: per-listener gain, stereo pan, engine intensity.

Playback is the client's job; this module only computes the numbers that
travel inside snapshots.  Gain follows an inverse-distance law with a 1 m
reference; pan is the sine of the source bearing measured clockwise from
the listener's heading (positive = right).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geom import Transform

REFERENCE_DISTANCE = 1.0  # m
IDLE_INTENSITY = 0.2
BRAKE_CUE_THRESHOLD = 0.5

SOURCE_KINDS = ("engine", "footsteps", "voice", "ambient")


@dataclass(frozen=True)
class AudioSource:
    actor: int | None  # None = environment
    kind: str
    base_gain: float = 1.0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind '{self.kind}'")
        if not 0.0 <= self.base_gain <= 1.0:
            raise ValueError("base_gain must be in [0, 1]")


@dataclass(frozen=True)
class AudioCue:
    actor: int | None
    kind: str
    gain: float
    pan: float
    intensity: float = 0.0
    brake_cue: bool = False


def engine_intensity(throttle: float, brake: float) -> tuple[float, bool]:
    """Engine loudness from the control pair: idle floor plus throttle."""
    intensity = IDLE_INTENSITY + (1.0 - IDLE_INTENSITY) * throttle
    return intensity, brake > BRAKE_CUE_THRESHOLD


def listener_cues(listener: Transform, sources, positions,
                  controls=None) -> list[AudioCue]:
    """Cues for one listener.

    ``positions`` maps actor id to an (x, y) position; ``controls`` maps
    actor id to the vehicle control driving engine intensity.  Ambient
    sources play at base gain, centered.
    """
    cues = []
    controls = controls or {}
    for source in sources:
        if source.kind == "ambient" or source.actor is None:
            cues.append(AudioCue(actor=source.actor, kind=source.kind,
                                 gain=source.base_gain, pan=0.0))
            continue
        pos = positions.get(source.actor)
        if pos is None:
            continue
        dx = pos[0] - listener.x
        dy = pos[1] - listener.y
        d = math.hypot(dx, dy)
        gain = source.base_gain * REFERENCE_DISTANCE / max(d, REFERENCE_DISTANCE)
        # Bearing clockwise from the listener's heading.
        bearing = -(math.atan2(dy, dx) - listener.yaw)
        pan = math.sin(bearing)
        intensity = 0.0
        brake_cue = False
        if source.kind == "engine":
            control = controls.get(source.actor)
            if control is not None:
                intensity, brake_cue = engine_intensity(control.throttle,
                                                        control.brake)
        cues.append(AudioCue(actor=source.actor, kind=source.kind, gain=gain,
                             pan=pan, intensity=intensity,
                             brake_cue=brake_cue))
    return cues
