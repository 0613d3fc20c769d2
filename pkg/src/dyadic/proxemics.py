"""Proxemic geometry: clock bearings, F-formation checks and global pose computation.

Conventions: heading 0 faces +X, angles are counterclockwise about +Z, and a
clock reading of 12:00 is straight ahead with 3:00 on the character's right.
"""

from __future__ import annotations

import math

import numpy as np

from dyadic.models import (
    TWO_PI,
    ClockDirection,
    ConfigurationKind,
    DistanceKind,
    GazeCategory,
    RelativeSpatial,
    WorldPose,
    wrap_angle,
)
from dyadic.motion import FloatArray


class ProxemicsError(Exception):
    """Base class for proxemic planning errors."""


class UnknownCategory(ProxemicsError):
    """Raised for a direction or distance category outside the mapping tables."""


class DegeneratePositions(ProxemicsError):
    """Raised when two positions coincide and no bearing can be defined."""


class InvalidDistance(ProxemicsError):
    """Raised for a negative movement distance."""


def _clock(text: str) -> ClockDirection:
    hour, minute = text.split(":")
    return ClockDirection(hour=int(hour), minute=int(minute))


DIRECTION_RANGES: dict[str, tuple[ClockDirection, ClockDirection]] = {
    "front": (_clock("11:15"), _clock("12:45")),
    "front-right": (_clock("12:45"), _clock("2:15")),
    "right": (_clock("2:15"), _clock("3:45")),
    "back-right": (_clock("3:45"), _clock("5:15")),
    "back": (_clock("5:15"), _clock("6:45")),
    "back-left": (_clock("6:45"), _clock("8:15")),
    "left": (_clock("8:15"), _clock("9:45")),
    "front-left": (_clock("9:45"), _clock("11:15")),
}

DISTANCE_RANGES: dict[DistanceKind, tuple[float, float]] = {
    "interpersonal": (0.5, 0.7),
    "social": (0.7, 1.2),
    "public": (1.2, 2.0),
}

# Movement angles in degrees clockwise from forward; pure left/right are unnamed.
MOVEMENT_RANGES: dict[str, tuple[float, float]] = {
    "front-right": (0.0, 45.0),
    "back-right": (135.0, 180.0),
    "back-left": (180.0, 225.0),
    "front-left": (315.0, 360.0),
}

STEP_RANGES: dict[str, tuple[float, float]] = {
    "small": (0.1, 0.2),
    "significant": (0.2, 0.4),
}

GAZE_DURATIONS: dict[GazeCategory, tuple[float, float]] = {
    "short": (0.0, 1.0),
    "medium": (1.0, 1.8),
    "long": (1.8, 2.5),
}

# Canonical (theta, phi) clock bearings of each F-formation.
CANONICAL_BEARINGS: dict[ConfigurationKind, tuple[ClockDirection, ClockDirection]] = {
    "vis_a_vis": (_clock("12:00"), _clock("12:00")),
    "l_shaped": (_clock("10:30"), _clock("1:30")),
    "side_by_side": (_clock("9:00"), _clock("3:00")),
}

# (categories for one bearing, categories for the other); either order matches.
_CONFIGURATION_RULES: dict[ConfigurationKind, list[tuple[set[str], set[str]]]] = {
    "vis_a_vis": [({"front"}, {"front"})],
    "l_shaped": [
        ({"front-left"}, {"front-right", "right"}),
        ({"front-right"}, {"front-left", "left"}),
    ],
    "side_by_side": [({"left"}, {"right"})],
}

_MINUTES_PER_TURN = 720.0
_TOLERANCE = 1e-9


def _clock_minutes(clock: ClockDirection) -> int:
    return (clock.hour % 12) * 60 + clock.minute


def clock_to_angle(clock: ClockDirection) -> float:
    """Clock reading to a counterclockwise angle in (-pi, pi]; 3:00 maps to -pi/2."""
    return wrap_angle(-TWO_PI * _clock_minutes(clock) / _MINUTES_PER_TURN)


def angle_minutes(angle: float) -> float:
    """Clock minutes in [0, 720) of a bearing."""
    return ((-angle) % TWO_PI) * _MINUTES_PER_TURN / TWO_PI


def angle_to_clock(angle: float) -> ClockDirection:
    minutes = round(angle_minutes(angle)) % 720
    hour = minutes // 60 or 12
    return ClockDirection(hour=hour, minute=minutes % 60)


def direction_range(category: str) -> tuple[ClockDirection, ClockDirection]:
    try:
        return DIRECTION_RANGES[category]
    except KeyError:
        raise UnknownCategory(f"Unknown direction category '{category}'") from None


def in_direction(category: str, angle: float) -> bool:
    low, high = (float(_clock_minutes(c)) for c in direction_range(category))
    minutes = angle_minutes(angle)
    if low <= high:
        return low - _TOLERANCE <= minutes <= high + _TOLERANCE
    return minutes >= low - _TOLERANCE or minutes <= high + _TOLERANCE


def direction_of(angle: float) -> str:
    """Name of the first direction category containing ``angle``."""
    for category in DIRECTION_RANGES:
        if in_direction(category, angle):
            return category
    raise UnknownCategory(f"No direction category for angle {angle}")


def distance_range(category: DistanceKind) -> tuple[float, float]:
    try:
        return DISTANCE_RANGES[category]
    except KeyError:
        raise UnknownCategory(f"Unknown distance category '{category}'") from None


def distance_midpoint(category: DistanceKind) -> float:
    low, high = distance_range(category)
    return (low + high) / 2


def in_distance(category: DistanceKind, distance: float) -> bool:
    low, high = distance_range(category)
    return low - _TOLERANCE <= distance <= high + _TOLERANCE


def gaze_duration(category: GazeCategory) -> float:
    """Representative duration of a gaze category (range midpoint)."""
    low, high = GAZE_DURATIONS[category]
    return (low + high) / 2


def movement_direction(angle_deg: float) -> str | None:
    """Named movement direction of an angle, or None for the unnamed sectors."""
    angle = angle_deg % 360.0
    for name, (low, high) in MOVEMENT_RANGES.items():
        if low <= angle <= high:
            return name
    return None


def plan_relative(
    configuration: ConfigurationKind,
    distance_category: DistanceKind,
    distance: float | None = None,
) -> RelativeSpatial:
    """Canonical relative placement of a configuration; distance defaults to the midpoint."""
    theta, phi = CANONICAL_BEARINGS[configuration]
    return RelativeSpatial(
        theta=clock_to_angle(theta),
        phi=clock_to_angle(phi),
        distance=distance if distance is not None else distance_midpoint(distance_category),
    )


def compute_global_pose(pose_i: WorldPose, rel: RelativeSpatial) -> WorldPose:
    """Character II's pose from Character I's pose and their relative placement."""
    direction = pose_i.heading + rel.theta
    x = pose_i.position[0] + rel.distance * math.cos(direction)
    y = pose_i.position[1] + rel.distance * math.sin(direction)
    return WorldPose(position=(x, y), heading=pose_i.heading + rel.theta + math.pi - rel.phi)


def relative_from_world(pose_i: WorldPose, pose_ii: WorldPose) -> RelativeSpatial:
    """Inverse of :func:`compute_global_pose`."""
    dx = pose_ii.position[0] - pose_i.position[0]
    dy = pose_ii.position[1] - pose_i.position[1]
    distance = math.hypot(dx, dy)
    if distance <= _TOLERANCE:
        raise DegeneratePositions(
            f"Characters share position {pose_i.position}; bearings are undefined"
        )
    bearing = math.atan2(dy, dx)
    return RelativeSpatial(
        theta=bearing - pose_i.heading,
        phi=bearing + math.pi - pose_ii.heading,
        distance=distance,
    )


def validate_configuration(configuration: ConfigurationKind, rel: RelativeSpatial) -> bool:
    """True iff both bearings fall in the clock ranges of ``configuration``."""

    def matches(first: set[str], second: set[str], a: float, b: float) -> bool:
        return any(in_direction(c, a) for c in first) and any(in_direction(c, b) for c in second)

    for first, second in _CONFIGURATION_RULES[configuration]:
        if matches(first, second, rel.theta, rel.phi) or matches(first, second, rel.phi, rel.theta):
            return True
    return False


def displacement_to_world(heading: float, move_angle_deg: float, move_dist_m: float) -> FloatArray:
    """World-frame displacement for a move given clockwise from the character's forward."""
    if move_dist_m < 0:
        raise InvalidDistance(f"Movement distance must be >= 0, got {move_dist_m}")
    direction = heading - math.radians(move_angle_deg % 360.0)
    return np.array([move_dist_m * math.cos(direction), move_dist_m * math.sin(direction)])
