"""Motion segments, channel selection and root/head kinematics."""

from __future__ import annotations

import math
from collections.abc import Sequence
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.spatial.transform import Rotation

from dyadic.models import Character, SkeletonConfig, WorldPose

FloatArray = NDArray[np.float64]


class MotionError(Exception):
    """Base class for motion representation errors."""


class InvalidSelector(MotionError):
    """Raised when a channel selector references channels outside the frame."""


class TooShort(MotionError):
    """Raised when a segment has too few frames for the requested operation."""


class MissingGroup(MotionError):
    """Raised when a named channel group is not defined for the skeleton."""


def frozen_array(value: Any) -> FloatArray:
    """Copy ``value`` into a read-only float64 array."""
    array = np.array(value, dtype=np.float64)
    array.setflags(write=False)
    return array


class MotionSegment(BaseModel):
    """K frames of one character's motion (rows are frames, columns channels)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frames: np.ndarray
    character: Character
    round_index: int = Field(default=0, ge=0)

    @field_validator("frames", mode="before")
    @classmethod
    def _check_frames(cls, value: Any) -> FloatArray:
        array = frozen_array(value)
        if array.ndim != 2 or array.shape[0] == 0:
            raise ValueError(f"frames must be a non-empty 2-D array, got shape {array.shape}")
        if not np.isfinite(array).all():
            raise ValueError("frames contain non-finite values")
        return array

    @property
    def frame_count(self) -> int:
        return int(self.frames.shape[0])

    @property
    def width(self) -> int:
        return int(self.frames.shape[1])

    def replace_frames(self, frames: FloatArray) -> MotionSegment:
        return MotionSegment(frames=frames, character=self.character, round_index=self.round_index)


def _values(data: MotionSegment | FloatArray) -> FloatArray:
    if isinstance(data, MotionSegment):
        return data.frames
    return np.asarray(data, dtype=np.float64)


def _selector(selector: Sequence[int], width: int) -> NDArray[np.intp]:
    index = np.asarray(list(selector), dtype=np.intp)
    if index.size and (index.min() < 0 or index.max() >= width):
        bad = [int(i) for i in index if i < 0 or i >= width]
        raise InvalidSelector(f"channels {bad} outside frame width {width}")
    return index


def extract(data: MotionSegment | FloatArray, selector: Sequence[int]) -> FloatArray:
    """Gather the selected channels of every frame (frames x len(selector))."""
    values = _values(data)
    index = _selector(selector, values.shape[1])
    return values[:, index].copy()


def extract_adjoint(values: FloatArray, selector: Sequence[int], width: int) -> FloatArray:
    """Scatter ``values`` into a zero matrix of ``width`` columns at ``selector``.

    Repeated channels accumulate, which keeps this the exact adjoint of :func:`extract`.
    """
    values = np.asarray(values, dtype=np.float64)
    index = _selector(selector, width)
    if values.ndim != 2 or values.shape[1] != index.size:
        raise InvalidSelector(
            f"values with {values.shape[-1]} columns do not match a selector of {index.size}"
        )
    out = np.zeros((values.shape[0], width))
    np.add.at(out, (slice(None), index), values)
    return out


def velocities(data: MotionSegment | FloatArray, selector: Sequence[int]) -> FloatArray:
    values = extract(data, selector)
    if values.shape[0] < 2:
        raise TooShort(f"velocities need at least 2 frames, got {values.shape[0]}")
    return np.diff(values, axis=0)


def group_channels(skeleton: SkeletonConfig, name: str) -> list[int]:
    groups = skeleton.named_groups
    if name not in groups:
        raise MissingGroup(f"skeleton defines no '{name}' group")
    return groups[name]


def yaw_pitch(rotvec: Sequence[float]) -> tuple[float, float]:
    """Decompose an exponential map as yaw about +Z then pitch about the lateral +Y axis.

    Roll is discarded. Positive pitch tilts the forward axis downward.
    """
    yaw, pitch, _roll = Rotation.from_rotvec(np.array(rotvec, dtype=np.float64)).as_euler("ZYX")
    return float(yaw), float(pitch)


def compose_yaw_pitch(yaw: float, pitch: float) -> FloatArray:
    """Exponential map of the rotation ``Rz(yaw) @ Ry(pitch)``; inverse of :func:`yaw_pitch`."""
    rotvec: FloatArray = Rotation.from_euler("ZY", [yaw, pitch]).as_rotvec()
    return rotvec


def head_orientation(frame: FloatArray, skeleton: SkeletonConfig) -> tuple[float, float]:
    """Head (yaw, pitch) in radians relative to the body, read from one frame."""
    channels = group_channels(skeleton, "head_rotation")
    values = np.asarray(frame, dtype=np.float64)
    if values.shape != (skeleton.width,):
        raise InvalidSelector(
            f"frame width {values.shape} does not match skeleton {skeleton.width}"
        )
    return yaw_pitch(values[channels])


def root_pose(frame: FloatArray, skeleton: SkeletonConfig) -> WorldPose:
    """Planar root position and heading of one frame."""
    values = np.asarray(frame, dtype=np.float64)
    position = values[group_channels(skeleton, "root_position")]
    heading, _ = yaw_pitch(values[group_channels(skeleton, "root_rotation")])
    return WorldPose(position=(float(position[0]), float(position[1])), heading=heading)


def _rotation_2d(angle: float) -> FloatArray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _transform(
    segment: MotionSegment,
    skeleton: SkeletonConfig,
    heading: float,
    shift_before: FloatArray,
    shift_after: FloatArray,
) -> MotionSegment:
    if segment.width != skeleton.width:
        raise InvalidSelector(
            f"segment width {segment.width} does not match skeleton {skeleton.width}"
        )
    frames = np.array(segment.frames)
    rot = _rotation_2d(heading)
    position = group_channels(skeleton, "root_position")[:2]
    velocity = group_channels(skeleton, "root_velocity")[:2]
    orientation = group_channels(skeleton, "root_rotation")

    frames[:, position] = (frames[:, position] + shift_before) @ rot.T + shift_after
    frames[:, velocity] = frames[:, velocity] @ rot.T
    turn = Rotation.from_euler("z", heading)
    frames[:, orientation] = (turn * Rotation.from_rotvec(frames[:, orientation])).as_rotvec()
    return segment.replace_frames(frames)


def to_world(segment: MotionSegment, base: WorldPose, skeleton: SkeletonConfig) -> MotionSegment:
    """Place a segment expressed in its local frame at ``base``.

    Root positions and velocities are rotated by ``base.heading`` and positions
    translated by ``base.position``; the root orientation is turned by the same
    heading; joint-local channels are unchanged.
    """
    return _transform(segment, skeleton, base.heading, np.zeros(2), np.asarray(base.position))


def from_world(segment: MotionSegment, base: WorldPose, skeleton: SkeletonConfig) -> MotionSegment:
    """Inverse of :func:`to_world`."""
    return _transform(segment, skeleton, -base.heading, -np.asarray(base.position), np.zeros(2))


def pose_to_local(pose: WorldPose, base: WorldPose) -> WorldPose:
    offset = np.asarray(pose.position) - np.asarray(base.position)
    local = _rotation_2d(-base.heading) @ offset
    heading = pose.heading - base.heading
    return WorldPose(position=(float(local[0]), float(local[1])), heading=heading)


def vector_to_local(vector: FloatArray, base: WorldPose) -> FloatArray:
    local: FloatArray = _rotation_2d(-base.heading) @ np.asarray(vector, dtype=np.float64)
    return local
