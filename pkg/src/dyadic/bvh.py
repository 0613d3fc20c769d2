"""BVH export of one character's trace.

Joint rotations are written as ``Zrotation Yrotation Xrotation`` (intrinsic
ZYX, degrees), converted from each joint's exponential map. Positions and
offsets keep the trace's meters.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from dyadic.models import Character, JointSpec, SkeletonConfig
from dyadic.motion import FloatArray, group_channels
from dyadic.trace import MotionTrace

ROOT_CHANNELS = "CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation"
JOINT_CHANNELS = "CHANNELS 3 Zrotation Yrotation Xrotation"
END_SITE_LENGTH = 0.1


class MissingHierarchy(Exception):
    """Raised when the skeleton lacks the offsets or parents BVH needs."""


def _fmt(value: float) -> str:
    return f"{value + 0.0:.6f}"


def _children(skeleton: SkeletonConfig) -> dict[str, list[JointSpec]]:
    children: dict[str, list[JointSpec]] = {j.name: [] for j in skeleton.joints}
    for joint in skeleton.joints[1:]:
        if joint.parent is not None:
            children[joint.parent].append(joint)
    return children


def hierarchy_lines(skeleton: SkeletonConfig) -> list[str]:
    """HIERARCHY section; joints appear depth-first, which fixes the MOTION column order."""
    if not skeleton.has_hierarchy:
        raise MissingHierarchy("Skeleton joints need offsets and parents for BVH export")
    children = _children(skeleton)
    lines = ["HIERARCHY"]

    def write(joint: JointSpec, depth: int, is_root: bool) -> None:
        pad = "  " * depth
        offset = joint.offset or (0.0, 0.0, 0.0)
        lines.append(f"{pad}{'ROOT' if is_root else 'JOINT'} {joint.name}")
        lines.append(f"{pad}{{")
        lines.append(f"{pad}  OFFSET {' '.join(_fmt(v) for v in offset)}")
        lines.append(f"{pad}  {ROOT_CHANNELS if is_root else JOINT_CHANNELS}")
        if children[joint.name]:
            for child in children[joint.name]:
                write(child, depth + 1, False)
        else:
            lines.append(f"{pad}  End Site")
            lines.append(f"{pad}  {{")
            lines.append(f"{pad}    OFFSET 0.000000 0.000000 {_fmt(END_SITE_LENGTH)}")
            lines.append(f"{pad}  }}")
        lines.append(f"{pad}}}")

    write(skeleton.joints[0], 0, True)
    return lines


def depth_first_order(skeleton: SkeletonConfig) -> list[int]:
    children = _children(skeleton)
    index = {name: i for i, name in enumerate(skeleton.joint_names)}
    order: list[int] = []
    stack = [skeleton.joints[0]]
    while stack:
        joint = stack.pop()
        order.append(index[joint.name])
        stack.extend(reversed(children[joint.name]))
    return order


def motion_rows(frames: FloatArray, skeleton: SkeletonConfig) -> FloatArray:
    """Frames as BVH channel values: root position then ZYX Euler degrees per joint."""
    frames = np.asarray(frames, dtype=np.float64)
    count = frames.shape[0]
    columns = [frames[:, group_channels(skeleton, "root_position")]]
    for joint in depth_first_order(skeleton):
        rotvec = np.array(frames[:, 3 * joint : 3 * joint + 3])
        columns.append(Rotation.from_rotvec(rotvec).as_euler("ZYX", degrees=True) + 0.0)
    return np.hstack(columns) if count else np.zeros((0, 3 + 3 * skeleton.joint_count))


def export_bvh(
    trace: MotionTrace,
    skeleton: SkeletonConfig,
    path: Path,
    character: Character = "I",
) -> Path:
    """Write ``character``'s frames as a BVH file at ``path`` (atomically)."""
    lines = hierarchy_lines(skeleton)
    rows = motion_rows(trace.frames(character), skeleton)
    lines.append("MOTION")
    lines.append(f"Frames: {rows.shape[0]}")
    lines.append(f"Frame Time: {1.0 / skeleton.fps:.6f}")
    lines.extend(" ".join(_fmt(v) for v in row) for row in rows)

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path
