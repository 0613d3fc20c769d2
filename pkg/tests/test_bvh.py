"""Tests for BVH export, read back with the bvh package."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
from bvh import Bvh

from dyadic.bvh import (
    MissingHierarchy,
    depth_first_order,
    export_bvh,
    hierarchy_lines,
    motion_rows,
)
from dyadic.models import JointSpec, SkeletonConfig
from dyadic.trace import MotionTrace, TraceRound

SKELETON = SkeletonConfig(
    joints=[
        JointSpec(name="Hips", offset=(0.0, 0.0, 0.0)),
        JointSpec(name="Spine", parent="Hips", offset=(0.0, 0.0, 0.3)),
        JointSpec(name="Head", parent="Spine", offset=(0.0, 0.0, 0.3)),
    ],
    upper_body=["Spine", "Head"],
)


def _trace(frames_i: np.ndarray, frames_ii: np.ndarray) -> MotionTrace:
    return MotionTrace(
        skeleton=SKELETON,
        window=150,
        hop=75,
        rounds=[TraceRound(index=0, frames={"I": frames_i, "II": frames_ii})],
    )


def _frames(count: int = 4) -> np.ndarray:
    frames = np.zeros((count, SKELETON.width))
    frames[:, 6:9] = (0.0, 0.0, math.pi / 2)
    frames[:, 9:12] = (1.0, 2.0, 3.0)
    return frames


# ── hierarchy ──────────────────────────────────────────────────────────────


def test_depth_first_order_follows_branches():
    """Children are visited before the root's later branches."""
    skeleton = SkeletonConfig(
        joints=[
            JointSpec(name="Hips", offset=(0.0, 0.0, 0.0)),
            JointSpec(name="Spine", parent="Hips", offset=(0.0, 0.0, 0.1)),
            JointSpec(name="LeftUpLeg", parent="Hips", offset=(0.0, 0.1, 0.0)),
            JointSpec(name="Head", parent="Spine", offset=(0.0, 0.0, 0.2)),
        ],
    )

    assert depth_first_order(skeleton) == [0, 1, 3, 2]


def test_hierarchy_needs_offsets():
    """A skeleton without offsets cannot be written."""
    skeleton = SkeletonConfig(
        joints=[JointSpec(name="Hips"), JointSpec(name="Head", parent="Hips")]
    )

    with pytest.raises(MissingHierarchy):
        hierarchy_lines(skeleton)


def test_hierarchy_declares_rotation_order():
    """Every joint states its Euler channel order."""
    lines = hierarchy_lines(SKELETON)

    assert lines[0] == "HIERARCHY"
    assert lines[1] == "ROOT Hips"
    assert sum("Zrotation Yrotation Xrotation" in line for line in lines) == 3


# ── motion ─────────────────────────────────────────────────────────────────


def test_motion_rows_layout():
    """Rows hold the root position, then three Euler angles per joint."""
    rows = motion_rows(_frames(2), SKELETON)

    assert rows.shape == (2, 12)
    np.testing.assert_allclose(rows[0, :3], (1.0, 2.0, 3.0))
    np.testing.assert_allclose(rows[0, 9:12], (90.0, 0.0, 0.0), atol=1e-9)


def test_motion_rows_empty():
    """No frames give no rows."""
    assert motion_rows(np.zeros((0, SKELETON.width)), SKELETON).shape == (0, 12)


# ── files ──────────────────────────────────────────────────────────────────


def test_export_reads_back(tmp_path: Path):
    """A parser recovers joints, frame count, frame time and channel values."""
    path = export_bvh(_trace(_frames(), np.zeros((4, 15))), SKELETON, tmp_path / "I.bvh")

    mocap = Bvh(path.read_text())

    assert mocap.get_joints_names() == ["Hips", "Spine", "Head"]
    assert mocap.nframes == 4
    assert mocap.frame_time == pytest.approx(1 / 30, abs=1e-6)
    assert mocap.joint_offset("Head") == (0.0, 0.0, 0.3)
    assert mocap.joint_parent("Head").name == "Spine"
    assert mocap.frame_joint_channel(2, "Hips", "Yposition") == pytest.approx(2.0)
    assert mocap.frame_joint_channel(2, "Head", "Zrotation") == pytest.approx(90.0)


def test_export_second_character(tmp_path: Path):
    """Each character exports its own frames."""
    path = export_bvh(
        _trace(_frames(), np.zeros((4, 15))), SKELETON, tmp_path / "II.bvh", character="II"
    )

    mocap = Bvh(path.read_text())

    assert mocap.frame_joint_channel(0, "Hips", "Xposition") == pytest.approx(0.0)
    assert mocap.frame_joint_channel(0, "Head", "Zrotation") == pytest.approx(0.0)


def test_export_frame_header(tmp_path: Path):
    """The MOTION header uses the BVH spellings."""
    path = export_bvh(_trace(_frames(3), _frames(3)), SKELETON, tmp_path / "out" / "a.bvh")

    text = path.read_text()

    assert "MOTION\nFrames: 3\nFrame Time: 0.033333\n" in text
