"""Compile interaction signals into trajectory and similarity constraints for the sampler."""

from __future__ import annotations

import math
from collections.abc import Sequence
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from dyadic.models import (
    CHARACTERS,
    Character,
    EngineConfig,
    GazeSignal,
    GroupName,
    InteractionSignalSet,
    MotionState,
    NodConfig,
    RoundWindow,
    SkeletonConfig,
    SpatialSignal,
    SyncSignal,
    TranscriptWord,
    WorldPose,
    partner_of,
    wrap_angle,
)
from dyadic.motion import (
    FloatArray,
    compose_yaw_pitch,
    frozen_array,
    group_channels,
    pose_to_local,
    vector_to_local,
    yaw_pitch,
)
from dyadic.proxemics import (
    CANONICAL_BEARINGS,
    DegeneratePositions,
    ProxemicsError,
    clock_to_angle,
    displacement_to_world,
)


class ConstraintError(Exception):
    """Base class for constraint compilation errors."""


class TriggerWordNotFound(ConstraintError):
    """Raised when a signal's trigger word does not occur inside the round window."""


class MissingSource(ConstraintError):
    """Raised when an imitation signal has no motion to copy from."""


class CompileError(ConstraintError):
    """Raised with every sub-error of one compilation, each tagged with character and signal."""

    def __init__(self, errors: list[str]) -> None:
        self.errors = errors
        super().__init__("; ".join(errors))


class TrajectoryConstraint(BaseModel):
    """Masked targets ``W ⊙ J̃`` for the channels in ``selector`` of every segment frame."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    group: GroupName
    selector: list[int]
    targets: np.ndarray
    mask: np.ndarray

    @field_validator("targets", "mask", mode="before")
    @classmethod
    def _freeze(cls, value: Any) -> FloatArray:
        return frozen_array(value)

    @model_validator(mode="after")
    def _consistent(self) -> TrajectoryConstraint:
        if self.targets.ndim != 2 or self.targets.shape != self.mask.shape:
            raise ValueError(
                f"targets {self.targets.shape} and mask {self.mask.shape} must be equal 2-D shapes"
            )
        if self.targets.shape[1] != len(self.selector):
            raise ValueError(
                f"targets have {self.targets.shape[1]} columns for {len(self.selector)} channels"
            )
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise ValueError("mask entries must be 0 or 1")
        if not np.isfinite(self.targets).all():
            raise ValueError("targets contain non-finite values")
        return self

    @property
    def frame_count(self) -> int:
        return int(self.targets.shape[0])


class SimilarityConstraint(BaseModel):
    """Target segment whose ``selector`` channels replace the clean estimate early in sampling."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    target: np.ndarray
    selector: list[int]
    cutoff: int = Field(ge=0)

    @field_validator("target", mode="before")
    @classmethod
    def _freeze(cls, value: Any) -> FloatArray:
        array = frozen_array(value)
        if array.ndim != 2:
            raise ValueError(f"target must be 2-D, got shape {array.shape}")
        return array


class ConstraintSet(BaseModel):
    trajectory: list[TrajectoryConstraint] = Field(default_factory=list)
    similarity: SimilarityConstraint | None = None
    next_state: MotionState | None = None

    @model_validator(mode="after")
    def _one_per_group(self) -> ConstraintSet:
        groups = [c.group for c in self.trajectory]
        if len(groups) != len(set(groups)):
            raise ValueError(f"at most one constraint per group, got {groups}")
        walks = "root_position" in groups
        if walks != (self.next_state == "walk"):
            raise ValueError("next_state must be 'walk' exactly when root_position is constrained")
        return self

    @property
    def empty(self) -> bool:
        return not self.trajectory and self.similarity is None

    def group(self, name: GroupName) -> TrajectoryConstraint | None:
        return next((c for c in self.trajectory if c.group == name), None)

    def to_payload(self) -> dict[str, Any]:
        """Plain JSON-ready dict with a fixed key order."""
        return {
            "trajectory": [
                {
                    "group": c.group,
                    "selector": list(c.selector),
                    "targets": c.targets.tolist(),
                    "mask": c.mask.astype(int).tolist(),
                }
                for c in self.trajectory
            ],
            "similarity": None
            if self.similarity is None
            else {
                "selector": list(self.similarity.selector),
                "cutoff": self.similarity.cutoff,
                "target": self.similarity.target.tolist(),
            },
            "next_state": self.next_state,
        }


class CharacterState(BaseModel):
    """What the compiler needs to know about one character at the start of a round.

    ``current`` is the world pose at the last generated frame; ``base`` is the
    world pose the new segment's local frame is anchored at. ``tail`` holds the
    inpainted overlap frames in that local frame; ``source`` is the previous
    segment, used when the character is imitated.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    current: WorldPose
    base: WorldPose
    motion_state: MotionState = "stand"
    tail: np.ndarray | None = None
    source: np.ndarray | None = None


def resolve_word_timestamp(
    word: str, words: Sequence[TranscriptWord], window: tuple[float, float]
) -> float:
    """Start time of the first case-insensitive occurrence of ``word`` inside ``window``."""
    start, end = window
    needle = word.strip().lower()
    hits = sorted(w.start for w in words if w.word.lower() == needle and start <= w.start < end)
    if not hits:
        raise TriggerWordNotFound(f"Trigger word '{word}' not found in [{start:.2f}, {end:.2f})")
    return hits[0]


def _frame_span(window: RoundWindow, onset: float, duration: float) -> tuple[int, int]:
    first = max(window.frame_of(onset), window.first_frame)
    last = min(window.frame_of(onset + duration), window.end_frame - 1)
    return first, last


def nod_pitch(times: FloatArray, onset: float, nod: NodConfig) -> FloatArray:
    result: FloatArray = nod.amplitude * np.sin(2.0 * math.pi * nod.frequency * (times - onset))
    return result


def nod_trajectory(
    onset: float, window: RoundWindow, skeleton: SkeletonConfig, nod: NodConfig
) -> TrajectoryConstraint:
    """Sinusoidal pitch on the head's lateral channel for ``nod.duration`` seconds from onset.

    A nod running past the window end is truncated.
    """
    head = group_channels(skeleton, "head_rotation")
    targets = np.zeros((window.frames, 1))
    mask = np.zeros_like(targets)
    first, last = _frame_span(window, onset, nod.duration)
    if first <= last:
        frames = np.arange(first, last + 1)
        times = np.array([window.time_of(int(f)) for f in frames])
        targets[frames, 0] = nod_pitch(times, onset, nod)
        mask[frames, 0] = 1.0
    return TrajectoryConstraint(
        group="head_rotation", selector=[head[1]], targets=targets, mask=mask
    )


def gaze_angles(
    own: WorldPose,
    partner: WorldPose,
    own_offset: Sequence[float],
    partner_offset: Sequence[float],
) -> tuple[float, float]:
    """Head (yaw, pitch) relative to the body that faces the partner's head."""
    own_head = np.array([*own.position, 0.0]) + np.asarray(own_offset)
    partner_head = np.array([*partner.position, 0.0]) + np.asarray(partner_offset)
    dx, dy, dz = partner_head - own_head
    horizontal = math.hypot(dx, dy)
    if horizontal <= 1e-9:
        raise DegeneratePositions("Heads coincide horizontally; gaze direction is undefined")
    yaw = wrap_angle(math.atan2(dy, dx) - own.heading)
    pitch = -math.atan2(dz, horizontal)
    return yaw, pitch


def gaze_trajectory(
    own: WorldPose,
    partner: WorldPose,
    signal: GazeSignal,
    onset: float,
    window: RoundWindow,
    skeleton: SkeletonConfig,
    offsets: tuple[Sequence[float], Sequence[float]],
    avoid_offset: float = 0.6,
) -> TrajectoryConstraint:
    """Hold the head toward (or deliberately away from) the partner over the gaze interval."""
    yaw, pitch = gaze_angles(own, partner, offsets[0], offsets[1])
    if signal.target == "avoid":
        yaw = wrap_angle(yaw - avoid_offset if yaw >= 0 else yaw + avoid_offset)
    head = group_channels(skeleton, "head_rotation")
    targets = np.zeros((window.frames, 3))
    mask = np.zeros_like(targets)
    first, last = _frame_span(window, onset, signal.duration_s)
    if first <= last:
        targets[first : last + 1] = compose_yaw_pitch(yaw, pitch)
        mask[first : last + 1] = 1.0
    return TrajectoryConstraint(group="head_rotation", selector=head, targets=targets, mask=mask)


def merge_head_constraints(
    gaze: TrajectoryConstraint, nod: TrajectoryConstraint
) -> TrajectoryConstraint:
    """One head constraint: nod pitch is added to the gaze pitch where both are active."""
    targets = np.array(gaze.targets)
    mask = np.array(gaze.mask)
    gaze_on = gaze.mask[:, 0] > 0
    nod_on = nod.mask[:, 0] > 0
    for frame in np.flatnonzero(nod_on):
        if gaze_on[frame]:
            yaw, pitch = yaw_pitch(gaze.targets[frame])
            targets[frame] = compose_yaw_pitch(yaw, pitch + nod.targets[frame, 0])
        else:
            targets[frame] = (0.0, nod.targets[frame, 0], 0.0)
            mask[frame] = (0.0, 1.0, 0.0)
    return TrajectoryConstraint(
        group="head_rotation", selector=list(gaze.selector), targets=targets, mask=mask
    )


def root_targets(
    current: WorldPose,
    delta_position: Sequence[float],
    delta_heading: float,
    frames: int,
    skeleton: SkeletonConfig,
) -> list[TrajectoryConstraint]:
    """Linear root position and heading ramps from ``current`` over ``frames`` frames.

    Heading follows the shorter arc, so targets may leave (-pi, pi]. Only the
    horizontal position and the vertical component of the root rotation are
    constrained.
    """
    if frames < 2:
        raise ConstraintError(f"root targets need at least 2 frames, got {frames}")
    s = np.linspace(0.0, 1.0, frames)
    start = np.asarray(current.position)
    positions = np.zeros((frames, 3))
    positions[:, :2] = start + np.outer(s, np.asarray(delta_position, dtype=np.float64))
    position_mask = np.zeros_like(positions)
    position_mask[:, :2] = 1.0
    headings = (current.heading + s * wrap_angle(delta_heading))[:, None]
    return [
        TrajectoryConstraint(
            group="root_position",
            selector=group_channels(skeleton, "root_position"),
            targets=positions,
            mask=position_mask,
        ),
        TrajectoryConstraint(
            group="root_rotation",
            selector=[group_channels(skeleton, "root_rotation")[2]],
            targets=headings,
            mask=np.ones_like(headings),
        ),
    ]


def embed(constraint: TrajectoryConstraint, offset: int, total: int) -> TrajectoryConstraint:
    """Place a constraint's rows at ``offset`` inside a ``total``-frame segment."""
    end = offset + constraint.frame_count
    if offset < 0 or end > total:
        raise ConstraintError(f"rows [{offset}, {end}) do not fit a {total}-frame segment")
    targets = np.zeros((total, len(constraint.selector)))
    mask = np.zeros_like(targets)
    targets[offset:end] = constraint.targets
    mask[offset:end] = constraint.mask
    return constraint.model_copy(
        update={"targets": frozen_array(targets), "mask": frozen_array(mask)}
    )


def _heading_change(
    character: Character,
    signal: SpatialSignal,
    state: CharacterState,
    partner: WorldPose,
    target_position: FloatArray,
) -> float:
    if signal.partner_bearing is not None:
        bearing = clock_to_angle(signal.partner_bearing)
    elif signal.new_configuration is not None:
        theta, phi = CANONICAL_BEARINGS[signal.new_configuration]
        bearing = clock_to_angle(theta if character == "I" else phi)
    else:
        return 0.0
    dx, dy = np.asarray(partner.position) - target_position
    if math.hypot(dx, dy) <= 1e-9:
        raise DegeneratePositions("Target position coincides with the partner")
    desired = math.atan2(dy, dx) - bearing
    return wrap_angle(desired - state.current.heading)


def spatial_constraints(
    character: Character,
    signal: SpatialSignal,
    state: CharacterState,
    partner: WorldPose,
    window: RoundWindow,
    skeleton: SkeletonConfig,
) -> list[TrajectoryConstraint]:
    angle, distance_cm = signal.movement
    step = displacement_to_world(state.current.heading, angle, distance_cm / 100.0)
    target_position = np.asarray(state.current.position) + step
    turn = _heading_change(character, signal, state, partner, target_position)
    local = pose_to_local(state.current, state.base)
    delta = vector_to_local(step, state.base)
    ramps = root_targets(local, delta, turn, window.frame_count, skeleton)
    if not signal.moves:
        ramps = [c for c in ramps if c.group != "root_position"]
    if not signal.moves and turn == 0.0:
        return []
    return [embed(c, window.first_frame, window.frames) for c in ramps]


def imitation_constraint(
    source: FloatArray | None,
    responder_tail: FloatArray | None,
    onset: float,
    window: RoundWindow,
    skeleton: SkeletonConfig,
    cutoff: int,
) -> SimilarityConstraint:
    """Copy the initiator's upper body, shifted to start at ``onset``.

    Channels outside the upper body hold the responder's last tail frame.
    """
    if source is None or len(source) == 0:
        raise MissingSource("Imitation needs the initiator's previous motion")
    if responder_tail is None or len(responder_tail) == 0:
        raise MissingSource("Imitation needs the responder's previous tail")
    source = np.asarray(source, dtype=np.float64)
    upper = group_channels(skeleton, "upper_body")
    target = np.tile(np.asarray(responder_tail, dtype=np.float64)[-1], (window.frames, 1))
    shift = window.frame_of(onset) - window.first_frame
    rows = np.clip(np.arange(window.frames) - shift, 0, source.shape[0] - 1)
    target[:, upper] = source[rows][:, upper]
    return SimilarityConstraint(target=target, selector=upper, cutoff=cutoff)


def _sync_signals(signals: InteractionSignalSet) -> list[SyncSignal]:
    found: list[SyncSignal] = []
    for character in CHARACTERS:
        sync = signals.for_character(character).sync
        if sync is not None and sync not in found:
            found.append(sync)
    return found


def compile(
    signals: InteractionSignalSet,
    states: dict[Character, CharacterState],
    words: Sequence[TranscriptWord],
    window: RoundWindow,
    skeleton: SkeletonConfig,
    config: EngineConfig,
) -> dict[Character, ConstraintSet]:
    """Per-character constraint sets for one round.

    Sync signals apply to their responder wherever they are filed. Every
    sub-error is collected and raised together as :class:`CompileError`.
    """
    errors: list[str] = []
    span = (window.start, window.end)
    heads: dict[Character, dict[str, TrajectoryConstraint]] = {c: {} for c in CHARACTERS}
    roots: dict[Character, list[TrajectoryConstraint]] = {c: [] for c in CHARACTERS}
    similarity: dict[Character, SimilarityConstraint] = {}

    def offsets(character: Character) -> tuple[Sequence[float], Sequence[float]]:
        partner = partner_of(character)
        return (
            config.head_offsets.for_state(states[character].motion_state),
            config.head_offsets.for_state(states[partner].motion_state),
        )

    for character in CHARACTERS:
        wanted = signals.for_character(character)
        partner = states[partner_of(character)].current
        if wanted.spatial is not None:
            try:
                roots[character] = spatial_constraints(
                    character, wanted.spatial, states[character], partner, window, skeleton
                )
            except (ConstraintError, ProxemicsError) as exc:
                errors.append(f"{character}.spatial: {exc}")
        if wanted.gaze is not None:
            try:
                onset = resolve_word_timestamp(wanted.gaze.trigger_word, words, span)
                heads[character]["gaze"] = gaze_trajectory(
                    states[character].current,
                    partner,
                    wanted.gaze,
                    onset,
                    window,
                    skeleton,
                    offsets(character),
                    config.gaze.avoid_offset,
                )
            except (ConstraintError, ProxemicsError) as exc:
                errors.append(f"{character}.gaze: {exc}")

    for sync in _sync_signals(signals):
        responder = sync.responder
        try:
            onset = resolve_word_timestamp(sync.trigger_word, words, span)
            if sync.kind == "meshing":
                heads[responder]["nod"] = nod_trajectory(onset, window, skeleton, config.nod)
            else:
                similarity[responder] = imitation_constraint(
                    states[sync.initiator].source,
                    states[responder].tail,
                    onset,
                    window,
                    skeleton,
                    config.guidance.similarity_cutoff,
                )
        except ConstraintError as exc:
            errors.append(f"{responder}.sync: {exc}")

    if errors:
        raise CompileError(errors)

    result: dict[Character, ConstraintSet] = {}
    for character in CHARACTERS:
        trajectory = list(roots[character])
        head = heads[character]
        if "gaze" in head and "nod" in head:
            trajectory.append(merge_head_constraints(head["gaze"], head["nod"]))
        elif head:
            trajectory.append(next(iter(head.values())))
        walks = any(c.group == "root_position" for c in trajectory)
        result[character] = ConstraintSet(
            trajectory=trajectory,
            similarity=similarity.get(character),
            next_state="walk" if walks else None,
        )
    return result
