"""Pydantic models for skeletons, scenes, interaction signals and engine configuration."""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

Character = Literal["I", "II"]
CHARACTERS: tuple[Character, Character] = ("I", "II")

MotionState = Literal["stand", "walk", "sit"]
Posture = Literal["stand", "sit"]
ConfigurationKind = Literal["vis_a_vis", "l_shaped", "side_by_side"]
DistanceKind = Literal["interpersonal", "social", "public"]
GroupName = Literal["root_position", "root_rotation", "head_rotation"]
GazeCategory = Literal["short", "medium", "long"]

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    wrapped = (angle + math.pi) % TWO_PI - math.pi
    if wrapped == -math.pi:
        return math.pi
    return wrapped


def partner_of(character: Character) -> Character:
    return "II" if character == "I" else "I"


class WorldPose(BaseModel):
    """Planar position (meters) and counterclockwise heading (radians)."""

    model_config = ConfigDict(frozen=True)

    position: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0

    @field_validator("heading")
    @classmethod
    def _wrap_heading(cls, value: float) -> float:
        return wrap_angle(value)


class ClockDirection(BaseModel):
    model_config = ConfigDict(frozen=True)

    hour: int = Field(ge=1, le=12)
    minute: int = Field(ge=0, le=59)

    def __str__(self) -> str:
        return f"{self.hour}:{self.minute:02d}"


class RelativeSpatial(BaseModel):
    """Bearing of II seen from I (theta), of I seen from II (phi), and their distance."""

    model_config = ConfigDict(frozen=True)

    theta: float
    phi: float
    distance: float = Field(gt=0)

    @field_validator("theta", "phi")
    @classmethod
    def _wrap(cls, value: float) -> float:
        return wrap_angle(value)


class ProxemicSetup(BaseModel):
    configuration: ConfigurationKind
    distance_category: DistanceKind
    relative: RelativeSpatial
    poses: dict[Character, WorldPose]
    postures: dict[Character, Posture]

    @model_validator(mode="after")
    def _both_characters(self) -> ProxemicSetup:
        for name, mapping in (("poses", self.poses), ("postures", self.postures)):
            if set(mapping) != set(CHARACTERS):
                raise ValueError(f"{name} must cover characters I and II")
        return self


class JointSpec(BaseModel):
    name: str = Field(min_length=1)
    parent: str | None = None
    offset: tuple[float, float, float] | None = None


class SkeletonConfig(BaseModel):
    """Joint hierarchy and channel layout of a motion frame.

    Joint ``j`` owns channels ``[3j, 3j+3)`` as an exponential map; the root
    position follows at ``[3J, 3J+3)`` and the root velocity at ``[3J+3, 3J+6)``.
    The first joint is the root and its rotation is the global orientation.
    """

    joints: list[JointSpec] = Field(min_length=1)
    joint_dim: Literal[3] = 3
    root_dim: Literal[6] = 6
    fps: int = Field(default=30, gt=0)
    head_joint: str | None = "Head"
    upper_body: list[str] = Field(default_factory=list)

    _groups: dict[str, list[int]] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def _build_groups(self) -> SkeletonConfig:
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise ValueError("joint names must be unique")
        index = {name: i for i, name in enumerate(names)}
        for joint in self.joints[1:]:
            if joint.parent is not None and joint.parent not in index:
                raise ValueError(f"joint '{joint.name}': unknown parent '{joint.parent}'")
        if self.head_joint is not None and self.head_joint not in index:
            raise ValueError(f"head_joint '{self.head_joint}' is not a joint")
        unknown = [name for name in self.upper_body if name not in index]
        if unknown:
            raise ValueError(f"upper_body references unknown joints: {', '.join(unknown)}")

        def channels(name: str) -> list[int]:
            start = index[name] * self.joint_dim
            return list(range(start, start + self.joint_dim))

        base = len(names) * self.joint_dim
        groups: dict[str, list[int]] = {
            "root_rotation": channels(names[0]),
            "root_position": [base, base + 1, base + 2],
            "root_velocity": [base + 3, base + 4, base + 5],
        }
        if self.head_joint is not None:
            groups["head_rotation"] = channels(self.head_joint)
        if self.upper_body:
            groups["upper_body"] = [c for name in self.upper_body for c in channels(name)]
        self._groups = groups
        return self

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def width(self) -> int:
        return self.joint_count * self.joint_dim + self.root_dim

    @property
    def named_groups(self) -> dict[str, list[int]]:
        return {name: list(idx) for name, idx in self._groups.items()}

    @property
    def has_hierarchy(self) -> bool:
        """True when every joint has an offset and every non-root joint a parent."""
        if any(j.offset is None for j in self.joints):
            return False
        return all(j.parent is not None for j in self.joints[1:])


class TranscriptWord(BaseModel):
    model_config = ConfigDict(frozen=True)

    word: str = Field(min_length=1)
    start: float = Field(ge=0)
    end: float
    speaker: Character

    @model_validator(mode="after")
    def _ordered(self) -> TranscriptWord:
        if not self.start < self.end:
            raise ValueError(f"word '{self.word}': end {self.end} must follow start {self.start}")
        return self


class SceneContext(BaseModel):
    scenario: str = Field(min_length=1)
    relationship: str = Field(min_length=1)
    emotion: str = Field(min_length=1)
    character_settings: dict[Character, str]

    @model_validator(mode="after")
    def _settings_complete(self) -> SceneContext:
        for character in CHARACTERS:
            if not self.character_settings.get(character, "").strip():
                raise ValueError(f"character_settings needs a description for {character}")
        return self


class RoundWindow(BaseModel):
    """Timing of one round.

    ``segment_start`` is the time of the segment's first frame; ``start``/``end``
    bound the frames the round newly generates (the part after the inpainted
    overlap).
    """

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    segment_start: float = Field(ge=0)
    start: float
    end: float
    frames: int = Field(gt=0)
    fps: int = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> RoundWindow:
        if not self.segment_start <= self.start < self.end:
            raise ValueError("round window must satisfy segment_start <= start < end")
        return self

    def frame_of(self, seconds: float) -> int:
        return round((seconds - self.segment_start) * self.fps)

    def time_of(self, frame: int) -> float:
        return self.segment_start + frame / self.fps

    @property
    def first_frame(self) -> int:
        return self.frame_of(self.start)

    @property
    def end_frame(self) -> int:
        return min(self.frame_of(self.end), self.frames)

    @property
    def frame_count(self) -> int:
        return self.end_frame - self.first_frame


class SpatialSignal(BaseModel):
    """Requested repositioning: optional new F-formation, partner bearing and a move.

    ``movement`` is ``(angle in degrees clockwise from forward, distance in cm)``.
    """

    new_configuration: ConfigurationKind | None = None
    partner_bearing: ClockDirection | None = None
    movement: tuple[float, float] = (0.0, 0.0)

    @field_validator("movement")
    @classmethod
    def _check_movement(cls, value: tuple[float, float]) -> tuple[float, float]:
        angle, distance = value
        if not 0.0 <= angle < 360.0:
            raise ValueError(f"movement angle {angle} outside [0, 360)")
        if distance < 0:
            raise ValueError(f"movement distance {distance} cm is negative")
        return value

    @property
    def moves(self) -> bool:
        return self.movement[1] > 0

    @property
    def turns(self) -> bool:
        return self.partner_bearing is not None or self.new_configuration is not None


class SyncSignal(BaseModel):
    kind: Literal["matching", "meshing"]
    initiator: Character
    responder: Character
    trigger_word: str = Field(min_length=1)

    @model_validator(mode="after")
    def _distinct_roles(self) -> SyncSignal:
        if self.initiator == self.responder:
            raise ValueError("initiator and responder must be different characters")
        return self


class GazeSignal(BaseModel):
    target: Literal["partner", "avoid"] = "partner"
    duration_s: float = Field(gt=0, le=2.5)
    trigger_word: str = Field(min_length=1)


class CharacterSignals(BaseModel):
    spatial: SpatialSignal | None = None
    sync: SyncSignal | None = None
    gaze: GazeSignal | None = None

    @property
    def empty(self) -> bool:
        return self.spatial is None and self.sync is None and self.gaze is None


class InteractionSignalSet(BaseModel):
    signals: dict[Character, CharacterSignals] = Field(default_factory=dict)
    policy_notes: list[str] = Field(default_factory=list)

    def for_character(self, character: Character) -> CharacterSignals:
        return self.signals.get(character, CharacterSignals())

    @property
    def empty(self) -> bool:
        return all(s.empty for s in self.signals.values())


class SpatialPlan(BaseModel):
    """Scene Designer output: qualitative layout plus clock bearings."""

    configuration: ConfigurationKind
    distance_category: DistanceKind
    distance_m: float | None = Field(default=None, gt=0)
    theta: ClockDirection
    phi: ClockDirection
    postures: dict[Character, Posture]


class SpatialProposal(BaseModel):
    adjustments: dict[Character, SpatialSignal] = Field(default_factory=dict)


class SyncProposal(BaseModel):
    sync: SyncSignal | None = None


class GazeProposal(BaseModel):
    gazes: dict[Character, GazeSignal] = Field(default_factory=dict)


class SignalProposals(BaseModel):
    spatial: SpatialProposal = Field(default_factory=SpatialProposal)
    sync: SyncProposal = Field(default_factory=SyncProposal)
    gaze: GazeProposal = Field(default_factory=GazeProposal)


class InteractionContext(BaseModel):
    scene: SceneContext
    prev_motion_description: str = Field(min_length=1)
    upcoming_transcripts: list[TranscriptWord]
    round_index: int = Field(ge=1)
    window: RoundWindow
    poses: dict[Character, WorldPose]
    relative: RelativeSpatial
    setup: ProxemicSetup

    @field_validator("prev_motion_description")
    @classmethod
    def _mentions_both(cls, value: str) -> str:
        if "Character I " not in value or "Character II" not in value:
            raise ValueError("description must mention both characters")
        return value


class ScheduleConfig(BaseModel):
    steps: int = Field(default=1000, ge=2)
    beta_min: float = 1e-4
    beta_max: float = 2e-2


class WindowConfig(BaseModel):
    frames: int = Field(default=150, gt=0)
    hop: int = Field(default=75, gt=0)

    @model_validator(mode="after")
    def _hop_fits(self) -> WindowConfig:
        if self.hop > self.frames:
            raise ValueError(f"hop {self.hop} exceeds window {self.frames}")
        return self

    @property
    def overlap(self) -> int:
        return self.frames - self.hop


DEFAULT_ALPHA_MAP: dict[str, float] = {
    "root_position": 0.1,
    "root_rotation": 20.0,
    "head_rotation": 100.0,
}

# Typical per-channel variance of each group; alpha * variance sets the raw step.
DEFAULT_GROUP_VARIANCE: dict[str, float] = {
    "root_position": 2.5,
    "root_rotation": 0.0125,
    "head_rotation": 0.0025,
}


class GuidanceConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lambda_: float = Field(default=2.0, alias="lambda")
    tau: float = Field(default=0.8, gt=0, le=1)
    updates_per_step: int = Field(default=2, ge=0)
    alpha_map: dict[GroupName, float] = Field(default_factory=lambda: dict(DEFAULT_ALPHA_MAP))
    similarity_cutoff: int = Field(default=200, ge=0)
    ddim_steps: int = Field(default=200, ge=1)
    group_variance: dict[GroupName, float] = Field(
        default_factory=lambda: dict(DEFAULT_GROUP_VARIANCE)
    )
    loss_norm: Literal["squared", "l2"] = "squared"
    similarity_window: Literal["early", "literal"] = "early"
    # recompute: the DDIM step derives its noise from x_t and the guided estimate.
    # denoiser: it carries the denoiser's own estimate forward.
    noise_estimate: Literal["recompute", "denoiser"] = "recompute"

    @field_validator("alpha_map", "group_variance")
    @classmethod
    def _non_negative(cls, value: dict[str, float]) -> dict[str, float]:
        for group, strength in value.items():
            if strength < 0:
                raise ValueError(f"{group} must be >= 0, got {strength}")
        return value

    def step_size(self, group: GroupName) -> float:
        """Raw gradient step of ``group``; groups without a variance use 1."""
        return self.alpha_map.get(group, 0.0) * self.group_variance.get(group, 1.0)


class NodConfig(BaseModel):
    amplitude: float = 0.26
    frequency: float = Field(default=2.0, gt=0)
    duration: float = Field(default=1.0, gt=0)


class GazeConfig(BaseModel):
    avoid_offset: float = Field(default=0.6, gt=0)


class HeadOffsets(BaseModel):
    stand: tuple[float, float, float] = (0.0, 0.0, 1.6)
    walk: tuple[float, float, float] = (0.0, 0.0, 1.6)
    sit: tuple[float, float, float] = (0.0, 0.0, 1.2)

    def for_state(self, state: MotionState) -> tuple[float, float, float]:
        offset: tuple[float, float, float] = getattr(self, state)
        return offset


class PriorComponent(BaseModel):
    mean: float | list[float] = 0.0
    stddev: float = Field(gt=0)
    weight: float = Field(default=1.0, gt=0)


class GaussianPrior(BaseModel):
    """Per-state Gaussian (or Gaussian mixture) prior over motion segments."""

    states: dict[MotionState, list[PriorComponent]]

    @model_validator(mode="after")
    def _weights_sum_to_one(self) -> GaussianPrior:
        for state, components in self.states.items():
            if not components:
                raise ValueError(f"prior for '{state}' has no components")
            total = sum(c.weight for c in components)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"prior weights for '{state}' sum to {total}, expected 1")
        return self


def _default_prior() -> GaussianPrior:
    return GaussianPrior(
        states={s: [PriorComponent(stddev=0.3)] for s in ("stand", "walk", "sit")}
    )


class DmssConfig(BaseModel):
    window: int = Field(default=30, gt=0)
    max_lag: int = Field(default=5, ge=0)
    stride: int = Field(default=15, ge=1)

    @model_validator(mode="after")
    def _window_covers_lags(self) -> DmssConfig:
        if self.window <= 2 * self.max_lag:
            raise ValueError("DMSS window must exceed twice the maximum lag")
        return self


class AgentConfig(BaseModel):
    retries: int = Field(default=2, ge=0)
    timeout_s: float = Field(default=30.0, gt=0)
    template_version: str = "v1"


class LlmConfig(BaseModel):
    base_url_env: str = "DYADIC_LLM_BASE_URL"
    api_key_env: str = "DYADIC_LLM_API_KEY"
    model_env: str = "DYADIC_LLM_MODEL"
    temperature: float = 0.0


class AuditConfig(BaseModel):
    enabled: bool = False
    output: str = "./audit_logs/"


class ControllerConfig(BaseModel):
    enabled: bool = True


class EngineConfig(BaseModel):
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    window: WindowConfig = Field(default_factory=WindowConfig)
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    condition_dropout: float = Field(default=0.2, ge=0, le=1)
    nod: NodConfig = Field(default_factory=NodConfig)
    gaze: GazeConfig = Field(default_factory=GazeConfig)
    head_offsets: HeadOffsets = Field(default_factory=HeadOffsets)
    prior: GaussianPrior = Field(default_factory=_default_prior)
    dmss: DmssConfig = Field(default_factory=DmssConfig)
    agent: AgentConfig = Field(default_factory=AgentConfig)
    llm: LlmConfig = Field(default_factory=LlmConfig)
    audit: AuditConfig = Field(default_factory=AuditConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)


class PlanRule(BaseModel):
    keywords: list[str] = Field(default_factory=list)
    configuration: ConfigurationKind
    distance_category: DistanceKind
    posture: Posture = "stand"


class StubRules(BaseModel):
    """Keyword tables driving the offline rule stub."""

    plan_rules: list[PlanRule] = Field(default_factory=list)
    default_plan: PlanRule
    default_relationship: str = "acquaintances"
    default_emotion: str = "neutral"
    affirm_words: list[str] = Field(default_factory=list)
    emphasis_words: list[str] = Field(default_factory=list)
    emphasis_min_length: int = Field(default=6, ge=1)
    imitation_min_length: int = Field(default=7, ge=1)
    matching_relationships: list[str] = Field(default_factory=list)
    gaze_category: GazeCategory = "medium"
    max_step_cm: float = Field(default=40.0, gt=0)

    def match_plan(self, text: str) -> PlanRule:
        lowered = text.lower()
        for rule in self.plan_rules:
            if any(k.lower() in lowered for k in rule.keywords):
                return rule
        return self.default_plan
