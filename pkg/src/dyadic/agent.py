"""Social agent: scene analysis, proxemic planning and the per-round dynamic controller.

Every language-model call goes through :class:`LlmPort` with an explicit
response schema; responses that fail validation are retried with the
validation error appended to the prompt.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from typing import Any, Protocol, TypeVar

from loguru import logger
from pydantic import BaseModel, Field, ValidationError

from dyadic.audit import DecisionLog
from dyadic.constraints import TriggerWordNotFound
from dyadic.models import (
    CHARACTERS,
    AgentConfig,
    Character,
    CharacterSignals,
    GazeProposal,
    InteractionContext,
    InteractionSignalSet,
    ProxemicSetup,
    RelativeSpatial,
    RoundWindow,
    SceneContext,
    SignalProposals,
    SkeletonConfig,
    SpatialPlan,
    SpatialProposal,
    SyncProposal,
    TranscriptWord,
    WorldPose,
)
from dyadic.motion import FloatArray, head_orientation, root_pose
from dyadic.prompts import render
from dyadic.proxemics import (
    angle_to_clock,
    clock_to_angle,
    compute_global_pose,
    direction_of,
    distance_range,
    in_distance,
    relative_from_world,
    validate_configuration,
)

ResponseT = TypeVar("ResponseT", bound=BaseModel)


class AgentError(Exception):
    """Base class for director agent errors."""


class AgentProtocolError(AgentError):
    """Raised when a port response still fails its schema after all retries."""


class PlanInconsistent(AgentError):
    """Raised when a spatial plan's clock readings or distance contradict its categories."""


class PromptRequest(BaseModel):
    """One port call: rendered prompt text plus the structured inputs behind it."""

    template_id: str
    prompt: str
    payload: dict[str, Any] = Field(default_factory=dict)
    schema_name: str
    response_schema: dict[str, Any]
    feedback: list[str] = Field(default_factory=list)


class LlmPort(Protocol):
    def complete(self, request: PromptRequest) -> str: ...


def _ask(
    port: LlmPort,
    template_id: str,
    variables: dict[str, str],
    payload: dict[str, Any],
    response: type[ResponseT],
    config: AgentConfig,
    log: DecisionLog | None = None,
    round_index: int = 0,
) -> ResponseT:
    prompt = render(template_id, variables, config.template_version)
    feedback: list[str] = []
    for attempt in range(config.retries + 1):
        text = prompt
        if feedback:
            text += "\nYour previous answer was rejected:\n" + feedback[-1]
        request = PromptRequest(
            template_id=template_id,
            prompt=text,
            payload=payload,
            schema_name=response.__name__,
            response_schema=response.model_json_schema(),
            feedback=list(feedback),
        )
        raw = port.complete(request)
        try:
            result = response.model_validate_json(raw)
        except ValidationError as exc:
            feedback.append(str(exc))
            logger.debug("{} attempt {} rejected: {}", template_id, attempt + 1, exc.error_count())
            if log is not None:
                log.record(
                    round_index, "port", template=template_id, attempt=attempt, outcome="invalid"
                )
            continue
        if log is not None:
            log.record(
                round_index,
                "port",
                template=template_id,
                attempt=attempt,
                outcome="ok",
                response=result.model_dump(mode="json", exclude_none=True),
            )
        return result
    raise AgentProtocolError(
        f"{template_id}: response failed {response.__name__} after "
        f"{config.retries + 1} attempt(s): {feedback[-1]}"
    )


def _transcript_lines(words: Sequence[TranscriptWord]) -> str:
    if not words:
        return "(silence)"
    return "\n".join(f"{w.start:.2f}-{w.end:.2f} {w.speaker}: {w.word}" for w in words)


def _num(value: float) -> str:
    return f"{round(value, 2) + 0.0:.2f}"


def analyze_dialogue(
    words: Sequence[TranscriptWord],
    port: LlmPort,
    config: AgentConfig,
    hints: dict[str, str] | None = None,
    log: DecisionLog | None = None,
) -> SceneContext:
    if not words:
        raise AgentError("Transcript is empty; nothing to analyze")
    variables = {
        "transcript": _transcript_lines(words),
        "hints": json.dumps(hints or {}, sort_keys=True),
    }
    payload = {"words": [w.model_dump(mode="json") for w in words], "hints": dict(hints or {})}
    return _ask(port, "dialogue_analyzer", variables, payload, SceneContext, config, log)


def setup_from_plan(plan: SpatialPlan) -> ProxemicSetup:
    """Anchor Character I at the origin facing +X and place Character II from the plan."""
    low, high = distance_range(plan.distance_category)
    distance = plan.distance_m if plan.distance_m is not None else (low + high) / 2
    relative = RelativeSpatial(
        theta=clock_to_angle(plan.theta), phi=clock_to_angle(plan.phi), distance=distance
    )
    if not validate_configuration(plan.configuration, relative):
        raise PlanInconsistent(
            f"Bearings {plan.theta}/{plan.phi} do not form a {plan.configuration} arrangement"
        )
    if not in_distance(plan.distance_category, distance):
        raise PlanInconsistent(
            f"Distance {distance:.2f} m is outside the {plan.distance_category} range "
            f"[{low}, {high}]"
        )
    origin = WorldPose()
    return ProxemicSetup(
        configuration=plan.configuration,
        distance_category=plan.distance_category,
        relative=relative,
        poses={"I": origin, "II": compute_global_pose(origin, relative)},
        postures=dict(plan.postures),
    )


def plan_scene(
    scene: SceneContext,
    port: LlmPort,
    config: AgentConfig,
    log: DecisionLog | None = None,
) -> ProxemicSetup:
    variables = {
        "scenario": scene.scenario,
        "relationship": scene.relationship,
        "emotion": scene.emotion,
        "setting_i": scene.character_settings["I"],
        "setting_ii": scene.character_settings["II"],
    }
    payload = {"scene": scene.model_dump(mode="json")}
    plan = _ask(port, "spatial_planner", variables, payload, SpatialPlan, config, log)
    setup = setup_from_plan(plan)
    logger.info(
        "planned {} at {:.2f} m ({})",
        setup.configuration,
        setup.relative.distance,
        setup.distance_category,
    )
    return setup


def describe_motion(
    poses: dict[Character, WorldPose],
    relative: RelativeSpatial,
    heads: dict[Character, tuple[float, float]],
    setup: ProxemicSetup,
) -> str:
    """Templated description of the last generated frame; numbers have two decimals."""
    postures = {"stand": "standing", "sit": "sitting"}
    lines = []
    for character in CHARACTERS:
        pose = poses[character]
        lines.append(
            f"Character {character} is {postures[setup.postures[character]]} at "
            f"({_num(pose.position[0])}, {_num(pose.position[1])}) "
            f"facing {_num(pose.heading)} rad."
        )
    lines.append(f"They are {_num(relative.distance)} m apart.")
    lines.append(
        f"Character I sees Character II at {angle_to_clock(relative.theta)} "
        f"({direction_of(relative.theta)}); Character II sees Character I at "
        f"{angle_to_clock(relative.phi)} ({direction_of(relative.phi)})."
    )
    for character in CHARACTERS:
        yaw, pitch = heads[character]
        lines.append(
            f"Character {character}'s head is turned {_num(yaw)} rad to the side "
            f"and pitched {_num(pitch)} rad."
        )
    return "\n".join(lines)


def collect_context(
    scene: SceneContext,
    last_frames: dict[Character, FloatArray],
    words: Sequence[TranscriptWord],
    window: RoundWindow,
    setup: ProxemicSetup,
    skeleton: SkeletonConfig,
) -> InteractionContext:
    """Gather everything the controller sees before planning ``window``."""
    poses = {c: root_pose(last_frames[c], skeleton) for c in CHARACTERS}
    relative = relative_from_world(poses["I"], poses["II"])
    heads = {c: head_orientation(last_frames[c], skeleton) for c in CHARACTERS}
    upcoming = [w for w in words if window.start <= w.start < window.end]
    return InteractionContext(
        scene=scene,
        prev_motion_description=describe_motion(poses, relative, heads, setup),
        upcoming_transcripts=upcoming,
        round_index=window.index,
        window=window,
        poses=poses,
        relative=relative,
        setup=setup,
    )


def _check_trigger(word: str, ctx: InteractionContext, what: str) -> None:
    spoken = {w.word.lower() for w in ctx.upcoming_transcripts}
    if word.strip().lower() not in spoken:
        raise TriggerWordNotFound(
            f"{what} trigger word '{word}' is not in the round {ctx.round_index} transcript"
        )


def predict_signals(
    ctx: InteractionContext,
    port: LlmPort,
    config: AgentConfig,
    log: DecisionLog | None = None,
) -> SignalProposals:
    """Ask the spatial, gesture-sync and gaze predictors about the next round."""
    variables = {
        "scene": f"{ctx.scene.scenario} ({ctx.scene.relationship}, {ctx.scene.emotion})",
        "motion": ctx.prev_motion_description,
        "transcript": _transcript_lines(ctx.upcoming_transcripts),
        "round_seconds": f"{ctx.window.end - ctx.window.start:.1f}",
    }
    payload = {"context": ctx.model_dump(mode="json")}
    spatial = _ask(
        port, "spatial_relation_predictor", variables, payload, SpatialProposal, config, log,
        ctx.round_index,
    )
    sync = _ask(
        port, "gesture_sync_predictor", variables, payload, SyncProposal, config, log,
        ctx.round_index,
    )
    gaze = _ask(
        port, "gaze_predictor", variables, payload, GazeProposal, config, log, ctx.round_index
    )
    if sync.sync is not None:
        _check_trigger(sync.sync.trigger_word, ctx, "sync")
    for character, signal in gaze.gazes.items():
        _check_trigger(signal.trigger_word, ctx, f"{character} gaze")
    return SignalProposals(spatial=spatial, sync=sync, gaze=gaze)


def integrate_decisions(
    proposals: SignalProposals,
    ctx: InteractionContext,
    max_imitation_move_cm: float = 20.0,
) -> InteractionSignalSet:
    """Merge the three proposals into one signal set.

    Gaze and nodding coexist. A character imitating a gesture keeps at most
    ``max_imitation_move_cm`` of movement; a larger move is dropped and its
    turn, if any, kept. A body turn alongside a gaze keeps both and notes it.
    """
    sync = proposals.sync.sync
    signals: dict[Character, CharacterSignals] = {}
    notes: list[str] = []
    for character in CHARACTERS:
        spatial = proposals.spatial.adjustments.get(character)
        gaze = proposals.gaze.gazes.get(character)
        if spatial is not None and not spatial.moves and not spatial.turns:
            spatial = None
        imitating = sync is not None and sync.kind == "matching" and sync.responder == character
        if imitating and spatial is not None and spatial.movement[1] > max_imitation_move_cm:
            notes.append(
                f"round {ctx.round_index}: dropped {spatial.movement[1]:.0f} cm move of "
                f"Character {character} while imitating"
            )
            spatial = spatial.model_copy(update={"movement": (0.0, 0.0)}) if spatial.turns else None
        if spatial is not None and spatial.turns and gaze is not None:
            notes.append(
                f"round {ctx.round_index}: Character {character} turns and gazes; "
                "gaze is held relative to the turned body"
            )
        entry = CharacterSignals(
            spatial=spatial,
            sync=sync if sync is not None and sync.responder == character else None,
            gaze=gaze,
        )
        if not entry.empty:
            signals[character] = entry
    return InteractionSignalSet(signals=signals, policy_notes=notes)
