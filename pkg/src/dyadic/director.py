"""The round loop: scene design, per-round control, constraint compilation and sampling."""

from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from loguru import logger

from dyadic.agent import (
    AgentError,
    LlmPort,
    analyze_dialogue,
    collect_context,
    integrate_decisions,
    plan_scene,
    predict_signals,
)
from dyadic.audit import DecisionLog
from dyadic.constraints import CharacterState, ConstraintError, ConstraintSet, compile
from dyadic.diffusion import Conditions, DiffusionError
from dyadic.loader import ConfigBundle
from dyadic.models import (
    CHARACTERS,
    Character,
    MotionState,
    ProxemicSetup,
    RoundWindow,
    SceneContext,
    TranscriptWord,
    WindowConfig,
)
from dyadic.motion import FloatArray, MotionError, MotionSegment, from_world, root_pose, to_world
from dyadic.proxemics import ProxemicsError
from dyadic.sampler import MotionSampler
from dyadic.trace import MotionTrace, TraceRound

_ROUND_ERRORS = (AgentError, ConstraintError, DiffusionError, MotionError, ProxemicsError)


class DirectorError(Exception):
    """Raised when a dialogue cannot be directed at all."""


class RoundError(DirectorError):
    """Wraps a failure inside one round, keeping the round index."""

    def __init__(self, round_index: int, error: Exception) -> None:
        self.round_index = round_index
        self.error = error
        super().__init__(f"round {round_index}: {type(error).__name__}: {error}")


def round_count(duration: float, window: WindowConfig, fps: int) -> int:
    """Rounds needed so the generated motion covers ``duration`` seconds."""
    span = window.frames / fps
    hop = window.hop / fps
    return max(0, math.ceil((duration - span) / hop - 1e-9)) + 1


def round_window(index: int, window: WindowConfig, fps: int) -> RoundWindow:
    """Timing of round ``index``; rounds after the first start after the overlap."""
    segment_start = index * window.hop / fps
    new_from = 0 if index == 0 else window.overlap
    return RoundWindow(
        index=index,
        segment_start=segment_start,
        start=segment_start + new_from / fps,
        end=segment_start + window.frames / fps,
        frames=window.frames,
        fps=fps,
    )


def _seed(seed: int, round_index: int, character: Character) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, round_index, CHARACTERS.index(character)])


def _states(
    previous: dict[Character, FloatArray], setup: ProxemicSetup, hop: int, bundle: ConfigBundle
) -> dict[Character, CharacterState]:
    skeleton = bundle.skeleton
    states: dict[Character, CharacterState] = {}
    for character in CHARACTERS:
        world = previous[character]
        base = root_pose(world[hop], skeleton)
        tail = from_world(
            MotionSegment(frames=world[hop:], character=character), base, skeleton
        ).frames
        states[character] = CharacterState(
            current=root_pose(world[-1], skeleton),
            base=base,
            motion_state=setup.postures[character],
            tail=tail,
            source=world,
        )
    return states


def _summary(constraints: ConstraintSet) -> dict[str, object]:
    return {
        "groups": [c.group for c in constraints.trajectory],
        "frames": {
            c.group: int(np.count_nonzero(c.mask.any(axis=1))) for c in constraints.trajectory
        },
        "similarity": constraints.similarity is not None,
        "next_state": constraints.next_state,
    }


def run_dialogue(
    words: Sequence[TranscriptWord],
    bundle: ConfigBundle,
    port: LlmPort,
    sampler: MotionSampler,
    seed: int = 0,
    hints: dict[str, str] | None = None,
    max_rounds: int | None = None,
    controller: bool | None = None,
) -> MotionTrace:
    """Direct a two-person dialogue and return both characters' motion.

    Round 0 analyzes the scene, plans the proxemic setup and samples both
    characters freely. Every later round describes the last generated frame,
    asks the controller for signals, compiles them into constraints and
    samples both characters, each continuing from its own previous tail.

    Raises:
        DirectorError: For an empty transcript or an invalid round cap.
        RoundError: For any agent, compiler or sampler failure.
    """
    if not words:
        raise DirectorError("Transcript is empty; there is nothing to direct")
    if max_rounds is not None and max_rounds < 1:
        raise DirectorError(f"--rounds must be at least 1, got {max_rounds}")

    engine, skeleton = bundle.engine, bundle.skeleton
    fps = skeleton.fps
    window_config = engine.window
    use_controller = engine.controller.enabled if controller is None else controller
    duration = max(w.end for w in words)
    rounds = round_count(duration, window_config, fps)
    if max_rounds is not None:
        rounds = min(rounds, max_rounds)
    log = DecisionLog()
    logger.info("directing {:.2f} s of dialogue in {} round(s)", duration, rounds)

    try:
        scene = analyze_dialogue(words, port, engine.agent, hints=hints, log=log)
        setup = plan_scene(scene, port, engine.agent, log=log)
    except _ROUND_ERRORS as exc:
        raise RoundError(0, exc) from exc
    log.record(
        0,
        "scene",
        scene=scene.model_dump(mode="json"),
        setup=setup.model_dump(mode="json"),
    )

    trace_rounds: list[TraceRound] = []
    previous: dict[Character, FloatArray] | None = None
    for index in range(rounds):
        window = round_window(index, window_config, fps)
        try:
            current = _run_round(
                index, window, previous, words, scene, setup, bundle, port, sampler, seed,
                use_controller, log,
            )
        except _ROUND_ERRORS as exc:
            raise RoundError(index, exc) from exc
        keep = window_config.frames if index == rounds - 1 else window_config.hop
        trace_rounds.append(
            TraceRound(index=index, frames={c: current[c][:keep] for c in CHARACTERS})
        )
        previous = current

    return MotionTrace(
        skeleton=skeleton,
        seed=seed,
        window=window_config.frames,
        hop=window_config.hop,
        scene=scene,
        setup=setup,
        rounds=trace_rounds,
        decisions=log.entries,
    )


def _run_round(
    index: int,
    window: RoundWindow,
    previous: dict[Character, FloatArray] | None,
    words: Sequence[TranscriptWord],
    scene: SceneContext,
    setup: ProxemicSetup,
    bundle: ConfigBundle,
    port: LlmPort,
    sampler: MotionSampler,
    seed: int,
    use_controller: bool,
    log: DecisionLog,
) -> dict[Character, FloatArray]:
    engine, skeleton = bundle.engine, bundle.skeleton
    hop = engine.window.hop
    empty = {c: ConstraintSet() for c in CHARACTERS}

    if previous is None:
        bases = dict(setup.poses)
        tails: dict[Character, FloatArray | None] = {c: None for c in CHARACTERS}
        constraints = empty
    else:
        states = _states(previous, setup, hop, bundle)
        bases = {c: states[c].base for c in CHARACTERS}
        tails = {c: states[c].tail for c in CHARACTERS}
        if use_controller:
            ctx = collect_context(
                scene,
                {c: previous[c][-1] for c in CHARACTERS},
                words,
                window,
                setup,
                skeleton,
            )
            log.record(index, "context", description=ctx.prev_motion_description)
            proposals = predict_signals(ctx, port, engine.agent, log=log)
            signals = integrate_decisions(proposals, ctx)
            log.record(
                index,
                "integrate",
                signals=signals.model_dump(mode="json", exclude_none=True)["signals"],
                notes=list(signals.policy_notes),
            )
            constraints = compile(signals, states, words, window, skeleton, engine)
        else:
            constraints = empty

    def sample(character: Character) -> tuple[MotionState, FloatArray]:
        state: MotionState = constraints[character].next_state or setup.postures[character]
        local = sampler.sample(
            Conditions(state=state),
            constraints[character],
            tails[character],
            _seed(seed, index, character),
            (window.frames, skeleton.width),
        )
        segment = MotionSegment(frames=local, character=character, round_index=index)
        return state, to_world(segment, bases[character], skeleton).frames

    with ThreadPoolExecutor(max_workers=len(CHARACTERS)) as pool:
        futures = {c: pool.submit(sample, c) for c in CHARACTERS}
        results = {c: futures[c].result() for c in CHARACTERS}

    for character in CHARACTERS:
        log.record(index, "compile", character=character, **_summary(constraints[character]))
    for character in CHARACTERS:
        state, frames = results[character]
        log.record(index, "sample", character=character, state=state, frames=int(frames.shape[0]))
    logger.info(
        "round {} [{:.2f}, {:.2f}) s: {} constraint(s)",
        index,
        window.start,
        window.end,
        sum(len(constraints[c].trajectory) for c in CHARACTERS),
    )
    return {c: results[c][1] for c in CHARACTERS}
