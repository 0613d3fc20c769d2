"""Deterministic offline stand-in for the language model, driven by keyword tables."""

from __future__ import annotations

import json
import math
from collections import Counter
from collections.abc import Sequence
from typing import Any

from dyadic.agent import PromptRequest
from dyadic.models import (
    CHARACTERS,
    Character,
    InteractionContext,
    SceneContext,
    StubRules,
    TranscriptWord,
    partner_of,
)
from dyadic.proxemics import (
    CANONICAL_BEARINGS,
    angle_minutes,
    distance_midpoint,
    distance_range,
    gaze_duration,
)


def _speaker_and_listener(words: Sequence[TranscriptWord]) -> tuple[Character, Character]:
    """The speaker has more words in the window; ties go to Character I."""
    counts = Counter(w.speaker for w in words)
    speaker: Character = "II" if counts["II"] > counts["I"] else "I"
    return speaker, partner_of(speaker)


def _in_front(bearing: float) -> bool:
    return abs(bearing) < math.pi / 2


def _turns(words: Sequence[TranscriptWord]) -> Counter[Character]:
    turns: Counter[Character] = Counter()
    previous: Character | None = None
    for word in sorted(words, key=lambda w: w.start):
        if word.speaker != previous:
            turns[word.speaker] += 1
            previous = word.speaker
    return turns


class RuleStub:
    """:class:`~dyadic.agent.LlmPort` that answers every template from rule tables.

    Every answer validates against its template's schema.
    """

    def __init__(self, rules: StubRules) -> None:
        self.rules = rules
        self.calls = 0

    def complete(self, request: PromptRequest) -> str:
        self.calls += 1
        handler = {
            "dialogue_analyzer": self._analyze,
            "spatial_planner": self._plan,
            "spatial_relation_predictor": self._spatial,
            "gesture_sync_predictor": self._sync,
            "gaze_predictor": self._gaze,
        }.get(request.template_id)
        answer: dict[str, Any] = {} if handler is None else handler(request.payload)
        return json.dumps(answer, sort_keys=True)

    def _analyze(self, payload: dict[str, Any]) -> dict[str, Any]:
        words = [TranscriptWord.model_validate(w) for w in payload.get("words", [])]
        hints: dict[str, str] = payload.get("hints") or {}
        turns = _turns(words)
        counts = Counter(w.speaker for w in words)
        settings = {
            c: f"Character {c} takes {turns[c]} turn(s) and says {counts[c]} word(s)."
            for c in CHARACTERS
        }
        return {
            "scenario": hints.get("scenario")
            or f"A conversation of {sum(turns.values())} turns between two people.",
            "relationship": hints.get("relationship") or self.rules.default_relationship,
            "emotion": hints.get("emotion") or self.rules.default_emotion,
            "character_settings": settings,
        }

    def _plan(self, payload: dict[str, Any]) -> dict[str, Any]:
        scene = SceneContext.model_validate(payload["scene"])
        rule = self.rules.match_plan(f"{scene.scenario} {scene.relationship}")
        theta, phi = CANONICAL_BEARINGS[rule.configuration]
        return {
            "configuration": rule.configuration,
            "distance_category": rule.distance_category,
            "theta": theta.model_dump(),
            "phi": phi.model_dump(),
            "postures": {c: rule.posture for c in CHARACTERS},
        }

    def _spatial(self, payload: dict[str, Any]) -> dict[str, Any]:
        ctx = InteractionContext.model_validate(payload["context"])
        if not ctx.upcoming_transcripts:
            return {"adjustments": {}}
        low, high = distance_range(ctx.setup.distance_category)
        distance = ctx.relative.distance
        if low <= distance <= high:
            return {"adjustments": {}}
        _, listener = _speaker_and_listener(ctx.upcoming_transcripts)
        bearing = ctx.relative.theta if listener == "I" else ctx.relative.phi
        toward = angle_minutes(bearing) * 0.5
        gap_cm = abs(distance - distance_midpoint(ctx.setup.distance_category)) * 100.0
        step_cm = round(min(gap_cm, self.rules.max_step_cm), 1)
        angle = toward if distance > high else (toward + 180.0) % 360.0
        return {"adjustments": {listener: {"movement": [round(angle, 1) % 360.0, step_cm]}}}

    def _sync(self, payload: dict[str, Any]) -> dict[str, Any]:
        ctx = InteractionContext.model_validate(payload["context"])
        if not ctx.upcoming_transcripts:
            return {"sync": None}
        speaker, listener = _speaker_and_listener(ctx.upcoming_transcripts)
        spoken = [w for w in ctx.upcoming_transcripts if w.speaker == speaker]
        relationship = ctx.scene.relationship.lower()
        rapport = any(r.lower() in relationship for r in self.rules.matching_relationships)
        mutual = _in_front(ctx.relative.theta) and _in_front(ctx.relative.phi)
        if rapport and mutual:
            long_word = next(
                (w for w in spoken if len(w.word) >= self.rules.imitation_min_length), None
            )
            if long_word is not None:
                return self._sync_answer("matching", speaker, listener, long_word.word)
        cue = next((w for w in spoken if self._is_cue(w.word)), None)
        if cue is not None:
            return self._sync_answer("meshing", speaker, listener, cue.word)
        return {"sync": None}

    def _gaze(self, payload: dict[str, Any]) -> dict[str, Any]:
        ctx = InteractionContext.model_validate(payload["context"])
        if not ctx.upcoming_transcripts:
            return {"gazes": {}}
        speaker, listener = _speaker_and_listener(ctx.upcoming_transcripts)
        bearing = ctx.relative.theta if listener == "I" else ctx.relative.phi
        if not _in_front(bearing):
            return {"gazes": {}}
        cue = next(
            (
                w
                for w in ctx.upcoming_transcripts
                if w.speaker == speaker and self._emphasized(w.word)
            ),
            None,
        )
        if cue is None:
            return {"gazes": {}}
        duration = gaze_duration(self.rules.gaze_category)
        return {
            "gazes": {
                listener: {"target": "partner", "duration_s": duration, "trigger_word": cue.word}
            }
        }

    def _emphasized(self, word: str) -> bool:
        lowered = word.lower()
        return (
            lowered in {w.lower() for w in self.rules.emphasis_words}
            or len(word) >= self.rules.emphasis_min_length
        )

    def _is_cue(self, word: str) -> bool:
        affirm = {w.lower() for w in self.rules.affirm_words}
        return word.lower() in affirm or self._emphasized(word)

    @staticmethod
    def _sync_answer(
        kind: str, initiator: Character, responder: Character, word: str
    ) -> dict[str, Any]:
        return {
            "sync": {
                "kind": kind,
                "initiator": initiator,
                "responder": responder,
                "trigger_word": word,
            }
        }
