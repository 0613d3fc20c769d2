"""Motion trace files: both characters' frames per round plus the decision log."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from dyadic.audit import DecisionEntry
from dyadic.loader import InvalidFileError, ParseError, UnsupportedVersion
from dyadic.models import CHARACTERS, Character, ProxemicSetup, SceneContext, SkeletonConfig
from dyadic.motion import FloatArray, frozen_array

TRACE_VERSION = 1


class TraceRound(BaseModel):
    """Frames a round contributes to the trace, in world coordinates."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int = Field(ge=0)
    frames: dict[Character, np.ndarray]

    @field_validator("frames", mode="before")
    @classmethod
    def _freeze(cls, value: Any) -> dict[str, FloatArray]:
        return {c: frozen_array(v) for c, v in dict(value).items()}

    @model_validator(mode="after")
    def _both_characters(self) -> TraceRound:
        if set(self.frames) != set(CHARACTERS):
            raise ValueError(f"round {self.index} must hold frames for characters I and II")
        shapes = {a.shape for a in self.frames.values()}
        if len(shapes) != 1 or next(iter(shapes))[0] == 0:
            raise ValueError(f"round {self.index}: mismatched or empty frame shapes {shapes}")
        return self


class MotionTrace(BaseModel):
    version: int = TRACE_VERSION
    skeleton: SkeletonConfig
    seed: int | None = None
    window: int = Field(gt=0)
    hop: int = Field(gt=0)
    scene: SceneContext | None = None
    setup: ProxemicSetup | None = None
    rounds: list[TraceRound] = Field(default_factory=list)
    decisions: list[DecisionEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _consistent(self) -> MotionTrace:
        for expected, round_ in enumerate(self.rounds):
            if round_.index != expected:
                raise ValueError(
                    f"rounds must be contiguous; expected {expected}, got {round_.index}"
                )
            for character, frames in round_.frames.items():
                if frames.ndim != 2 or frames.shape[1] != self.skeleton.width:
                    raise ValueError(
                        f"round {expected} Character {character}: frame width "
                        f"{frames.shape[-1]} does not match skeleton width {self.skeleton.width}"
                    )
        return self

    @property
    def fps(self) -> int:
        return self.skeleton.fps

    @property
    def frame_count(self) -> int:
        return sum(r.frames["I"].shape[0] for r in self.rounds)

    def frames(self, character: Character) -> FloatArray:
        """All frames of one character, rounds concatenated."""
        if not self.rounds:
            return np.zeros((0, self.skeleton.width))
        return np.concatenate([r.frames[character] for r in self.rounds])

    def to_payload(self) -> dict[str, Any]:
        data = self.model_dump(mode="json", exclude={"rounds"})
        data["rounds"] = [
            {"index": r.index, "frames": {c: r.frames[c].tolist() for c in CHARACTERS}}
            for r in self.rounds
        ]
        return data


def save_trace(trace: MotionTrace, path: Path) -> Path:
    """Write ``trace`` as JSON, atomically. Floats keep their shortest exact repr."""
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(trace.to_payload(), indent=1)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
            f.write("\n")
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def load_trace(path: Path) -> MotionTrace:
    """Read a trace written by :func:`save_trace`.

    Raises:
        ParseError: For truncated or malformed JSON.
        UnsupportedVersion: For an unknown trace version.
        InvalidFileError: For content that fails validation.
    """
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path.name}: {e.msg}", line=e.lineno) from e
    if not isinstance(data, dict):
        raise ParseError(f"{path.name}: expected a JSON object")
    version = data.get("version")
    if version != TRACE_VERSION:
        raise UnsupportedVersion(f"{path.name}: trace version {version} is not supported")
    try:
        return MotionTrace.model_validate(data)
    except ValidationError as e:
        raise InvalidFileError(f"Invalid trace {path.name}: {e}") from e
