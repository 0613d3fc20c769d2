"""YAML configuration loader and JSONL transcript reader."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from dyadic.models import (
    CHARACTERS,
    EngineConfig,
    SkeletonConfig,
    StubRules,
    TranscriptWord,
)

_cache: dict[str, ConfigBundle] = {}

REQUIRED_FILES = ("engine.yaml", "skeleton.yaml", "stub_rules.yaml")

TRANSCRIPT_VERSION = 1


class LoaderError(Exception):
    """Base class for configuration and file loading errors."""


class ConfigError(LoaderError):
    """Raised when configuration files are missing or invalid."""


class ParseError(LoaderError):
    """Raised for malformed file content, with the offending line when known."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InvalidFileError(LoaderError):
    """Raised when well-formed file content fails schema validation."""


class UnsupportedVersion(LoaderError):
    """Raised for a file schema version this build cannot read."""


class ConfigBundle(BaseModel):
    """Container for a fully loaded and validated configuration directory."""

    engine: EngineConfig
    skeleton: SkeletonConfig
    stub_rules: StubRules


def _load_yaml(path: Path, model: type[BaseModel]) -> Any:
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed {path.name}: {e}") from e
    try:
        return model.model_validate(data or {})
    except ValidationError as e:
        raise ConfigError(f"Invalid {path.name}: {e}") from e


def load_config(config_path: Path = Path("config")) -> ConfigBundle:
    """Load, parse, validate and cache the YAML configuration directory.

    Raises:
        ConfigError: If files are missing or validation fails.
    """
    resolved = str(config_path.resolve())

    if resolved in _cache:
        return _cache[resolved]

    missing = [f for f in REQUIRED_FILES if not (config_path / f).is_file()]
    if missing:
        raise ConfigError(f"Missing config files in {config_path}: {', '.join(missing)}")

    bundle = ConfigBundle(
        engine=_load_yaml(config_path / "engine.yaml", EngineConfig),
        skeleton=_load_yaml(config_path / "skeleton.yaml", SkeletonConfig),
        stub_rules=_load_yaml(config_path / "stub_rules.yaml", StubRules),
    )

    _cache[resolved] = bundle
    return bundle


def clear_cache() -> None:
    """Clear the in-memory configuration cache."""
    _cache.clear()


def validate_config(bundle: ConfigBundle) -> list[str]:
    """Cross-check the configuration files.

    Returns a list of error messages. An empty list means the files agree.
    """
    errors: list[str] = []
    engine, skeleton = bundle.engine, bundle.skeleton

    for state, components in engine.prior.states.items():
        for i, component in enumerate(components):
            if isinstance(component.mean, list) and len(component.mean) != skeleton.width:
                errors.append(
                    f"Prior '{state}' component {i}: mean has {len(component.mean)} "
                    f"values, skeleton width is {skeleton.width}"
                )
    for state in ("stand", "walk", "sit"):
        if state not in engine.prior.states:
            errors.append(f"Prior: no components for motion state '{state}'")

    if skeleton.head_joint is None:
        errors.append("Skeleton: head_joint is required for gaze and nod constraints")
    if not skeleton.upper_body:
        errors.append("Skeleton: upper_body is required for imitation and DMSS")
    if not skeleton.has_hierarchy:
        errors.append("Skeleton: joints need offsets and parents for BVH export")

    if engine.guidance.similarity_cutoff >= engine.schedule.steps:
        errors.append(
            f"Guidance: similarity_cutoff {engine.guidance.similarity_cutoff} must be below "
            f"schedule steps {engine.schedule.steps}"
        )
    if engine.guidance.ddim_steps > engine.schedule.steps:
        errors.append(
            f"Guidance: ddim_steps {engine.guidance.ddim_steps} exceeds schedule steps "
            f"{engine.schedule.steps}"
        )
    if engine.window.overlap == 0:
        errors.append("Window: hop equals the window, leaving no overlap to inpaint")
    if engine.dmss.window + 1 > engine.window.frames:
        errors.append(
            f"DMSS: window {engine.dmss.window} needs more frames than one segment "
            f"({engine.window.frames})"
        )

    rules = bundle.stub_rules
    if not rules.plan_rules:
        errors.append("Stub rules: no plan_rules; every scene gets the default plan")
    for i, rule in enumerate(rules.plan_rules):
        if not rule.keywords:
            errors.append(f"Stub rules: plan rule {i} ({rule.configuration}) has no keywords")

    return errors


class TranscriptFile(BaseModel):
    version: int = TRANSCRIPT_VERSION
    hints: dict[str, str] = Field(default_factory=dict)
    words: list[TranscriptWord] = Field(min_length=1)

    @model_validator(mode="after")
    def _per_speaker_order(self) -> TranscriptFile:
        for speaker in CHARACTERS:
            spoken = [w for w in self.words if w.speaker == speaker]
            for before, after in zip(spoken, spoken[1:], strict=False):
                if after.start < before.end:
                    raise ValueError(
                        f"Character {speaker}: '{after.word}' at {after.start} overlaps "
                        f"'{before.word}' ending at {before.end}"
                    )
        return self

    @property
    def duration(self) -> float:
        return max(w.end for w in self.words)


def load_transcript(path: Path) -> TranscriptFile:
    """Read a JSONL transcript: an optional header record, then one word per line.

    Raises:
        ParseError: For a line that is not a JSON object.
        InvalidFileError: For records or a transcript that fail validation.
        UnsupportedVersion: For a header with an unknown version.
    """
    if not path.is_file():
        raise LoaderError(f"Transcript not found: {path}")

    header: dict[str, Any] = {}
    words: list[TranscriptWord] = []
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path.name}: {e.msg}", line=line_no) from e
            if not isinstance(record, dict):
                raise ParseError(f"{path.name}: expected a JSON object", line=line_no)
            if record.get("type") == "header":
                if words or header:
                    raise ParseError(f"{path.name}: header must be the first record", line=line_no)
                header = record
                continue
            try:
                words.append(TranscriptWord.model_validate(record))
            except ValidationError as e:
                raise InvalidFileError(f"{path.name} line {line_no}: {e}") from e

    version = header.get("version", TRANSCRIPT_VERSION)
    if version != TRANSCRIPT_VERSION:
        raise UnsupportedVersion(f"{path.name}: transcript version {version} is not supported")
    try:
        return TranscriptFile(version=version, hints=header.get("hints", {}), words=words)
    except ValidationError as e:
        raise InvalidFileError(f"Invalid transcript {path.name}: {e}") from e
