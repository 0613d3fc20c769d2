"""Tests for the configuration loader, its validator and the transcript reader."""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest
import yaml

from dyadic.loader import (
    ConfigError,
    InvalidFileError,
    LoaderError,
    ParseError,
    UnsupportedVersion,
    clear_cache,
    load_config,
    load_transcript,
    validate_config,
)
from dyadic.models import EngineConfig, GaussianPrior, PriorComponent

CONFIG_PATH = Path(__file__).parent.parent / "config"
FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _clear_loader_cache():
    """Clear the config cache before and after every test."""
    clear_cache()
    yield
    clear_cache()


def _copy_config(tmp_path: Path) -> Path:
    target = tmp_path / "config"
    shutil.copytree(CONFIG_PATH, target)
    return target


def _with_prior(bundle, prior: GaussianPrior):
    return bundle.model_copy(update={"engine": bundle.engine.model_copy(update={"prior": prior})})


def _write_transcript(tmp_path: Path, *records: object) -> Path:
    path = tmp_path / "t.jsonl"
    lines = [r if isinstance(r, str) else json.dumps(r) for r in records]
    path.write_text("\n".join(lines) + "\n")
    return path


WORD = {"word": "hello", "start": 0.0, "end": 0.3, "speaker": "I"}


# ── Success tests using the shipped config ─────────────────────────────────


def test_load_config_success():
    """The shipped configuration loads with the standard window and skeleton."""
    bundle = load_config(CONFIG_PATH)

    assert bundle.skeleton.width == 66
    assert bundle.skeleton.fps == 30
    assert (bundle.engine.window.frames, bundle.engine.window.hop) == (150, 75)
    assert bundle.stub_rules.plan_rules


def test_stub_word_lists_are_strings():
    """Every stub word loads as text, including YAML boolean spellings like yes."""
    rules = load_config(CONFIG_PATH).stub_rules

    assert "yes" in rules.affirm_words
    for words in (rules.affirm_words, rules.emphasis_words, rules.matching_relationships):
        assert all(isinstance(w, str) for w in words)
    raw = yaml.safe_load((CONFIG_PATH / "stub_rules.yaml").read_text())
    assert all(isinstance(w, str) for w in raw["affirm_words"])


def test_load_config_caching():
    """Loading the same path twice must return the exact same instance."""
    first = load_config(CONFIG_PATH)
    second = load_config(CONFIG_PATH)

    assert first is second


def test_shipped_engine_yaml_matches_defaults():
    """engine.yaml documents the built-in defaults."""
    assert load_config(CONFIG_PATH).engine == EngineConfig()


def test_default_sampling_constants():
    """Defaults carry the reference sampling constants."""
    engine = EngineConfig()
    guidance = engine.guidance

    assert guidance.lambda_ == 2.0
    assert guidance.similarity_cutoff == 200
    assert guidance.tau == 0.8
    assert guidance.updates_per_step == 2
    assert guidance.ddim_steps == 200
    assert guidance.alpha_map == {
        "root_position": 0.1,
        "root_rotation": 20.0,
        "head_rotation": 100.0,
    }
    assert engine.schedule.steps == 1000
    assert engine.window.frames == 150
    assert engine.condition_dropout == 0.2
    assert engine.dmss.max_lag == 5
    assert load_config(CONFIG_PATH).skeleton.fps == 30


# ── Error tests using tmp_path ─────────────────────────────────────────────


def test_load_missing_directory(tmp_path: Path):
    """An empty directory must raise ConfigError about missing files."""
    with pytest.raises(ConfigError, match="Missing config files"):
        load_config(tmp_path)


def test_load_malformed_yaml(tmp_path: Path):
    """Unparseable YAML names the file."""
    config = _copy_config(tmp_path)
    (config / "engine.yaml").write_text("schedule: [steps\n")

    with pytest.raises(ConfigError, match="Malformed engine.yaml"):
        load_config(config)


def test_load_invalid_values(tmp_path: Path):
    """Values failing validation name the file."""
    config = _copy_config(tmp_path)
    (config / "engine.yaml").write_text(yaml.dump({"window": {"frames": 50, "hop": 75}}))

    with pytest.raises(ConfigError, match="Invalid engine.yaml"):
        load_config(config)


# ── Validation tests ───────────────────────────────────────────────────────


def test_validate_config_ok():
    """The shipped configuration should have no validation errors."""
    assert validate_config(load_config(CONFIG_PATH)) == []


def test_validate_similarity_cutoff(tmp_path: Path):
    """A cutoff at or past the schedule length is reported."""
    config = _copy_config(tmp_path)
    engine = yaml.safe_load((config / "engine.yaml").read_text())
    engine["guidance"]["similarity_cutoff"] = 1000
    (config / "engine.yaml").write_text(yaml.dump(engine))

    errors = validate_config(load_config(config))

    assert any("similarity_cutoff 1000" in e for e in errors)


def test_validate_prior_width():
    """A per-channel prior mean must match the skeleton width."""
    bundle = load_config(CONFIG_PATH)
    prior = GaussianPrior(
        states={
            state: [PriorComponent(mean=[0.0, 0.0, 0.0], stddev=0.3)]
            for state in ("stand", "walk", "sit")
        }
    )
    broken = _with_prior(bundle, prior)

    errors = validate_config(broken)

    assert len(errors) == 3
    assert all("mean has 3 values, skeleton width is 66" in e for e in errors)


def test_validate_missing_prior_state():
    """Every motion state needs a prior."""
    bundle = load_config(CONFIG_PATH)
    prior = GaussianPrior(states={"stand": [PriorComponent(mean=0.0, stddev=0.3)]})
    broken = _with_prior(bundle, prior)

    errors = validate_config(broken)

    assert "Prior: no components for motion state 'walk'" in errors
    assert "Prior: no components for motion state 'sit'" in errors


# ── Transcripts ────────────────────────────────────────────────────────────


def test_golden_transcript():
    """The golden transcript parses to its recorded form."""
    transcript = load_transcript(FIXTURES / "golden_transcript.jsonl")
    expected = json.loads((FIXTURES / "golden_transcript.expected.json").read_text())

    assert transcript.model_dump(mode="json") == expected
    assert transcript.duration == pytest.approx(3.8)


def test_transcript_without_header(tmp_path: Path):
    """The header is optional."""
    transcript = load_transcript(_write_transcript(tmp_path, WORD))

    assert transcript.version == 1
    assert transcript.hints == {}
    assert [w.word for w in transcript.words] == ["hello"]


def test_transcript_missing(tmp_path: Path):
    """A missing file is a loader error."""
    with pytest.raises(LoaderError, match="not found"):
        load_transcript(tmp_path / "absent.jsonl")


def test_transcript_bad_json_line(tmp_path: Path):
    """Malformed JSON is reported with its line number."""
    path = _write_transcript(tmp_path, WORD, '{"word": "oops"')

    with pytest.raises(ParseError) as exc_info:
        load_transcript(path)

    assert exc_info.value.line == 2


def test_transcript_non_object_line(tmp_path: Path):
    """Every record must be a JSON object."""
    with pytest.raises(ParseError, match="expected a JSON object"):
        load_transcript(_write_transcript(tmp_path, "[1, 2]"))


def test_transcript_invalid_record(tmp_path: Path):
    """A word with an unknown speaker fails validation."""
    path = _write_transcript(tmp_path, {**WORD, "speaker": "III"})

    with pytest.raises(InvalidFileError, match="line 1"):
        load_transcript(path)


def test_transcript_header_not_first(tmp_path: Path):
    """A header after the first word is rejected."""
    path = _write_transcript(tmp_path, WORD, {"type": "header", "version": 1})

    with pytest.raises(ParseError, match="header must be the first record"):
        load_transcript(path)


def test_transcript_unsupported_version(tmp_path: Path):
    """Unknown transcript versions are refused."""
    path = _write_transcript(tmp_path, {"type": "header", "version": 2}, WORD)

    with pytest.raises(UnsupportedVersion):
        load_transcript(path)


def test_transcript_without_words(tmp_path: Path):
    """A header alone is not a transcript."""
    path = _write_transcript(tmp_path, {"type": "header", "version": 1})

    with pytest.raises(InvalidFileError):
        load_transcript(path)


def test_transcript_overlapping_words(tmp_path: Path):
    """One speaker cannot say two words at once."""
    path = _write_transcript(tmp_path, WORD, {**WORD, "word": "there", "start": 0.2, "end": 0.5})

    with pytest.raises(InvalidFileError, match="overlaps"):
        load_transcript(path)


def test_transcript_speakers_may_overlap(tmp_path: Path):
    """Different speakers may talk over each other."""
    other = {**WORD, "word": "hi", "start": 0.1, "speaker": "II"}

    transcript = load_transcript(_write_transcript(tmp_path, WORD, other))

    assert len(transcript.words) == 2
