"""Tests for round timing and the full directing loop."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from dyadic.agent import AgentProtocolError
from dyadic.diffusion import GaussianDenoiser, make_schedule
from dyadic.director import DirectorError, RoundError, round_count, round_window, run_dialogue
from dyadic.loader import clear_cache, load_config, load_transcript
from dyadic.models import WindowConfig
from dyadic.sampler import MotionSampler
from dyadic.stub import RuleStub

CONFIG_PATH = Path(__file__).parent.parent / "config"
TRANSCRIPT = Path(__file__).parent / "fixtures" / "transcript_10s.jsonl"


@pytest.fixture(scope="module")
def bundle():
    clear_cache()
    loaded = load_config(CONFIG_PATH)
    clear_cache()
    return loaded


@pytest.fixture(scope="module")
def sampler(bundle) -> MotionSampler:
    engine = bundle.engine
    schedule = make_schedule(
        engine.schedule.steps, engine.schedule.beta_min, engine.schedule.beta_max
    )
    guidance = engine.guidance.model_copy(update={"ddim_steps": 20})
    return MotionSampler(GaussianDenoiser(engine.prior, schedule), schedule, guidance)


@pytest.fixture(scope="module")
def transcript():
    return load_transcript(TRANSCRIPT)


def _run(bundle, sampler, transcript, seed=7, **kwargs):
    stub = RuleStub(bundle.stub_rules)
    trace = run_dialogue(
        transcript.words, bundle, stub, sampler, seed=seed, hints=transcript.hints, **kwargs
    )
    return trace, stub


# ── timing ─────────────────────────────────────────────────────────────────


@pytest.mark.parametrize(
    "duration, expected",
    [(3.0, 1), (5.0, 1), (5.1, 2), (7.5, 2), (10.4, 4), (12.5, 4)],
)
def test_round_count(duration, expected):
    """Rounds cover the dialogue with 5 s windows every 2.5 s."""
    assert round_count(duration, WindowConfig(), 30) == expected


def test_first_round_window():
    """Round 0 generates its whole window."""
    window = round_window(0, WindowConfig(), 30)

    assert (window.segment_start, window.start, window.end) == (0.0, 0.0, 5.0)
    assert window.first_frame == 0


def test_later_round_window():
    """Later rounds control only the frames after the overlap."""
    window = round_window(3, WindowConfig(), 30)

    assert window.segment_start == pytest.approx(7.5)
    assert window.start == pytest.approx(10.0)
    assert window.end == pytest.approx(12.5)
    assert window.first_frame == 75
    assert window.frames == 150


# ── run_dialogue ───────────────────────────────────────────────────────────


def test_ten_second_dialogue(bundle, sampler, transcript):
    """A 10.4 s dialogue takes four rounds and yields 12.5 s per character."""
    trace, stub = _run(bundle, sampler, transcript)

    assert [r.index for r in trace.rounds] == [0, 1, 2, 3]
    assert [r.frames["I"].shape[0] for r in trace.rounds] == [75, 75, 75, 150]
    assert trace.frames("I").shape == (375, bundle.skeleton.width)
    assert trace.frames("II").shape == (375, bundle.skeleton.width)
    assert np.isfinite(trace.frames("I")).all()
    assert trace.seed == 7
    assert trace.scene is not None and trace.scene.relationship == "friends"
    assert trace.setup is not None and trace.setup.configuration == "side_by_side"
    assert stub.calls == 2 + 3 * 3


def test_first_round_starts_at_planned_poses(bundle, sampler, transcript):
    """Round 0 is sampled around each character's planned position."""
    trace, _ = _run(bundle, sampler, transcript)
    root = bundle.skeleton.named_groups["root_position"][:2]

    for character in ("I", "II"):
        planned = np.array(trace.setup.poses[character].position)
        first = trace.rounds[0].frames[character][:, root]
        np.testing.assert_allclose(first.mean(axis=0), planned, atol=0.2)


def test_round_boundaries_are_continuous(bundle, sampler, transcript):
    """The frame step across each round boundary is within five median steps."""
    trace, _ = _run(bundle, sampler, transcript, max_rounds=3)
    boundaries = np.cumsum([r.frames["I"].shape[0] for r in trace.rounds])[:-1]

    for character in ("I", "II"):
        steps = np.linalg.norm(np.diff(trace.frames(character), axis=0), axis=1)
        median = float(np.median(steps))
        for boundary in boundaries:
            assert steps[boundary - 1] <= 5.0 * median, (character, int(boundary))


def test_same_seed_same_trace(bundle, sampler, transcript):
    """Directing is reproducible for a fixed seed."""
    first, _ = _run(bundle, sampler, transcript, max_rounds=2)
    second, _ = _run(bundle, sampler, transcript, max_rounds=2)
    other, _ = _run(bundle, sampler, transcript, seed=8, max_rounds=2)

    for character in ("I", "II"):
        np.testing.assert_array_equal(first.frames(character), second.frames(character))
    assert not np.array_equal(first.frames("I"), other.frames("I"))


def test_round_cap(bundle, sampler, transcript):
    """A round cap shortens the trace; the last round keeps its full window."""
    trace, _ = _run(bundle, sampler, transcript, max_rounds=2)

    assert trace.frame_count == 225


def test_decision_log(bundle, sampler, transcript):
    """Every round records what was asked, compiled and sampled."""
    trace, _ = _run(bundle, sampler, transcript, max_rounds=2)

    first = [e.kind for e in trace.decisions if e.round == 0]
    second = [e.kind for e in trace.decisions if e.round == 1]
    assert first == ["port", "port", "scene", "compile", "compile", "sample", "sample"]
    assert second == [
        "context",
        "port",
        "port",
        "port",
        "integrate",
        "compile",
        "compile",
        "sample",
        "sample",
    ]


def test_without_controller(bundle, sampler, transcript):
    """With the controller off only the scene designer is consulted."""
    trace, stub = _run(bundle, sampler, transcript, max_rounds=3, controller=False)

    assert stub.calls == 2
    assert not [e for e in trace.decisions if e.kind == "context"]
    assert trace.frame_count == 300


def test_empty_transcript(bundle, sampler):
    """There is nothing to direct without words."""
    with pytest.raises(DirectorError, match="empty"):
        run_dialogue([], bundle, RuleStub(bundle.stub_rules), sampler)


def test_invalid_round_cap(bundle, sampler, transcript):
    """The round cap must be positive."""
    with pytest.raises(DirectorError, match="at least 1"):
        _run(bundle, sampler, transcript, max_rounds=0)


class _BrokenPort:
    def complete(self, request):
        return "{}"


def test_round_error_keeps_round_index(bundle, sampler, transcript):
    """Agent failures surface as RoundError with the failing round."""
    with pytest.raises(RoundError) as exc_info:
        run_dialogue(transcript.words, bundle, _BrokenPort(), sampler)

    assert exc_info.value.round_index == 0
    assert isinstance(exc_info.value.error, AgentProtocolError)
