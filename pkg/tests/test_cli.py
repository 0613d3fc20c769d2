"""Integration tests for the CLI interface."""

from __future__ import annotations

import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest
import yaml
from typer.testing import CliRunner

from dyadic.cli import app
from dyadic.loader import clear_cache
from dyadic.transport import HttpLlmPort

runner = CliRunner()

CONFIG_PATH = Path(__file__).parent.parent / "config"
FIXTURES = Path(__file__).parent / "fixtures"
TRANSCRIPT = str(FIXTURES / "transcript_10s.jsonl")
GOLDEN = str(FIXTURES / "golden_transcript.jsonl")


@pytest.fixture(autouse=True)
def _isolate(monkeypatch, tmp_path):
    """Run every CLI test inside tmp_path so traces and audit logs don't leak."""
    clear_cache()
    monkeypatch.chdir(tmp_path)
    yield
    clear_cache()


def _fast_config(tmp_path: Path, audit: bool = False) -> str:
    """Shipped config with fewer sampling steps, optionally auditing into tmp_path."""
    config = tmp_path / "config"
    shutil.copytree(CONFIG_PATH, config)
    engine = yaml.safe_load((config / "engine.yaml").read_text())
    engine["guidance"]["ddim_steps"] = 20
    engine["audit"] = {"enabled": audit, "output": str(tmp_path / "audit_logs")}
    (config / "engine.yaml").write_text(yaml.dump(engine))
    return str(config)


def _run(config: str, out: str, *extra: str):
    return runner.invoke(
        app, ["run", TRANSCRIPT, "--stub", "-c", config, "--out", out, "--rounds", "2", *extra]
    )


# ── plan-scene ─────────────────────────────────────────────────────────────


def test_plan_scene_json():
    """plan-scene prints the scene and setup as JSON."""
    result = runner.invoke(app, ["plan-scene", GOLDEN, "-c", str(CONFIG_PATH)])

    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["scene"]["scenario"] == "job interview"
    assert data["setup"]["configuration"] == "vis_a_vis"
    assert data["setup"]["postures"] == {"I": "sit", "II": "sit"}


def test_plan_scene_table():
    """plan-scene --table shows the arrangement and distance."""
    result = runner.invoke(app, ["plan-scene", GOLDEN, "-c", str(CONFIG_PATH), "--table"])

    assert result.exit_code == 0
    assert "vis_a_vis" in result.output
    assert "social 0.95 m" in result.output


def test_plan_scene_missing_transcript():
    """A missing transcript exits 1 with a structured error."""
    result = runner.invoke(app, ["plan-scene", "absent.jsonl", "-c", str(CONFIG_PATH)])

    assert result.exit_code == 1
    assert "not found" in result.output


def test_plan_scene_llm_without_endpoint(monkeypatch):
    """--llm without the endpoint variables fails before any request."""
    monkeypatch.delenv("DYADIC_LLM_BASE_URL", raising=False)

    result = runner.invoke(app, ["plan-scene", GOLDEN, "-c", str(CONFIG_PATH), "--llm"])

    assert result.exit_code == 1
    assert "DYADIC_LLM_BASE_URL" in result.output


# ── run ────────────────────────────────────────────────────────────────────


def test_run_writes_trace(tmp_path: Path):
    """run writes a trace and summarizes its rounds."""
    result = _run(_fast_config(tmp_path), "trace.json")

    assert result.exit_code == 0
    assert "225 frames" in result.output
    data = json.loads((tmp_path / "trace.json").read_text())
    assert [r["index"] for r in data["rounds"]] == [0, 1]


def test_run_is_byte_identical_for_a_seed(tmp_path: Path):
    """Two runs with the same seed write the same bytes."""
    config = _fast_config(tmp_path)

    _run(config, "a.json", "--seed", "7")
    _run(config, "b.json", "--seed", "7")

    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_run_without_controller(tmp_path: Path):
    """--no-controller still writes a full trace."""
    result = _run(_fast_config(tmp_path), "trace.json", "--no-controller")

    assert result.exit_code == 0
    data = json.loads((tmp_path / "trace.json").read_text())
    assert not [d for d in data["decisions"] if d["kind"] == "context"]


def test_run_invalid_rounds(tmp_path: Path):
    """A zero round cap exits 1."""
    result = _run(_fast_config(tmp_path), "trace.json", "--rounds", "0")

    assert result.exit_code == 1
    assert "at least 1" in result.output


def test_run_unknown_flag():
    """Unknown options are usage errors."""
    result = runner.invoke(app, ["run", TRANSCRIPT, "--bogus"])

    assert result.exit_code == 2


# ── eval ───────────────────────────────────────────────────────────────────


def test_eval_single_trace(tmp_path: Path):
    """eval of one trace reports its dyad DMSS only."""
    _run(_fast_config(tmp_path), "trace.json")

    result = runner.invoke(app, ["eval", "trace.json", "-c", str(CONFIG_PATH)])

    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["dyads"][0]["frames"] == 225
    assert data["comparison"] is None


def test_eval_identical_traces(tmp_path: Path):
    """A trace compared with itself has cross DMSS 1 for both characters."""
    _run(_fast_config(tmp_path), "trace.json")

    result = runner.invoke(
        app, ["eval", "trace.json", "trace.json", "-c", str(CONFIG_PATH), "--out", "r.json"]
    )

    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["comparison"]["dmss"]["I"] == pytest.approx(1.0)
    assert data["comparison"]["dmss"]["II"] == pytest.approx(1.0)
    assert json.loads((tmp_path / "r.json").read_text()) == data


def test_stub_run_stays_offline_and_evaluates_finite(monkeypatch, tmp_path: Path):
    """A stub run never reaches the HTTP port, and its trace scores to finite metrics."""
    calls: list[object] = []

    def _offline(self, request):
        calls.append(request)
        raise AssertionError("stub run reached the HTTP port")

    monkeypatch.setattr(HttpLlmPort, "complete", _offline)
    monkeypatch.setenv("DYADIC_LLM_BASE_URL", "http://127.0.0.1:9")

    result = _run(_fast_config(tmp_path), "trace.json", "--seed", "7")

    assert result.exit_code == 0, result.output
    assert calls == []
    trace = json.loads((tmp_path / "trace.json").read_text())
    for entry in trace["rounds"]:
        for frames in entry["frames"].values():
            assert np.isfinite(np.asarray(frames)).all()

    report = runner.invoke(app, ["eval", "trace.json", "trace.json", "-c", str(CONFIG_PATH)])

    assert report.exit_code == 0, report.output
    data = json.loads(report.output)
    dmss = data["dyads"][0]["dmss"]
    assert math.isfinite(dmss["mean"])
    assert all(s is None or math.isfinite(s) for s in dmss["scores"])
    assert all(math.isfinite(v) for v in data["comparison"]["dmss"].values())
    assert math.isfinite(data["comparison"]["fdd"])


def test_eval_corrupt_trace(tmp_path: Path):
    """A truncated trace exits 1."""
    (tmp_path / "bad.json").write_text('{"version": 1, "rounds": [')

    result = runner.invoke(app, ["eval", "bad.json", "-c", str(CONFIG_PATH)])

    assert result.exit_code == 1
    assert "ParseError" in result.output


# ── export ─────────────────────────────────────────────────────────────────


def test_export_both_characters(tmp_path: Path):
    """Exporting both characters writes one BVH per character."""
    _run(_fast_config(tmp_path), "trace.json")

    result = runner.invoke(app, ["export", "trace.json", "--out", "scene.bvh"])

    assert result.exit_code == 0
    for character in ("I", "II"):
        text = (tmp_path / f"scene_{character}.bvh").read_text()
        assert text.startswith("HIERARCHY\nROOT Hips")
        assert "Frames: 225" in text


def test_export_one_character(tmp_path: Path):
    """--character II writes exactly the requested file."""
    _run(_fast_config(tmp_path), "trace.json")

    result = runner.invoke(
        app, ["export", "trace.json", "--out", "ii.bvh", "--character", "II"]
    )

    assert result.exit_code == 0
    assert (tmp_path / "ii.bvh").is_file()
    assert not (tmp_path / "ii_I.bvh").exists()


def test_export_unknown_character(tmp_path: Path):
    """Only I, II and both are accepted."""
    result = runner.invoke(app, ["export", "trace.json", "--character", "III"])

    assert result.exit_code == 2


# ── validate ───────────────────────────────────────────────────────────────


def test_validate():
    """validate on the shipped config should pass."""
    result = runner.invoke(app, ["validate", "-c", str(CONFIG_PATH)])

    assert result.exit_code == 0
    assert "passed" in result.output


def test_validate_reports_errors(tmp_path: Path):
    """A cutoff past the schedule fails validation."""
    config = Path(_fast_config(tmp_path))
    engine = yaml.safe_load((config / "engine.yaml").read_text())
    engine["guidance"]["similarity_cutoff"] = 5000
    (config / "engine.yaml").write_text(yaml.dump(engine))

    result = runner.invoke(app, ["validate", "-c", str(config)])

    assert result.exit_code == 1
    assert "similarity_cutoff" in result.output


# ── audit ──────────────────────────────────────────────────────────────────


def test_audit_show_empty():
    """audit show with no prior entries should succeed with 'No audit entries'."""
    result = runner.invoke(app, ["audit", "show"])

    assert result.exit_code == 0
    assert "No audit entries" in result.output


def test_audit_show_after_run(tmp_path: Path):
    """With auditing on, a run appears in the audit log."""
    _run(_fast_config(tmp_path, audit=True), "trace.json")

    result = runner.invoke(app, ["audit", "show", "--path", "audit_logs/audit.jsonl"])

    assert result.exit_code == 0
    assert "run" in result.output


def test_audit_export_json(tmp_path: Path):
    """audit export --format json produces the run entry."""
    _run(_fast_config(tmp_path, audit=True), "trace.json", "--seed", "3")

    result = runner.invoke(
        app, ["audit", "export", "--format", "json", "--path", "audit_logs/audit.jsonl"]
    )

    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data[0]["action"] == "run"
    assert data[0]["seed"] == 3
    assert data[0]["rounds"] == 2


def test_audit_show_trace_decisions(tmp_path: Path):
    """audit show --trace lists the trace's decision log."""
    _run(_fast_config(tmp_path), "trace.json")

    result = runner.invoke(app, ["audit", "show", "--trace", "trace.json"])

    assert result.exit_code == 0
    assert "Decision Log" in result.output
    assert "integrate" in result.output


def test_audit_export_trace_csv(tmp_path: Path):
    """Decision logs export as CSV rows."""
    _run(_fast_config(tmp_path), "trace.json")

    result = runner.invoke(app, ["audit", "export", "--trace", "trace.json", "--format", "csv"])

    assert result.exit_code == 0
    assert result.output.splitlines()[0] == "round,kind,detail"
