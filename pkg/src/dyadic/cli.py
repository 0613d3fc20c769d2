"""CLI interface for the dyadic director."""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Annotated

import typer
from loguru import logger

from dyadic.agent import AgentError, LlmPort, analyze_dialogue, plan_scene
from dyadic.audit import decision_rows, export_audit_log, read_audit_log, record_run
from dyadic.bvh import MissingHierarchy, export_bvh
from dyadic.diffusion import DiffusionError, GaussianDenoiser, make_schedule
from dyadic.director import DirectorError, run_dialogue
from dyadic.loader import (
    ConfigBundle,
    LoaderError,
    clear_cache,
    load_config,
    load_transcript,
    validate_config,
)
from dyadic.metrics import MetricsError, evaluate
from dyadic.models import CHARACTERS, Character
from dyadic.motion import MotionError
from dyadic.output import (
    console,
    render_audit_entries,
    render_decisions,
    render_error,
    render_json,
    render_run_summary,
    render_setup,
    render_validation_errors,
)
from dyadic.sampler import MotionSampler
from dyadic.stub import RuleStub
from dyadic.trace import load_trace, save_trace
from dyadic.transport import HttpLlmPort

CLI_ERRORS = (
    LoaderError,
    AgentError,
    DirectorError,
    DiffusionError,
    MetricsError,
    MotionError,
    MissingHierarchy,
)

app = typer.Typer(
    name="dyadic",
    help="Dyadic director: plan, direct and evaluate two-person conversational motion.",
    no_args_is_help=True,
)

audit_app = typer.Typer(help="Audit trail commands.")
app.add_typer(audit_app, name="audit")

ConfigOption = Annotated[
    Path, typer.Option("--config", "-c", help="Path to configuration directory.")
]
StubOption = Annotated[
    bool,
    typer.Option("--stub/--llm", help="Use the offline rule stub or the HTTP language model."),
]
VerboseOption = Annotated[
    bool, typer.Option("--verbose", "-v", help="Debug logging, including prompt bodies.")
]


def _configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "WARNING")


def _port(stub: bool, bundle: ConfigBundle, verbose: bool = False) -> LlmPort:
    if stub:
        return RuleStub(bundle.stub_rules)
    return HttpLlmPort.from_env(
        bundle.engine.llm, timeout=bundle.engine.agent.timeout_s, verbose=verbose
    )


def _sampler(bundle: ConfigBundle) -> MotionSampler:
    engine = bundle.engine
    schedule = make_schedule(
        engine.schedule.steps, engine.schedule.beta_min, engine.schedule.beta_max
    )
    return MotionSampler(GaussianDenoiser(engine.prior, schedule), schedule, engine.guidance)


def _characters(character: str) -> list[Character]:
    if character == "both":
        return list(CHARACTERS)
    for known in CHARACTERS:
        if character == known:
            return [known]
    raise typer.BadParameter(f"expected I, II or both, got '{character}'")


@app.command("plan-scene")
def plan_scene_cmd(
    transcript: Annotated[Path, typer.Argument(help="JSONL transcript file.")],
    config: ConfigOption = Path("config"),
    stub: StubOption = True,
    table: Annotated[bool, typer.Option("--table", help="Show a table instead of JSON.")] = False,
) -> None:
    """Analyze a transcript and print the initial proxemic setup."""
    _configure_logging(False)
    try:
        clear_cache()
        bundle = load_config(config)
        words = load_transcript(transcript)
        port = _port(stub, bundle)
        scene = analyze_dialogue(words.words, port, bundle.engine.agent, hints=words.hints)
        setup = plan_scene(scene, port, bundle.engine.agent)
        record_run("plan-scene", str(transcript), bundle.engine.audit)
        if table:
            render_setup(setup)
        else:
            render_json(
                {"scene": scene.model_dump(mode="json"), "setup": setup.model_dump(mode="json")}
            )
    except CLI_ERRORS as exc:
        render_error(exc)
        raise typer.Exit(code=1)


@app.command("run")
def run_cmd(
    transcript: Annotated[Path, typer.Argument(help="JSONL transcript file.")],
    out: Annotated[Path, typer.Option("--out", "-o", help="Trace file to write.")] = Path(
        "trace.json"
    ),
    config: ConfigOption = Path("config"),
    stub: StubOption = True,
    seed: Annotated[int, typer.Option("--seed", help="Sampling seed.")] = 0,
    rounds: Annotated[
        int | None, typer.Option("--rounds", help="Stop after this many rounds.")
    ] = None,
    no_controller: Annotated[
        bool, typer.Option("--no-controller", help="Sample without per-round signals.")
    ] = False,
    verbose: VerboseOption = False,
) -> None:
    """Direct a dialogue and write both characters' motion trace."""
    _configure_logging(verbose)
    try:
        clear_cache()
        bundle = load_config(config)
        words = load_transcript(transcript)
        trace = run_dialogue(
            words.words,
            bundle,
            _port(stub, bundle, verbose),
            _sampler(bundle),
            seed=seed,
            hints=words.hints,
            max_rounds=rounds,
            controller=False if no_controller else None,
        )
        save_trace(trace, out)
        record_run("run", str(transcript), bundle.engine.audit, seed=seed, rounds=len(trace.rounds))
        render_run_summary(trace, out)
    except CLI_ERRORS as exc:
        render_error(exc)
        raise typer.Exit(code=1)


@app.command("eval")
def eval_cmd(
    trace: Annotated[Path, typer.Argument(help="Trace to evaluate.")],
    reference: Annotated[
        Path | None, typer.Argument(help="Optional second trace to compare against.")
    ] = None,
    config: ConfigOption = Path("config"),
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Write the report here as well.")
    ] = None,
) -> None:
    """Print a DMSS/FDD metrics report as JSON."""
    _configure_logging(False)
    try:
        clear_cache()
        bundle = load_config(config)
        paths = [trace] if reference is None else [trace, reference]
        report = evaluate([(p.name, load_trace(p)) for p in paths], bundle.engine.dmss)
        data = report.model_dump(mode="json")
        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(report.model_dump_json(indent=2) + "\n")
        render_json(data)
    except CLI_ERRORS as exc:
        render_error(exc)
        raise typer.Exit(code=1)


@app.command("export")
def export_cmd(
    trace: Annotated[Path, typer.Argument(help="Trace to export.")],
    out: Annotated[Path, typer.Option("--out", "-o", help="BVH file to write.")] = Path(
        "motion.bvh"
    ),
    character: Annotated[
        str, typer.Option("--character", help="I, II or both (writes <stem>_I/_II.bvh).")
    ] = "both",
) -> None:
    """Export a trace to BVH."""
    _configure_logging(False)
    characters = _characters(character)
    try:
        loaded = load_trace(trace)
        for c in characters:
            path = out if len(characters) == 1 else out.with_name(f"{out.stem}_{c}{out.suffix}")
            export_bvh(loaded, loaded.skeleton, path, c)
            console.print(f"Character {c}: {loaded.frame_count} frames written to {path}")
    except CLI_ERRORS as exc:
        render_error(exc)
        raise typer.Exit(code=1)


@app.command("validate")
def validate_cmd(
    config: ConfigOption = Path("config"),
) -> None:
    """Validate the configuration files for consistency errors."""
    try:
        clear_cache()
        bundle = load_config(config)
        errors = validate_config(bundle)
        render_validation_errors(errors)
        if errors:
            raise typer.Exit(code=1)
    except LoaderError as exc:
        render_error(exc)
        raise typer.Exit(code=1)


TraceOption = Annotated[
    Path | None, typer.Option("--trace", help="Read the decision log of this trace instead.")
]
PathOption = Annotated[Path, typer.Option("--path", help="Path to audit log file.")]


@audit_app.command("show")
def audit_show(
    path: PathOption = Path("./audit_logs/audit.jsonl"),
    trace: TraceOption = None,
) -> None:
    """Show audit log entries, or a trace's decision log."""
    if trace is None:
        render_audit_entries(read_audit_log(audit_path=path))
        return
    try:
        render_decisions(load_trace(trace).decisions)
    except LoaderError as exc:
        render_error(exc)
        raise typer.Exit(code=1)


@audit_app.command("export")
def audit_export(
    fmt: Annotated[
        str, typer.Option("--format", "-f", help="Export format: json, csv or jsonl.")
    ] = "json",
    path: PathOption = Path("./audit_logs/audit.jsonl"),
    trace: TraceOption = None,
) -> None:
    """Export audit log entries, or a trace's decision log."""
    try:
        entries = (
            read_audit_log(audit_path=path)
            if trace is None
            else decision_rows(load_trace(trace).decisions)
        )
    except LoaderError as exc:
        render_error(exc)
        raise typer.Exit(code=1)
    if not entries:
        console.print("[dim]No audit entries to export.[/dim]")
        raise typer.Exit(code=0)
    typer.echo(export_audit_log(entries, fmt=fmt))
