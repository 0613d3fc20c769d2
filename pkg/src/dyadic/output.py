"""Rich output formatting for CLI results."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from dyadic.audit import DecisionEntry
from dyadic.models import CHARACTERS, ProxemicSetup
from dyadic.trace import MotionTrace

console = Console()
err_console = Console(stderr=True)

KIND_STYLES: dict[str, str] = {
    "port": "cyan",
    "scene": "magenta bold",
    "context": "dim",
    "integrate": "yellow",
    "compile": "green",
    "sample": "blue",
}


def render_json(data: Any) -> None:
    console.print_json(json.dumps(data, sort_keys=True))


def render_error(exc: Exception) -> None:
    """Print the error, then a structured copy on stderr: ``{"error", "message"[, "round"]}``."""
    console.print(f"[red]Error:[/red] {escape(str(exc))}")
    payload: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    round_index = getattr(exc, "round_index", None)
    if round_index is not None:
        payload["round"] = round_index
    err_console.print_json(json.dumps(payload))


def render_setup(setup: ProxemicSetup) -> None:
    table = Table(show_header=True, header_style="bold")
    table.add_column("Character", justify="center")
    table.add_column("Position (m)")
    table.add_column("Heading (rad)", justify="right")
    table.add_column("Posture")
    for character in CHARACTERS:
        pose = setup.poses[character]
        table.add_row(
            character,
            f"({pose.position[0]:.2f}, {pose.position[1]:.2f})",
            f"{pose.heading:.2f}",
            setup.postures[character],
        )
    title = Text()
    title.append(setup.configuration, style="bold")
    title.append(f"  {setup.distance_category} {setup.relative.distance:.2f} m")
    console.print(Panel(table, title=title, border_style="blue"))


def render_run_summary(trace: MotionTrace, path: Path) -> None:
    """Rounds, frames and constraint counts of a finished run."""
    compiled = [e for e in trace.decisions if e.kind == "compile"]
    table = Table(title="Rounds", show_header=True, header_style="bold")
    table.add_column("Round", justify="center", width=7)
    table.add_column("Frames", justify="right")
    table.add_column("Constraints I")
    table.add_column("Constraints II")
    for round_ in trace.rounds:
        groups = {
            e.detail.get("character"): ", ".join(e.detail.get("groups", [])) or "-"
            for e in compiled
            if e.round == round_.index
        }
        table.add_row(
            str(round_.index),
            str(round_.frames["I"].shape[0]),
            groups.get("I", "-"),
            groups.get("II", "-"),
        )
    console.print(table)
    console.print(
        Text(
            f"  {trace.frame_count} frames ({trace.frame_count / trace.fps:.2f} s) "
            f"written to {path}",
            style="dim",
        )
    )


def render_validation_errors(errors: list[str]) -> None:
    if not errors:
        console.print(Text("Configuration validation passed, no errors found.", style="green bold"))
        return

    console.print(Text(f"Validation failed with {len(errors)} error(s):", style="red bold"))
    for error in errors:
        console.print(Text(f"  • {error}", style="red"))


def render_audit_entries(entries: list[dict[str, Any]]) -> None:
    """Render audit log entries as a Rich table."""
    if not entries:
        console.print(Text("No audit entries found.", style="dim"))
        return

    table = Table(title="Audit Log", show_header=True, header_style="bold")
    table.add_column("Timestamp")
    table.add_column("Action")
    table.add_column("Transcript")
    table.add_column("Seed", justify="right")
    table.add_column("Rounds", justify="right")
    table.add_column("User")
    table.add_column("Hostname")

    for entry in entries:
        table.add_row(
            str(entry.get("timestamp", "")),
            str(entry.get("action", "")),
            str(entry.get("transcript", "")),
            str(entry.get("seed", "")),
            str(entry.get("rounds", "")),
            str(entry.get("user", "")),
            str(entry.get("hostname", "")),
        )

    console.print(table)


def render_decisions(entries: list[DecisionEntry]) -> None:
    """Render a trace's decision log, one row per entry."""
    if not entries:
        console.print(Text("No decisions recorded.", style="dim"))
        return

    table = Table(title="Decision Log", show_header=True, header_style="bold")
    table.add_column("Round", justify="center", width=7)
    table.add_column("Kind")
    table.add_column("Detail", overflow="fold")
    for entry in entries:
        table.add_row(
            str(entry.round),
            Text(entry.kind, style=KIND_STYLES.get(entry.kind, "white")),
            json.dumps(entry.detail, sort_keys=True),
        )
    console.print(table)
