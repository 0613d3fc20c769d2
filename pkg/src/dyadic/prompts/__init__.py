"""Versioned prompt templates for the director's language-model calls.

Templates are plain text with ``$name`` placeholders; unknown placeholders are
left in place.
"""

from __future__ import annotations

from importlib import resources
from string import Template

TEMPLATE_IDS = (
    "dialogue_analyzer",
    "spatial_planner",
    "spatial_relation_predictor",
    "gesture_sync_predictor",
    "gaze_predictor",
)


class PromptNotFound(LookupError):
    """Raised for an unknown template id or version."""


def load_template(template_id: str, version: str = "v1") -> str:
    if template_id not in TEMPLATE_IDS:
        raise PromptNotFound(f"Unknown prompt template '{template_id}'")
    asset = resources.files("dyadic.prompts").joinpath(version, f"{template_id}.txt")
    if not asset.is_file():
        raise PromptNotFound(f"Prompt template '{template_id}' has no version '{version}'")
    return asset.read_text(encoding="utf-8")


def render(template_id: str, variables: dict[str, str], version: str = "v1") -> str:
    return Template(load_template(template_id, version)).safe_substitute(variables)
