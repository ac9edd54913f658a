"""Prompt templates, stored verbatim as repo assets and golden-tested.

Placeholders use {name} syntax but are substituted with plain string
replacement, so literal braces elsewhere in a template are safe.
"""

from __future__ import annotations

from importlib import resources

KG_EXTRACTION = "kg_extraction"
SFT_GENERATION = "sft_generation"
RULE_JUDGE = "rule_judge"


def load_template(name: str) -> str:
    return (resources.files(__package__) / f"{name}.txt").read_text(encoding="utf-8")


def render(name: str, substitutions: dict[str, str]) -> str:
    text = load_template(name)
    for key, value in substitutions.items():
        placeholder = "{" + key + "}"
        if placeholder not in text:
            raise KeyError(f"template {name!r} has no placeholder {placeholder}")
        text = text.replace(placeholder, value)
    return text
