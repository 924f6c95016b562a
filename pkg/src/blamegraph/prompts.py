"""Prompt templates as versioned text assets with named placeholders.

Templates live under ``blamegraph/prompts/`` and use ``{name}`` placeholders.
Rendering is substitution-only (no format-spec evaluation), so inserted values
may freely contain braces. When no ground-truth answer is available, every
line carrying the ``{ground_truth}`` placeholder is dropped from the rendered
prompt, which realizes the without-ground-truth evaluation setting uniformly
across all phases.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .errors import ConfigError

PROMPT_VERSION = 1

_PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")

TEMPLATE_NAMES = (
    "decompose",
    "behavior",
    "semantic_edges",
    "step_edges",
    "oracles",
    "backtrack",
    "attribute",
    "all_at_once",
    "graph_direct",
    "candidate_select",
)


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise ConfigError(f"unknown prompt template {name!r}")
    ref = resources.files("blamegraph").joinpath(f"prompts/{name}.txt")
    return ref.read_text(encoding="utf-8")


def render(template: str, values: dict[str, str], *, ground_truth: str | None) -> str:
    """Substitute placeholders; drop ground-truth lines when none is given."""
    if ground_truth is None:
        lines = [line for line in template.splitlines() if "{ground_truth}" not in line]
        template = "\n".join(lines)
        values = {k: v for k, v in values.items() if k != "ground_truth"}
    else:
        values = dict(values)
        values["ground_truth"] = ground_truth
    needed = set(_PLACEHOLDER_RE.findall(template))
    missing = needed - set(values)
    if missing:
        raise ConfigError(f"template is missing values for placeholders: {sorted(missing)}")
    rendered = template
    for name in needed:
        rendered = rendered.replace("{" + name + "}", str(values[name]))
    return rendered


def repair_prompt(base_prompt: str, previous_response: str, problems: list[str], reminder: str) -> str:
    """One repair round-trip: original prompt, the rejected answer, and why."""
    problem_lines = "\n".join(f"- {p}" for p in problems)
    return (
        f"{base_prompt}\n\n"
        f"Your previous answer was:\n{previous_response}\n\n"
        f"It was rejected for the following reason(s):\n{problem_lines}\n\n"
        f"Provide a corrected answer in the exact required format. {reminder}"
    )
