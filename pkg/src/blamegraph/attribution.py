"""Final root-cause attribution: one (agent, step) pair per case.

The four-stage screening (local origin, planning-control over loop groups,
data-flow corruption point, reversibility filter) is realized inside a single
prompt over the candidate set and the serialized graph with loop-group
annotations. The strict three-line output is parsed, cross-validated against
the case, and repaired once on failure.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .cases import FailureCase, agents_of, serialize_history
from .errors import AttributionError, ParseError
from .gateway import ChatRequest, LlmGateway, TokenLedger
from .prompts import load_template, render, repair_prompt

log = logging.getLogger(__name__)

_LABELS = ("Agent Name", "Step Number", "Reason for Mistake")
_INT_RE = re.compile(r"-?\d+")


@dataclass(frozen=True)
class Attribution:
    """The predicted root cause: responsible agent, step, and a free-text reason."""

    agent_name: str
    step_id: int
    reason: str

    def to_dict(self) -> dict:
        return {"agent_name": self.agent_name, "step_id": self.step_id, "reason": self.reason}

    @classmethod
    def from_dict(cls, data: dict) -> "Attribution":
        return cls(agent_name=data["agent_name"], step_id=data["step_id"], reason=data["reason"])


def parse_attribution(text: str) -> tuple[str, int, str, list[str]]:
    """Parse the strict three-line format; returns (agent, step, reason, warnings).

    Trailing commentary after the three labeled lines is ignored. When the
    step line names several integers the first is taken with a warning.
    """
    warnings: list[str] = []
    values: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        for label in _LABELS:
            if stripped.startswith(label) and label not in values:
                rest = stripped[len(label) :].lstrip()
                if rest.startswith(":"):
                    values[label] = (lineno, rest[1:].strip())
    missing = [label for label in _LABELS if label not in values]
    if missing:
        raise ParseError(
            f"attribution response missing line(s) {missing}", rule="attrib.missing_field"
        )
    agent = values["Agent Name"][1].strip()
    if not agent:
        raise ParseError("empty agent name", rule="attrib.empty_agent", line=values["Agent Name"][0])
    step_lineno, step_text = values["Step Number"]
    integers = _INT_RE.findall(step_text)
    if not integers:
        raise ParseError(
            f"step number is not an integer: {step_text!r}",
            rule="attrib.bad_step",
            line=step_lineno,
        )
    if len(integers) > 1:
        warnings.append(
            f"step line names {len(integers)} integers ({step_text!r}); taking the first"
        )
    return agent, int(integers[0]), values["Reason for Mistake"][1], warnings


def render_attribution(attribution: Attribution) -> str:
    return (
        f"Agent Name: {attribution.agent_name}\n"
        f"Step Number: {attribution.step_id}\n"
        f"Reason for Mistake: {attribution.reason}"
    )


def resolve_attribution(
    text: str, case: FailureCase
) -> tuple[Attribution | None, list[str], list[str]]:
    """Parse and cross-validate one response.

    Returns (attribution, problems, warnings): problems are blocking (feed the
    repair round-trip); an agent/step pair where the agent never acts at that
    step is only a soft warning since the two are scored independently.
    """
    try:
        agent, step, reason, warnings = parse_attribution(text)
    except ParseError as exc:
        return None, [str(exc)], []
    problems = []
    known = {name.casefold(): name for name in agents_of(case)}
    resolved = known.get(agent.casefold())
    if resolved is None:
        problems.append(
            f"agent {agent!r} does not appear in the trajectory; valid agents: "
            f"{agents_of(case)}"
        )
    if not 0 <= step < case.n_steps:
        problems.append(f"step {step} outside the valid range 0..{case.n_steps - 1}")
    if problems:
        return None, problems, warnings
    if case.steps[step].agent_name != resolved:
        warnings.append(
            f"agent {resolved!r} does not act at step {step} "
            f"(that step belongs to {case.steps[step].agent_name!r}); prediction kept"
        )
    return Attribution(agent_name=resolved, step_id=step, reason=reason), [], warnings


def run_attribution_prompt(
    template_name: str,
    values: dict[str, str],
    tag: str,
    case: FailureCase,
    gateway: LlmGateway,
    settings,
    ledger: TokenLedger,
    reminder: str = "Answer with exactly the three labeled lines.",
) -> tuple[Attribution, list[str]]:
    """Shared three-line-output flow: prompt, parse, validate, one repair."""
    base_prompt = render(
        load_template(template_name),
        values,
        ground_truth=case.ground_truth_answer if settings.with_ground_truth else None,
    )

    def _complete(prompt: str):
        return gateway.complete(
            ChatRequest(
                prompt=prompt,
                model_id=settings.model_id,
                temperature=settings.temperature,
                max_output=settings.max_output,
                tag=tag,
            ),
            ledger,
        )

    response = _complete(base_prompt)
    attribution, problems, warnings = resolve_attribution(response.text, case)
    if attribution is None:
        retry = _complete(repair_prompt(base_prompt, response.text, problems, reminder))
        attribution, problems, warnings = resolve_attribution(retry.text, case)
        if attribution is None:
            raise AttributionError(
                f"case {case.case_id}: no valid attribution after repair: {problems}"
            )
    for warning in warnings:
        log.warning("case %s: %s", case.case_id, warning)
    return attribution, warnings


def attribute(
    case: FailureCase,
    graph_text: str,
    candidates_text: str,
    gateway: LlmGateway,
    settings,
    ledger: TokenLedger,
) -> tuple[Attribution, list[str]]:
    """Four-stage counterfactual screening over the candidate set."""
    return run_attribution_prompt(
        "attribute",
        {
            "question": case.question,
            "history_text": serialize_history(case),
            "n_steps": str(case.n_steps),
            "candidate_set": candidates_text,
            "graph": graph_text,
        },
        "attribute",
        case,
        gateway,
        settings,
        ledger,
    )
