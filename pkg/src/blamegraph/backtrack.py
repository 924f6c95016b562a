"""Hierarchical oracle-guided backtracking over the causal graph.

One prompt evaluates all three levels (subtask, agent, step) top-down and
emits three candidate lists. The raw lists are sanitized against the case and
graph: unknown ids are dropped and logged, duplicates removed, and steps
falling outside every candidate subtask's range are kept but flagged. An
empty step list degrades to the last subtask's steps, since failures manifest
at the trajectory end.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .cases import FailureCase, agents_of, serialize_history
from .errors import BacktrackError, ParseError
from .gateway import ChatRequest, LlmGateway, TokenLedger
from .graph import CausalGraph, serialize_graph
from .prompts import load_template, render, repair_prompt

log = logging.getLogger(__name__)

_CANDIDATE_LABELS = (
    ("Candidate Error Subtasks", "subtask_ids"),
    ("Candidate Error Agents", "agent_names"),
    ("Candidate Error Steps", "step_ids"),
)
_LIST_RE = re.compile(r"\[(.*?)\]", re.DOTALL)


@dataclass(frozen=True)
class CandidateSet:
    """Suspect subtasks, agents, and steps, ordered as emitted."""

    subtask_ids: tuple[str, ...] = ()
    agent_names: tuple[str, ...] = ()
    step_ids: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "subtask_ids": list(self.subtask_ids),
            "agent_names": list(self.agent_names),
            "step_ids": list(self.step_ids),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CandidateSet":
        return cls(
            subtask_ids=tuple(data["subtask_ids"]),
            agent_names=tuple(data["agent_names"]),
            step_ids=tuple(data["step_ids"]),
        )


@dataclass
class SanitizationReport:
    dropped_subtasks: list[str] = field(default_factory=list)
    dropped_agents: list[str] = field(default_factory=list)
    dropped_steps: list[int] = field(default_factory=list)
    flagged_steps: list[int] = field(default_factory=list)
    fallback_applied: bool = False

    def to_dict(self) -> dict:
        return {
            "dropped_subtasks": self.dropped_subtasks,
            "dropped_agents": self.dropped_agents,
            "dropped_steps": self.dropped_steps,
            "flagged_steps": self.flagged_steps,
            "fallback_applied": self.fallback_applied,
        }


def _split_items(body: str) -> list[str]:
    return [item.strip() for item in body.split(",") if item.strip()]


def parse_candidates(text: str) -> CandidateSet:
    """Parse the three bracketed candidate lists; empty lists are valid."""
    values: dict[str, list] = {}
    lines = text.splitlines()
    for label, key in _CANDIDATE_LABELS:
        found = None
        for lineno, line in enumerate(lines, start=1):
            stripped = line.strip()
            if stripped.startswith(label):
                found = (lineno, stripped[len(label) :])
                break
        if found is None:
            raise ParseError(
                f"missing line {label!r}", rule="candidates.missing_line"
            )
        lineno, rest = found
        list_match = _LIST_RE.search(rest)
        if not list_match:
            raise ParseError(
                f"{label}: expected a bracketed list, got {rest.strip()!r}",
                rule="candidates.bad_list",
                line=lineno,
            )
        items = _split_items(list_match.group(1))
        if key == "step_ids":
            steps = []
            for item in items:
                cleaned = item.strip("'\"")
                try:
                    steps.append(int(cleaned))
                except ValueError:
                    raise ParseError(
                        f"{label}: step id {item!r} is not an integer",
                        rule="candidates.bad_step",
                        line=lineno,
                    ) from None
            values[key] = steps
        else:
            values[key] = [item.strip("'\"") for item in items]
    return CandidateSet(
        subtask_ids=tuple(values["subtask_ids"]),
        agent_names=tuple(values["agent_names"]),
        step_ids=tuple(values["step_ids"]),
    )


def render_candidates(candidates: CandidateSet) -> str:
    return (
        f"Candidate Error Subtasks: [{', '.join(candidates.subtask_ids)}]\n"
        f"Candidate Error Agents: [{', '.join(candidates.agent_names)}]\n"
        f"Candidate Error Steps: [{', '.join(str(s) for s in candidates.step_ids)}]"
    )


def _dedupe(items):
    seen = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def sanitize_candidates(
    raw: CandidateSet, case: FailureCase, graph: CausalGraph
) -> tuple[CandidateSet, SanitizationReport]:
    """Resolve every id against the case and graph; idempotent by construction.

    Steps outside every candidate subtask's range are retained but flagged:
    containment is useful context, not a requirement.
    """
    report = SanitizationReport()
    known_subtasks = {s.id for s in graph.subtasks}
    known_agents = {name: name for name in agents_of(case)}
    folded_agents = {name.casefold(): name for name in agents_of(case)}

    subtask_ids = []
    for raw_id in _dedupe(sid.strip() for sid in raw.subtask_ids):
        if raw_id in known_subtasks:
            subtask_ids.append(raw_id)
        else:
            report.dropped_subtasks.append(raw_id)
    agent_names = []
    for raw_name in _dedupe(name.strip() for name in raw.agent_names):
        resolved = known_agents.get(raw_name) or folded_agents.get(raw_name.casefold())
        if resolved is not None and resolved not in agent_names:
            agent_names.append(resolved)
        elif resolved is None:
            report.dropped_agents.append(raw_name)
    step_ids = []
    for step in _dedupe(raw.step_ids):
        if 0 <= step < case.n_steps:
            step_ids.append(step)
        else:
            report.dropped_steps.append(step)

    candidate_ranges = [
        s.step_range for s in graph.subtasks if s.id in set(subtask_ids)
    ]
    for step in step_ids:
        if candidate_ranges and not any(lo <= step <= hi for lo, hi in candidate_ranges):
            report.flagged_steps.append(step)

    if report.dropped_subtasks or report.dropped_agents or report.dropped_steps:
        log.warning(
            "case %s: sanitization dropped subtasks=%s agents=%s steps=%s",
            case.case_id,
            report.dropped_subtasks,
            report.dropped_agents,
            report.dropped_steps,
        )
    return (
        CandidateSet(
            subtask_ids=tuple(subtask_ids),
            agent_names=tuple(agent_names),
            step_ids=tuple(step_ids),
        ),
        report,
    )


def apply_fallback(
    candidates: CandidateSet, case: FailureCase, graph: CausalGraph
) -> tuple[CandidateSet, bool]:
    """When no candidate steps survive, fall back to the last subtask's steps."""
    if candidates.step_ids:
        return candidates, False
    last = graph.subtasks[-1]
    lo, hi = last.step_range
    steps = tuple(range(lo, hi + 1))
    subtask_ids = candidates.subtask_ids if candidates.subtask_ids else (last.id,)
    agent_names = candidates.agent_names
    if not agent_names:
        agent_names = tuple(
            _dedupe(s.agent_name for s in case.steps if lo <= s.index <= hi)
        )
    return (
        CandidateSet(subtask_ids=subtask_ids, agent_names=agent_names, step_ids=steps),
        True,
    )


def backtrack_candidates(
    case: FailureCase,
    graph: CausalGraph,
    oracles,
    loop_groups,
    gateway: LlmGateway,
    settings,
    ledger: TokenLedger,
) -> tuple[CandidateSet, SanitizationReport]:
    """Run the three-level backtracking prompt and sanitize its output."""
    graph_text = serialize_graph(graph, loop_groups=loop_groups, oracles=oracles)
    base_prompt = render(
        load_template("backtrack"),
        {
            "question": case.question,
            "history_text": serialize_history(case),
            "n_steps": str(case.n_steps),
            "graph": graph_text,
        },
        ground_truth=case.ground_truth_answer if settings.with_ground_truth else None,
    )

    def _complete(prompt: str):
        return gateway.complete(
            ChatRequest(
                prompt=prompt,
                model_id=settings.model_id,
                temperature=settings.temperature,
                max_output=settings.max_output,
                tag="backtrack",
            ),
            ledger,
        )

    response = _complete(base_prompt)
    try:
        raw = parse_candidates(response.text)
    except ParseError as first:
        retry = _complete(
            repair_prompt(
                base_prompt,
                response.text,
                [str(first)],
                "Output exactly the three bracketed candidate lists.",
            )
        )
        try:
            raw = parse_candidates(retry.text)
        except ParseError as second:
            raise BacktrackError(
                f"case {case.case_id}: backtracking output unparseable after repair: {second}"
            ) from second

    candidates, report = sanitize_candidates(raw, case, graph)
    candidates, fallback = apply_fallback(candidates, case, graph)
    report.fallback_applied = fallback
    if fallback:
        log.warning(
            "case %s: empty candidate steps after sanitization, falling back to the "
            "last subtask's steps",
            case.case_id,
        )
    return candidates, report
