"""Per-subtask verifier synthesis and its strict block grammar.

All K oracles come from a single prompt that generates them in subtask order,
carrying earlier oracles forward as in-context constraints. One repair
round-trip is allowed on structural failure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .cases import FailureCase, serialize_history
from .errors import OracleSynthesisError, ParseError
from .gateway import ChatRequest, LlmGateway, TokenLedger
from .grammar import render_decomposition
from .graph import SubtaskNode
from .prompts import load_template, render, repair_prompt

ORACLE_SECTIONS = ("Goal", "Precondition", "Key Evidence", "Acceptance Criteria")

_ORACLE_START = re.compile(r"^\s*-\s*Subtask Name\s*:\s*(.*)$")
_ORACLE_MARK = re.compile(r"^\s*-\s*Oracle\s*:\s*$")
_ORACLE_SECTION = re.compile(r"^\s*(Goal|Precondition|Key Evidence|Acceptance Criteria)\s*:\s*(.*)$")
_BULLET = re.compile(r"^\s*-\s+(.*)$")


@dataclass(frozen=True)
class SubtaskOracle:
    """Verifier for one subtask: goal, preconditions, evidence, acceptance."""

    subtask_name: str
    goal: str
    preconditions: tuple[str, ...]
    key_evidence: tuple[str, ...]
    acceptance_criteria: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "subtask_name": self.subtask_name,
            "goal": self.goal,
            "preconditions": list(self.preconditions),
            "key_evidence": list(self.key_evidence),
            "acceptance_criteria": list(self.acceptance_criteria),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SubtaskOracle":
        return cls(
            subtask_name=data["subtask_name"],
            goal=data["goal"],
            preconditions=tuple(data["preconditions"]),
            key_evidence=tuple(data["key_evidence"]),
            acceptance_criteria=tuple(data["acceptance_criteria"]),
        )


def _items(lines: list[str]) -> tuple[str, ...]:
    """Split a section body into items: bullets when present, else lines."""
    bullets = [m.group(1).strip() for line in lines if (m := _BULLET.match(line))]
    if bullets:
        return tuple(b for b in bullets if b)
    return tuple(line.strip() for line in lines if line.strip())


def parse_oracles(text: str, subtasks: list[SubtaskNode]) -> list[SubtaskOracle]:
    """Parse the K-block oracle response against the subtask plan.

    Blocks must appear once per subtask, in plan order, each carrying the
    -Oracle: marker and all four sections.
    """
    lines = list(enumerate(text.splitlines(), start=1))
    starts = [i for i, (_, line) in enumerate(lines) if _ORACLE_START.match(line)]
    if not starts:
        raise ParseError("no '-Subtask Name:' block found", rule="oracle.no_blocks")
    if len(starts) != len(subtasks):
        raise ParseError(
            f"expected {len(subtasks)} oracle block(s), found {len(starts)}",
            rule="oracle.block_count",
        )
    known_names = [s.name for s in subtasks]
    oracles: list[SubtaskOracle] = []
    bounds = starts + [len(lines)]
    for position, start in enumerate(starts):
        lineno, header = lines[start]
        name = _ORACLE_START.match(header).group(1).strip()
        if name not in known_names:
            raise ParseError(
                f"oracle names unknown subtask {name!r} (must copy exactly from the plan)",
                rule="oracle.unknown_name",
                line=lineno,
            )
        if name != known_names[position]:
            raise ParseError(
                f"oracle block {position + 1} names {name!r} but the plan's subtask "
                f"{position + 1} is {known_names[position]!r}; blocks must follow plan order",
                rule="oracle.order",
                line=lineno,
            )
        saw_marker = False
        sections: dict[str, list[str]] = {}
        current: str | None = None
        for i in range(start + 1, bounds[position + 1]):
            _, line = lines[i]
            if _ORACLE_MARK.match(line):
                saw_marker = True
                continue
            section_match = _ORACLE_SECTION.match(line)
            if section_match:
                label = section_match.group(1)
                if label in sections:
                    raise ParseError(
                        f"oracle for {name!r}: duplicate section {label!r}",
                        rule="oracle.duplicate_section",
                        line=lineno,
                    )
                sections[label] = [section_match.group(2)]
                current = label
                continue
            if line.strip() and current is not None:
                sections[current].append(line)
        if not saw_marker:
            raise ParseError(
                f"oracle for {name!r}: missing '-Oracle:' marker line",
                rule="oracle.missing_marker",
                line=lineno,
            )
        missing = [s for s in ORACLE_SECTIONS if s not in sections]
        if missing:
            raise ParseError(
                f"oracle for {name!r}: missing section(s) {missing}",
                rule="oracle.missing_section",
                line=lineno,
            )
        oracles.append(
            SubtaskOracle(
                subtask_name=name,
                goal=" ".join(l.strip() for l in sections["Goal"] if l.strip()),
                preconditions=_items(sections["Precondition"]),
                key_evidence=_items(sections["Key Evidence"]),
                acceptance_criteria=_items(sections["Acceptance Criteria"]),
            )
        )
    return oracles


def render_oracles(oracles: list[SubtaskOracle] | tuple[SubtaskOracle, ...]) -> str:
    blocks = []
    for oracle in oracles:
        lines = [f"-Subtask Name: {oracle.subtask_name}", "-Oracle:", f" Goal: {oracle.goal}"]
        lines.append(" Precondition:")
        lines.extend(f" - {item}" for item in oracle.preconditions)
        lines.append(" Key Evidence:")
        lines.extend(f" - {item}" for item in oracle.key_evidence)
        lines.append(" Acceptance Criteria:")
        lines.extend(f" - {item}" for item in oracle.acceptance_criteria)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def synthesize_oracles(
    case: FailureCase,
    subtasks: list[SubtaskNode],
    exemplars_text: str,
    gateway: LlmGateway,
    settings,
    ledger: TokenLedger,
) -> list[SubtaskOracle]:
    """Synthesize one oracle per subtask, in order, in a single prompt."""
    base_prompt = render(
        load_template("oracles"),
        {
            "question": case.question,
            "history_text": serialize_history(case),
            "n_steps": str(case.n_steps),
            "rag_text": exemplars_text,
            "subtasks": render_decomposition(subtasks),
        },
        ground_truth=case.ground_truth_answer if settings.with_ground_truth else None,
    )
    request = ChatRequest(
        prompt=base_prompt,
        model_id=settings.model_id,
        temperature=settings.temperature,
        max_output=settings.max_output,
        tag="oracles",
    )
    response = gateway.complete(request, ledger)
    try:
        return parse_oracles(response.text, subtasks)
    except ParseError as first:
        repair = repair_prompt(
            base_prompt,
            response.text,
            [str(first)],
            "Output exactly one block per subtask, in plan order, copying each "
            "subtask name exactly.",
        )
        retry = gateway.complete(
            ChatRequest(
                prompt=repair,
                model_id=settings.model_id,
                temperature=settings.temperature,
                max_output=settings.max_output,
                tag="oracles",
            ),
            ledger,
        )
        try:
            return parse_oracles(retry.text, subtasks)
        except ParseError as second:
            raise OracleSynthesisError(
                f"case {case.case_id}: oracle synthesis failed after repair: {second}"
            ) from second
