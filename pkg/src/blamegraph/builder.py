"""LLM-driven construction of the causal graph for one failure case.

Phases run strictly in order: decomposition (with a bounded reflection loop
enforcing the step-range partition), agent behavior summaries, then the two
edge prompts. Node-level failures abort the case; edge-level problems are
collected into diagnostics and the build proceeds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .cases import FailureCase, serialize_history
from .errors import DecompositionError, ParseError
from .gateway import ChatRequest, LlmGateway, TokenLedger
from .grammar import (
    parse_behavior_blocks,
    parse_decomposition,
    parse_semantic_edges,
    parse_step_edges,
    render_behavior_blocks,
    render_decomposition,
)
from .graph import CausalGraph, SubtaskNode, check_partition, validate_graph
from .prompts import load_template, render, repair_prompt

log = logging.getLogger(__name__)

PARTITION_REMINDER = (
    "Ensure step ranges are continuous, cover all steps, and do NOT overlap."
)


@dataclass(frozen=True)
class BuildSettings:
    """Model parameters shared by every prompt of one run."""

    model_id: str
    temperature: float = 0.0
    max_output: int = 4096
    with_ground_truth: bool = True
    max_reflections: int = 3


@dataclass
class GraphDiagnostics:
    """Non-fatal problems collected while building one graph."""

    rejected_edges: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rejected_edges": self.rejected_edges, "notes": self.notes}


def _ground_truth(case: FailureCase, settings: BuildSettings) -> str | None:
    if not settings.with_ground_truth:
        return None
    return case.ground_truth_answer


def _base_values(case: FailureCase) -> dict[str, str]:
    return {
        "question": case.question,
        "history_text": serialize_history(case),
        "n_steps": str(case.n_steps),
    }


def _request(prompt: str, tag: str, settings: BuildSettings) -> ChatRequest:
    return ChatRequest(
        prompt=prompt,
        model_id=settings.model_id,
        temperature=settings.temperature,
        max_output=settings.max_output,
        tag=tag,
    )


def decompose(
    case: FailureCase,
    exemplars_text: str,
    gateway: LlmGateway,
    settings: BuildSettings,
    ledger: TokenLedger,
) -> list[SubtaskNode]:
    """Propose a subtask plan and repair it until the partition holds.

    The first proposal gets up to ``max_reflections`` repair round-trips; each
    repair feeds the violation description back verbatim. A plan that is still
    invalid afterwards raises DecompositionError carrying the last report.
    """
    base_prompt = render(
        load_template("decompose"),
        {**_base_values(case), "rag_text": exemplars_text},
        ground_truth=_ground_truth(case, settings),
    )
    prompt = base_prompt
    problems: list[str] = []
    for attempt in range(settings.max_reflections + 1):
        response = gateway.complete(_request(prompt, "decompose", settings), ledger)
        try:
            subtasks = parse_decomposition(response.text)
        except ParseError as exc:
            problems = [str(exc)]
        else:
            problems = check_partition([s.step_range for s in subtasks], case.n_steps)
            if not problems:
                return subtasks
        if attempt < settings.max_reflections:
            log.info(
                "case %s: decomposition attempt %d rejected (%d problem(s)), reflecting",
                case.case_id,
                attempt + 1,
                len(problems),
            )
            prompt = repair_prompt(base_prompt, response.text, problems, PARTITION_REMINDER)
    raise DecompositionError(
        f"case {case.case_id}: decomposition invalid after "
        f"{settings.max_reflections} reflection round(s)",
        violations=problems,
    )


def summarize_behaviors(
    case: FailureCase,
    subtasks: list[SubtaskNode],
    gateway: LlmGateway,
    settings: BuildSettings,
    ledger: TokenLedger,
):
    prompt = render(
        load_template("behavior"),
        {**_base_values(case), "subtasks_text": render_decomposition(subtasks)},
        ground_truth=_ground_truth(case, settings),
    )
    response = gateway.complete(_request(prompt, "behavior", settings), ledger)
    return parse_behavior_blocks(response.text, subtasks)


def build_graph(
    case: FailureCase,
    exemplars_text: str,
    gateway: LlmGateway,
    settings: BuildSettings,
    ledger: TokenLedger,
) -> tuple[CausalGraph, GraphDiagnostics]:
    """Run all four construction prompts and assemble a validated graph."""
    diagnostics = GraphDiagnostics()
    subtasks = decompose(case, exemplars_text, gateway, settings, ledger)
    agents = summarize_behaviors(case, subtasks, gateway, settings, ledger)

    subtasks_text = render_decomposition(subtasks)
    subtasks_agents_text = subtasks_text + "\n\n" + render_behavior_blocks(subtasks, agents)

    edge_prompt = render(
        load_template("semantic_edges"),
        {**_base_values(case), "subtasks_agents_text": subtasks_agents_text},
        ground_truth=_ground_truth(case, settings),
    )
    edge_response = gateway.complete(_request(edge_prompt, "semantic_edges", settings), ledger)
    subtask_edges, agent_edges, edge_diags = parse_semantic_edges(
        edge_response.text, subtasks, agents
    )
    diagnostics.rejected_edges.extend(edge_diags)

    step_prompt = render(
        load_template("step_edges"),
        {**_base_values(case), "subtasks_text": subtasks_text},
        ground_truth=_ground_truth(case, settings),
    )
    step_response = gateway.complete(_request(step_prompt, "step_edges", settings), ledger)
    step_edges, step_diags = parse_step_edges(step_response.text, case)
    diagnostics.rejected_edges.extend(step_diags)

    graph = CausalGraph(
        subtasks=tuple(subtasks),
        agents=tuple(agents),
        subtask_edges=tuple(subtask_edges),
        agent_edges=tuple(agent_edges),
        step_edges=tuple(step_edges),
    )
    validate_graph(graph, case)
    if diagnostics.rejected_edges:
        log.info(
            "case %s: %d edge block(s) rejected to diagnostics",
            case.case_id,
            len(diagnostics.rejected_edges),
        )
    return graph, diagnostics
