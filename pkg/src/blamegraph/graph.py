"""Two-level causal graph reconstructed from a flat trajectory.

Subtask nodes partition the step range into task phases; agent nodes carry a
four-field behavior summary per (subtask, agent). Three typed edge sets link
consecutive subtasks, agents within a subtask, and concrete data handoffs
between steps. Edges are advisory evidence; nodes are structural.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .cases import FailureCase
from .errors import GraphIntegrityError

GRAPH_SCHEMA_VERSION = 1

SUBTASK_EDGE_TYPES = ("data_dependency", "logical_prereq")
AGENT_EDGE_TYPES = (
    "obs_dependency",
    "reasoning_continuation",
    "decision_dependency",
    "environment_feedback",
    "memory_ref",
    "loop_control",
)
STEP_DATA_TYPES = ("text", "numeric", "list", "boolean")


@dataclass(frozen=True)
class SubtaskNode:
    """One task phase covering an inclusive, contiguous step interval."""

    id: str
    name: str
    step_range: tuple[int, int]
    description: str


@dataclass(frozen=True)
class AgentBehavior:
    """Observation/thought/action/result summary of one agent in one subtask.

    Fields are never empty; an absent component is the literal string "none".
    """

    observation: str
    thought: str
    action: str
    result: str


@dataclass(frozen=True)
class AgentNode:
    agent_name: str
    subtask_id: str
    behavior: AgentBehavior


@dataclass(frozen=True)
class CounterfactualPattern:
    """Binds a latent upstream deviation to an observable downstream error."""

    bias: str
    anomaly: str


@dataclass(frozen=True)
class SubtaskEdge:
    from_id: str
    to_id: str
    edge_type: str
    patterns: tuple[CounterfactualPattern, ...] = ()


@dataclass(frozen=True)
class AgentEdge:
    subtask_id: str
    from_agent: str
    to_agent: str
    edge_type: str
    patterns: tuple[CounterfactualPattern, ...] = ()


@dataclass(frozen=True)
class StepEndpoint:
    step_id: int
    agent_id: str
    data: str
    data_type: str


@dataclass(frozen=True)
class StepEdge:
    """Concrete data snapshot: upstream output consumed as downstream input."""

    upstream: StepEndpoint
    downstream: StepEndpoint


@dataclass(frozen=True)
class CausalGraph:
    subtasks: tuple[SubtaskNode, ...]
    agents: tuple[AgentNode, ...]
    subtask_edges: tuple[SubtaskEdge, ...] = ()
    agent_edges: tuple[AgentEdge, ...] = ()
    step_edges: tuple[StepEdge, ...] = ()

    def subtask_by_id(self, subtask_id: str) -> SubtaskNode | None:
        for node in self.subtasks:
            if node.id == subtask_id:
                return node
        return None

    def agents_in_subtask(self, subtask_id: str) -> list[AgentNode]:
        return [a for a in self.agents if a.subtask_id == subtask_id]


def check_partition(ranges: list[tuple[int, int]], n_steps: int) -> list[str]:
    """Validate that step ranges partition 0..n_steps-1 in listed order.

    Returns human-readable violation strings (empty when valid). The
    violation text is fed back verbatim into repair prompts, so the coverage
    message cites the "cover all steps" constraint.
    """
    violations: list[str] = []
    if not ranges:
        return [f"no subtasks proposed; the plan must cover all steps 0..{n_steps - 1}"]
    for position, (lo, hi) in enumerate(ranges, start=1):
        if lo > hi:
            violations.append(f"subtask {position} has an invalid step range [{lo}, {hi}] (start > end)")
    if violations:
        return violations
    first_lo = ranges[0][0]
    if first_lo != 0:
        violations.append(
            f"the first subtask starts at step {first_lo}; subtasks must cover all steps "
            f"starting from step 0"
        )
    for position in range(1, len(ranges)):
        prev_hi = ranges[position - 1][1]
        lo = ranges[position][0]
        if lo <= prev_hi:
            violations.append(
                f"subtask {position + 1} range starting at {lo} overlaps the previous "
                f"range ending at {prev_hi}; ranges must NOT overlap"
            )
        elif lo > prev_hi + 1:
            violations.append(
                f"steps {prev_hi + 1}..{lo - 1} are not assigned to any subtask; ranges "
                f"must be continuous and cover all steps"
            )
    last_hi = ranges[-1][1]
    if last_hi != n_steps - 1:
        if last_hi < n_steps - 1:
            violations.append(
                f"steps {last_hi + 1}..{n_steps - 1} are missing; the plan must cover all steps"
            )
        else:
            violations.append(
                f"the last subtask ends at step {last_hi} but the trajectory only has "
                f"steps 0..{n_steps - 1}"
            )
    return violations


def validate_graph(graph: CausalGraph, case: FailureCase) -> None:
    """Joint referential check of every node and edge against the case.

    Raises GraphIntegrityError listing all problems; a valid graph built
    through the phase parsers always passes.
    """
    problems: list[str] = []
    ids = [s.id for s in graph.subtasks]
    if len(set(ids)) != len(ids):
        problems.append(f"duplicate subtask ids: {ids}")
    problems.extend(check_partition([s.step_range for s in graph.subtasks], case.n_steps))

    by_id = {s.id: s for s in graph.subtasks}
    agents_by_range: dict[str, set[str]] = {}
    for subtask in graph.subtasks:
        lo, hi = subtask.step_range
        agents_by_range[subtask.id] = {
            s.agent_name for s in case.steps if lo <= s.index <= hi
        }
    agent_names = {(a.subtask_id, a.agent_name) for a in graph.agents}
    for node in graph.agents:
        if node.subtask_id not in by_id:
            problems.append(f"agent node {node.agent_name!r} references unknown subtask {node.subtask_id}")
        elif node.agent_name not in agents_by_range[node.subtask_id]:
            problems.append(
                f"agent {node.agent_name!r} does not act within subtask "
                f"{node.subtask_id} step range {by_id[node.subtask_id].step_range}"
            )

    index_of = {s.id: pos for pos, s in enumerate(graph.subtasks)}
    for edge in graph.subtask_edges:
        if edge.from_id not in by_id or edge.to_id not in by_id:
            problems.append(f"subtask edge {edge.from_id}->{edge.to_id} has an unknown endpoint")
            continue
        if index_of[edge.to_id] != index_of[edge.from_id] + 1:
            problems.append(
                f"subtask edge {edge.from_id}->{edge.to_id} links non-consecutive subtasks"
            )
        if edge.edge_type not in SUBTASK_EDGE_TYPES:
            problems.append(f"subtask edge {edge.from_id}->{edge.to_id}: unknown type {edge.edge_type!r}")
    for edge in graph.agent_edges:
        for endpoint in (edge.from_agent, edge.to_agent):
            if (edge.subtask_id, endpoint) not in agent_names:
                problems.append(
                    f"agent edge {edge.from_agent}->{edge.to_agent} in {edge.subtask_id}: "
                    f"{endpoint!r} is not an agent node of that subtask"
                )
        if edge.edge_type not in AGENT_EDGE_TYPES:
            problems.append(
                f"agent edge {edge.from_agent}->{edge.to_agent}: unknown type {edge.edge_type!r}"
            )
    for edge in graph.step_edges:
        for endpoint in (edge.upstream, edge.downstream):
            if not 0 <= endpoint.step_id < case.n_steps:
                problems.append(f"step edge endpoint {endpoint.step_id} outside 0..{case.n_steps - 1}")
            if endpoint.data_type not in STEP_DATA_TYPES:
                problems.append(f"step edge endpoint {endpoint.step_id}: unknown data_type {endpoint.data_type!r}")
        if edge.upstream.step_id >= edge.downstream.step_id:
            problems.append(
                f"step edge {edge.upstream.step_id}->{edge.downstream.step_id}: upstream "
                f"must precede downstream"
            )
    if problems:
        raise GraphIntegrityError(
            f"graph fails {len(problems)} integrity check(s)", problems=problems
        )


def graph_to_dict(graph: CausalGraph) -> dict:
    return {
        "schema_version": GRAPH_SCHEMA_VERSION,
        "subtasks": [
            {
                "id": s.id,
                "name": s.name,
                "step_range": list(s.step_range),
                "description": s.description,
            }
            for s in graph.subtasks
        ],
        "agents": [
            {
                "agent_name": a.agent_name,
                "subtask_id": a.subtask_id,
                "behavior": {
                    "observation": a.behavior.observation,
                    "thought": a.behavior.thought,
                    "action": a.behavior.action,
                    "result": a.behavior.result,
                },
            }
            for a in graph.agents
        ],
        "subtask_edges": [
            {
                "from_id": e.from_id,
                "to_id": e.to_id,
                "edge_type": e.edge_type,
                "patterns": [{"bias": p.bias, "anomaly": p.anomaly} for p in e.patterns],
            }
            for e in graph.subtask_edges
        ],
        "agent_edges": [
            {
                "subtask_id": e.subtask_id,
                "from_agent": e.from_agent,
                "to_agent": e.to_agent,
                "edge_type": e.edge_type,
                "patterns": [{"bias": p.bias, "anomaly": p.anomaly} for p in e.patterns],
            }
            for e in graph.agent_edges
        ],
        "step_edges": [
            {
                "upstream": {
                    "step_id": e.upstream.step_id,
                    "agent_id": e.upstream.agent_id,
                    "data": e.upstream.data,
                    "data_type": e.upstream.data_type,
                },
                "downstream": {
                    "step_id": e.downstream.step_id,
                    "agent_id": e.downstream.agent_id,
                    "data": e.downstream.data,
                    "data_type": e.downstream.data_type,
                },
            }
            for e in graph.step_edges
        ],
    }


def graph_from_dict(data: dict) -> CausalGraph:
    if data.get("schema_version") != GRAPH_SCHEMA_VERSION:
        raise GraphIntegrityError(
            f"unsupported graph schema_version {data.get('schema_version')!r}", problems=[]
        )

    def _patterns(items: list[dict]) -> tuple[CounterfactualPattern, ...]:
        return tuple(CounterfactualPattern(bias=p["bias"], anomaly=p["anomaly"]) for p in items)

    def _endpoint(d: dict) -> StepEndpoint:
        return StepEndpoint(
            step_id=d["step_id"], agent_id=d["agent_id"], data=d["data"], data_type=d["data_type"]
        )

    return CausalGraph(
        subtasks=tuple(
            SubtaskNode(
                id=s["id"],
                name=s["name"],
                step_range=(s["step_range"][0], s["step_range"][1]),
                description=s["description"],
            )
            for s in data["subtasks"]
        ),
        agents=tuple(
            AgentNode(
                agent_name=a["agent_name"],
                subtask_id=a["subtask_id"],
                behavior=AgentBehavior(
                    observation=a["behavior"]["observation"],
                    thought=a["behavior"]["thought"],
                    action=a["behavior"]["action"],
                    result=a["behavior"]["result"],
                ),
            )
            for a in data["agents"]
        ),
        subtask_edges=tuple(
            SubtaskEdge(
                from_id=e["from_id"],
                to_id=e["to_id"],
                edge_type=e["edge_type"],
                patterns=_patterns(e["patterns"]),
            )
            for e in data["subtask_edges"]
        ),
        agent_edges=tuple(
            AgentEdge(
                subtask_id=e["subtask_id"],
                from_agent=e["from_agent"],
                to_agent=e["to_agent"],
                edge_type=e["edge_type"],
                patterns=_patterns(e["patterns"]),
            )
            for e in data["agent_edges"]
        ),
        step_edges=tuple(
            StepEdge(upstream=_endpoint(e["upstream"]), downstream=_endpoint(e["downstream"]))
            for e in data["step_edges"]
        ),
    )


def save_graph(graph: CausalGraph, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(graph_to_dict(graph), ensure_ascii=False, indent=2, sort_keys=True),
        encoding="utf-8",
    )


def load_graph(path: str | Path) -> CausalGraph:
    return graph_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def serialize_graph(graph: CausalGraph, *, loop_groups=(), oracles=()) -> str:
    """Deterministic stable-ordered text rendering for prompt injection.

    Includes loop-group annotations and per-subtask oracles when provided;
    identical inputs yield byte-identical text.
    """
    lines: list[str] = []
    lines.append("=== Subtask Nodes ===")
    for node in graph.subtasks:
        lo, hi = node.step_range
        lines.append(f"{node.id} | {node.name} | steps [{lo}, {hi}]")
        lines.append(f"  Description: {node.description}")
    lines.append("")
    lines.append("=== Agent Nodes (per subtask) ===")
    for subtask in graph.subtasks:
        members = graph.agents_in_subtask(subtask.id)
        lines.append(f"[{subtask.id}] {subtask.name}:")
        if not members:
            lines.append("  (no agent nodes)")
        for agent in members:
            lines.append(f"  - Agent: {agent.agent_name}")
            lines.append(f"    Observation: {agent.behavior.observation}")
            lines.append(f"    Thought: {agent.behavior.thought}")
            lines.append(f"    Action: {agent.behavior.action}")
            lines.append(f"    Result: {agent.behavior.result}")
    lines.append("")
    lines.append("=== Subtask Edges ===")
    if not graph.subtask_edges:
        lines.append("(none)")
    for edge in graph.subtask_edges:
        lines.append(f"From: {edge.from_id} To: {edge.to_id} Type: {edge.edge_type}")
        for pattern in edge.patterns:
            lines.append(f"  Bias: {pattern.bias}")
            lines.append(f"  Anomaly: {pattern.anomaly}")
    lines.append("")
    lines.append("=== Agent Edges (within subtasks) ===")
    if not graph.agent_edges:
        lines.append("(none)")
    for edge in graph.agent_edges:
        lines.append(
            f"[{edge.subtask_id}] From: {edge.from_agent} To: {edge.to_agent} "
            f"Type: {edge.edge_type}"
        )
        for pattern in edge.patterns:
            lines.append(f"  Bias: {pattern.bias}")
            lines.append(f"  Anomaly: {pattern.anomaly}")
    lines.append("")
    lines.append("=== Step Data Flow ===")
    if not graph.step_edges:
        lines.append("(none)")
    for edge in graph.step_edges:
        up, down = edge.upstream, edge.downstream
        lines.append(
            f"step {up.step_id} ({up.agent_id}) --[{up.data_type}: {up.data}]--> "
            f"step {down.step_id} ({down.agent_id}) consumes [{down.data_type}: {down.data}]"
        )
    lines.append("")
    lines.append("=== Loop Groups (repeated agent/action patterns) ===")
    if not loop_groups:
        lines.append("(none detected)")
    for position, group in enumerate(loop_groups, start=1):
        agent, action_key = group.signature
        steps_text = ", ".join(str(s) for s in group.member_step_ids)
        lines.append(
            f"LG{position}: agent={agent} action_key={action_key!r} period={group.period} "
            f"occurrences={group.occurrence_count}"
        )
        lines.append(
            f"  steps [{steps_text}] roles: entry={group.member_step_ids[0]} "
            f"exit={group.member_step_ids[-1]}"
        )
    if oracles:
        lines.append("")
        lines.append("=== Subtask Oracles ===")
        for oracle in oracles:
            lines.append(f"Subtask: {oracle.subtask_name}")
            lines.append(f"  Goal: {oracle.goal}")
            lines.append("  Preconditions:")
            for item in oracle.preconditions:
                lines.append(f"    - {item}")
            lines.append("  Key Evidence:")
            for item in oracle.key_evidence:
                lines.append(f"    - {item}")
            lines.append("  Acceptance Criteria:")
            for item in oracle.acceptance_criteria:
                lines.append(f"    - {item}")
    lines.append("")
    return "\n".join(lines)
