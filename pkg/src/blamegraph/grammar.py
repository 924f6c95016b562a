"""Strict plain-text grammars for graph-construction model responses.

Each parser either returns fully validated structures or raises
:class:`ParseError` naming the violated rule; nothing is silently truncated.
Edge grammars are the exception: edge-level problems land in a diagnostics
report instead of aborting, because edges are advisory evidence while nodes
are structural.

Every parser has a matching renderer emitting exactly the format it accepts,
so ``parse(render(x)) == x``. Text before the first block marker is ignored
(models preface output despite instructions); inside blocks the grammar is
strict.
"""

from __future__ import annotations

import re

from .cases import FailureCase
from .errors import ParseError
from .graph import (
    AGENT_EDGE_TYPES,
    STEP_DATA_TYPES,
    SUBTASK_EDGE_TYPES,
    AgentBehavior,
    AgentEdge,
    AgentNode,
    CounterfactualPattern,
    StepEdge,
    StepEndpoint,
    SubtaskEdge,
    SubtaskNode,
)

BEHAVIOR_FIELDS = ("Action", "Observation", "Thought", "Result")

_DECOMP_START = re.compile(r"^\s*Subtask Id\s*:\s*(.*)$")
_DECOMP_FIELD = re.compile(r"^\s*(Subtask Name|Step Range|Description)\s*:\s*(.*)$")
_RANGE = re.compile(r"\[\s*(\d+)\s*,\s*(\d+)\s*\]")

_BEHAVIOR_START = re.compile(r"^\s*The Subtask Name\s*:\s*(.*)$")
_BEHAVIOR_AGENTS_SEP = re.compile(r"^\s*Agents\s*:\s*$")
_BEHAVIOR_AGENT = re.compile(r"^\s*-\s*Agent\s*:\s*(.*)$")
_BEHAVIOR_FIELD = re.compile(r"^\s*--\s*(Action|Observation|Thought|Result)\s*:\s*(.*)$")

_EDGE_CONTEXT = re.compile(r"^\s*Subtask\s*:\s*(\S+)\s*$")
_EDGE_FROM = re.compile(r"^\s*From\s*:\s*(.*)$")
_EDGE_TO = re.compile(r"^\s*To\s*:\s*(.*)$")
_EDGE_TYPE = re.compile(r"^\s*Type\s*:\s*(.*)$")
_EDGE_PATTERNS = re.compile(r"^\s*Counterfactual_Patterns\s*:\s*$")
_EDGE_BIAS = re.compile(r"^\s*-\s*Bias\s*:\s*(.*)$")
_EDGE_ANOMALY = re.compile(r"^\s*Anomaly\s*:\s*(.*)$")
_SUBTASK_ID = re.compile(r"S\d+")

_STEP_UP = re.compile(r"^\s*-\s*Upstream\s*:\s*(.*)$")
_STEP_DOWN = re.compile(r"^\s*-\s*Downstream\s*:\s*(.*)$")
_STEP_FIELD = re.compile(r"^\s*(output_data|input_data|data_type|step_id|agent_id)\s*:\s*(.*)$")


def strip_quotes(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _numbered_lines(text: str) -> list[tuple[int, str]]:
    return list(enumerate(text.splitlines(), start=1))


# ---------------------------------------------------------------------------
# Subtask decomposition
# ---------------------------------------------------------------------------

def parse_decomposition(text: str) -> list[SubtaskNode]:
    """Parse subtask blocks: id, name, inclusive step range, description.

    Ids must be S1..SK in order. Partition constraints (coverage, contiguity,
    non-overlap) are checked separately so violations can drive repair
    prompting instead of a hard parse failure.
    """
    lines = _numbered_lines(text)
    starts = [i for i, (_, line) in enumerate(lines) if _DECOMP_START.match(line)]
    if not starts:
        raise ParseError("no 'Subtask Id:' block found", rule="decomp.no_blocks")
    nodes: list[SubtaskNode] = []
    bounds = starts + [len(lines)]
    for position, start in enumerate(starts, start=1):
        lineno, header = lines[start]
        id_value = _DECOMP_START.match(header).group(1).strip()
        if not re.fullmatch(r"S\d+", id_value):
            raise ParseError(
                f"subtask id {id_value!r} must look like S1, S2, ...",
                rule="decomp.bad_id",
                line=lineno,
            )
        if id_value != f"S{position}":
            raise ParseError(
                f"subtask ids must be sequential: expected S{position}, got {id_value}",
                rule="decomp.id_sequence",
                line=lineno,
            )
        fields: dict[str, str] = {}
        current: str | None = None
        for i in range(start + 1, bounds[position]):
            field_lineno, line = lines[i]
            match = _DECOMP_FIELD.match(line)
            if match:
                label = match.group(1)
                if label in fields:
                    raise ParseError(
                        f"block {id_value}: duplicate field {label!r}",
                        rule="decomp.duplicate_field",
                        line=field_lineno,
                    )
                fields[label] = match.group(2).strip()
                current = label
            elif line.strip():
                if current is None:
                    raise ParseError(
                        f"block {id_value}: unexpected text before any field: {line.strip()!r}",
                        rule="decomp.stray_text",
                        line=field_lineno,
                    )
                fields[current] = (fields[current] + "\n" + line.strip()).strip()
        for label in ("Subtask Name", "Step Range", "Description"):
            if label not in fields:
                raise ParseError(
                    f"block {id_value}: missing field {label!r}",
                    rule="decomp.missing_field",
                    line=lineno,
                )
        range_match = _RANGE.search(fields["Step Range"])
        if not range_match:
            raise ParseError(
                f"block {id_value}: step range must look like [a, b], got "
                f"{fields['Step Range']!r}",
                rule="decomp.bad_range",
                line=lineno,
            )
        nodes.append(
            SubtaskNode(
                id=id_value,
                name=fields["Subtask Name"],
                step_range=(int(range_match.group(1)), int(range_match.group(2))),
                description=fields["Description"],
            )
        )
    return nodes


def render_decomposition(subtasks: list[SubtaskNode] | tuple[SubtaskNode, ...]) -> str:
    blocks = []
    for node in subtasks:
        lo, hi = node.step_range
        blocks.append(
            f"Subtask Id: {node.id}\n"
            f"Subtask Name: {node.name}\n"
            f"Step Range: [{lo}, {hi}]\n"
            f"Description: {node.description}"
        )
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# Agent behavior summaries
# ---------------------------------------------------------------------------

def parse_behavior_blocks(text: str, subtasks: list[SubtaskNode]) -> list[AgentNode]:
    """Parse per-subtask agent blocks with the four behavior fields.

    Every subtask in the plan must appear exactly once with at least one
    agent; each agent block must carry all four labeled fields (an empty
    value is normalized to "none", a missing label is an error).
    """
    known = {s.name: s for s in subtasks}
    lines = _numbered_lines(text)
    starts = [i for i, (_, line) in enumerate(lines) if _BEHAVIOR_START.match(line)]
    if not starts:
        raise ParseError("no 'The Subtask Name:' block found", rule="behavior.no_blocks")
    bounds = starts + [len(lines)]
    by_subtask: dict[str, list[AgentNode]] = {}
    for position, start in enumerate(starts):
        lineno, header = lines[start]
        name = _BEHAVIOR_START.match(header).group(1).strip()
        if name not in known:
            raise ParseError(
                f"subtask name {name!r} does not match any planned subtask",
                rule="behavior.unknown_subtask",
                line=lineno,
            )
        if name in by_subtask:
            raise ParseError(
                f"subtask {name!r} appears in more than one block",
                rule="behavior.duplicate_subtask",
                line=lineno,
            )
        subtask_id = known[name].id
        agents: list[AgentNode] = []
        agent_name: str | None = None
        agent_line = lineno
        fields: dict[str, str] = {}
        current: str | None = None

        def flush():
            if agent_name is None:
                return
            missing = [f for f in BEHAVIOR_FIELDS if f not in fields]
            if missing:
                raise ParseError(
                    f"agent block {agent_name!r} in subtask {name!r} is missing "
                    f"field(s) {missing}",
                    rule="behavior.missing_field",
                    line=agent_line,
                )
            agents.append(
                AgentNode(
                    agent_name=agent_name,
                    subtask_id=subtask_id,
                    behavior=AgentBehavior(
                        observation=fields["Observation"] or "none",
                        thought=fields["Thought"] or "none",
                        action=fields["Action"] or "none",
                        result=fields["Result"] or "none",
                    ),
                )
            )

        for i in range(start + 1, bounds[position + 1]):
            field_lineno, line = lines[i]
            if _BEHAVIOR_AGENTS_SEP.match(line):
                continue
            agent_match = _BEHAVIOR_AGENT.match(line)
            if agent_match:
                flush()
                agent_name = agent_match.group(1).strip()
                agent_line = field_lineno
                fields = {}
                current = None
                if not agent_name:
                    raise ParseError(
                        f"empty agent name in subtask {name!r}",
                        rule="behavior.empty_agent",
                        line=field_lineno,
                    )
                continue
            field_match = _BEHAVIOR_FIELD.match(line)
            if field_match:
                if agent_name is None:
                    raise ParseError(
                        f"field line outside any agent block in subtask {name!r}",
                        rule="behavior.stray_text",
                        line=field_lineno,
                    )
                label = field_match.group(1)
                if label in fields:
                    raise ParseError(
                        f"agent {agent_name!r}: duplicate field {label!r}",
                        rule="behavior.duplicate_field",
                        line=field_lineno,
                    )
                fields[label] = field_match.group(2).strip()
                current = label
                continue
            if line.strip():
                if current is None:
                    raise ParseError(
                        f"unexpected text in subtask {name!r}: {line.strip()!r}",
                        rule="behavior.stray_text",
                        line=field_lineno,
                    )
                fields[current] = (fields[current] + "\n" + line.strip()).strip()
        flush()
        if not agents:
            raise ParseError(
                f"subtask {name!r} has zero agent blocks",
                rule="behavior.no_agents",
                line=lineno,
            )
        by_subtask[name] = agents

    missing = [s.name for s in subtasks if s.name not in by_subtask]
    if missing:
        raise ParseError(
            f"no agent block for subtask(s) {missing}", rule="behavior.missing_subtask"
        )
    ordered: list[AgentNode] = []
    for subtask in subtasks:
        ordered.extend(by_subtask[subtask.name])
    return ordered


def render_behavior_blocks(
    subtasks: list[SubtaskNode] | tuple[SubtaskNode, ...],
    agents: list[AgentNode] | tuple[AgentNode, ...],
) -> str:
    blocks = []
    for subtask in subtasks:
        lines = [f"The Subtask Name: {subtask.name}", "Agents:"]
        for agent in agents:
            if agent.subtask_id != subtask.id:
                continue
            lines.append(f"- Agent: {agent.agent_name}")
            lines.append(f"-- Action: {agent.behavior.action}")
            lines.append(f"-- Observation: {agent.behavior.observation}")
            lines.append(f"-- Thought: {agent.behavior.thought}")
            lines.append(f"-- Result: {agent.behavior.result}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# Subtask and agent edges
# ---------------------------------------------------------------------------

def _finish_patterns(raw: list[dict], block: dict) -> tuple[CounterfactualPattern, ...] | None:
    patterns = []
    for item in raw:
        bias = (item["bias"] or "").strip()
        anomaly = (item["anomaly"] or "").strip() if item["anomaly"] is not None else ""
        if not bias or not anomaly:
            block["reject"] = (
                "edges.pattern_incomplete",
                "every pattern needs a non-empty Bias line and a matching Anomaly line",
            )
            return None
        patterns.append(CounterfactualPattern(bias=bias, anomaly=anomaly))
    return tuple(patterns)


def parse_semantic_edges(
    text: str,
    subtasks: list[SubtaskNode] | tuple[SubtaskNode, ...],
    agents: list[AgentNode] | tuple[AgentNode, ...],
) -> tuple[list[SubtaskEdge], list[AgentEdge], list[dict]]:
    """Parse From/To/Type edge blocks with optional counterfactual patterns.

    Returns accepted subtask edges, accepted agent edges, and a diagnostics
    list of rejected blocks and notes, each naming the violated rule. An
    optional ``Subtask: Sk`` context line scopes the agent edges that follow;
    without one, an agent pair is resolved to the unique subtask containing
    both endpoints.
    """
    subtask_ids = [s.id for s in subtasks]
    index_of = {sid: i for i, sid in enumerate(subtask_ids)}
    membership: dict[str, set[str]] = {}
    for agent in agents:
        membership.setdefault(agent.agent_name, set()).add(agent.subtask_id)

    diagnostics: list[dict] = []
    subtask_edges: list[SubtaskEdge] = []
    agent_edges: list[AgentEdge] = []

    blocks: list[dict] = []
    context: str | None = None
    current: dict | None = None
    pattern_items: list[dict] = []
    in_patterns = False

    def close_block():
        nonlocal current, pattern_items, in_patterns
        if current is not None:
            current["patterns_raw"] = pattern_items
            blocks.append(current)
        current = None
        pattern_items = []
        in_patterns = False

    for lineno, line in _numbered_lines(text):
        ctx_match = _EDGE_CONTEXT.match(line)
        if ctx_match:
            close_block()
            ctx = ctx_match.group(1).strip()
            if ctx not in index_of:
                diagnostics.append(
                    {
                        "rule": "edges.unknown_context",
                        "detail": f"context names unknown subtask {ctx!r}",
                        "line": lineno,
                    }
                )
                context = None
            else:
                context = ctx
            continue
        from_match = _EDGE_FROM.match(line)
        if from_match:
            close_block()
            current = {"from": from_match.group(1).strip(), "line": lineno, "context": context}
            continue
        if current is None:
            if line.strip():
                diagnostics.append(
                    {
                        "rule": "edges.stray_text",
                        "detail": f"text outside any edge block: {line.strip()!r}",
                        "line": lineno,
                    }
                )
            continue
        to_match = _EDGE_TO.match(line)
        if to_match:
            current["to"] = to_match.group(1).strip()
            continue
        type_match = _EDGE_TYPE.match(line)
        if type_match:
            current["type"] = type_match.group(1).strip()
            continue
        if _EDGE_PATTERNS.match(line):
            in_patterns = True
            continue
        bias_match = _EDGE_BIAS.match(line)
        if bias_match:
            in_patterns = True
            pattern_items.append({"bias": bias_match.group(1), "anomaly": None})
            continue
        anomaly_match = _EDGE_ANOMALY.match(line)
        if anomaly_match and pattern_items:
            pattern_items[-1]["anomaly"] = anomaly_match.group(1)
            continue
        if line.strip():
            if in_patterns and pattern_items:
                # continuation of the last bias/anomaly text
                item = pattern_items[-1]
                if item["anomaly"] is not None:
                    item["anomaly"] += " " + line.strip()
                else:
                    item["bias"] += " " + line.strip()
            else:
                diagnostics.append(
                    {
                        "rule": "edges.stray_text",
                        "detail": f"unrecognized line in edge block: {line.strip()!r}",
                        "line": lineno,
                    }
                )
    close_block()

    for block in blocks:
        line = block["line"]

        def reject(rule: str, detail: str):
            diagnostics.append({"rule": rule, "detail": detail, "line": line})

        missing = [k for k in ("to", "type") if k not in block]
        if missing:
            reject("edges.missing_field", f"edge block lacks {missing}")
            continue
        patterns = _finish_patterns(block["patterns_raw"], block)
        if patterns is None:
            reject(*block["reject"])
            continue
        from_val, to_val, type_val = block["from"], block["to"], block["type"]
        from_is_subtask = bool(re.fullmatch(_SUBTASK_ID, from_val))
        to_is_subtask = bool(re.fullmatch(_SUBTASK_ID, to_val))
        if from_is_subtask != to_is_subtask:
            reject(
                "edges.mixed_endpoints",
                f"edge {from_val!r} -> {to_val!r} mixes a subtask id and an agent name",
            )
            continue
        if from_is_subtask:
            if from_val not in index_of or to_val not in index_of:
                reject("edges.unknown_subtask", f"edge {from_val}->{to_val} has an unknown subtask id")
                continue
            if index_of[to_val] != index_of[from_val] + 1:
                reject(
                    "edges.not_consecutive",
                    f"subtask edge {from_val}->{to_val} must link consecutive subtasks",
                )
                continue
            if type_val not in SUBTASK_EDGE_TYPES:
                reject("edges.bad_type", f"unknown subtask edge type {type_val!r}")
                continue
            subtask_edges.append(
                SubtaskEdge(from_id=from_val, to_id=to_val, edge_type=type_val, patterns=patterns)
            )
        else:
            if from_val == to_val:
                reject("edges.self_loop", f"agent edge {from_val!r} -> itself")
                continue
            if type_val not in AGENT_EDGE_TYPES:
                reject("edges.bad_type", f"unknown agent edge type {type_val!r}")
                continue
            shared = membership.get(from_val, set()) & membership.get(to_val, set())
            ctx = block["context"]
            if ctx is not None:
                if ctx not in shared:
                    reject(
                        "edges.dangling_endpoint",
                        f"agents {from_val!r}/{to_val!r} are not both nodes of subtask {ctx}",
                    )
                    continue
                resolved = ctx
            elif not shared:
                reject(
                    "edges.dangling_endpoint",
                    f"agents {from_val!r} and {to_val!r} share no subtask "
                    f"(cross-subtask agent edges are not allowed)",
                )
                continue
            elif len(shared) > 1:
                reject(
                    "edges.ambiguous_subtask",
                    f"agents {from_val!r}/{to_val!r} co-occur in {sorted(shared)}; "
                    f"a 'Subtask:' context line is required",
                )
                continue
            else:
                resolved = next(iter(shared))
            agent_edges.append(
                AgentEdge(
                    subtask_id=resolved,
                    from_agent=from_val,
                    to_agent=to_val,
                    edge_type=type_val,
                    patterns=patterns,
                )
            )

    for note in _agent_cycle_notes(agent_edges):
        diagnostics.append(note)
    return subtask_edges, agent_edges, diagnostics


def _agent_cycle_notes(agent_edges: list[AgentEdge]) -> list[dict]:
    """Cycles in the per-subtask agent edge sets are recorded, not rejected."""
    notes = []
    by_subtask: dict[str, list[AgentEdge]] = {}
    for edge in agent_edges:
        by_subtask.setdefault(edge.subtask_id, []).append(edge)
    for subtask_id, edges in sorted(by_subtask.items()):
        adjacency: dict[str, list[str]] = {}
        for edge in edges:
            adjacency.setdefault(edge.from_agent, []).append(edge.to_agent)
        state: dict[str, int] = {}

        def cyclic(node: str) -> bool:
            state[node] = 1
            for nxt in adjacency.get(node, []):
                mark = state.get(nxt, 0)
                if mark == 1 or (mark == 0 and cyclic(nxt)):
                    return True
            state[node] = 2
            return False

        if any(state.get(node, 0) == 0 and cyclic(node) for node in list(adjacency)):
            notes.append(
                {
                    "rule": "edges.cycle_note",
                    "detail": f"agent edges of subtask {subtask_id} contain a cycle",
                    "line": None,
                }
            )
    return notes


def render_semantic_edges(
    subtask_edges: list[SubtaskEdge] | tuple[SubtaskEdge, ...],
    agent_edges: list[AgentEdge] | tuple[AgentEdge, ...],
) -> str:
    blocks = []
    for edge in subtask_edges:
        lines = [f"From: {edge.from_id}", f"To: {edge.to_id}", f"Type: {edge.edge_type}"]
        if edge.patterns:
            lines.append("Counterfactual_Patterns:")
            for pattern in edge.patterns:
                lines.append(f"- Bias: {pattern.bias}")
                lines.append(f"  Anomaly: {pattern.anomaly}")
        blocks.append("\n".join(lines))
    current_context = None
    for edge in agent_edges:
        lines = []
        if edge.subtask_id != current_context:
            lines.append(f"Subtask: {edge.subtask_id}")
            current_context = edge.subtask_id
        lines.extend(
            [f"From: {edge.from_agent}", f"To: {edge.to_agent}", f"Type: {edge.edge_type}"]
        )
        if edge.patterns:
            lines.append("Counterfactual_Patterns:")
            for pattern in edge.patterns:
                lines.append(f"- Bias: {pattern.bias}")
                lines.append(f"  Anomaly: {pattern.anomaly}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# Step-level data-flow edges
# ---------------------------------------------------------------------------

def parse_step_edges(text: str, case: FailureCase) -> tuple[list[StepEdge], list[dict]]:
    """Parse Upstream/Downstream endpoint pairs describing data handoffs.

    Zero edges is a valid outcome. Invalid pairs are rejected into the
    diagnostics list; a mismatch between the recorded agent and the agent who
    actually acted at that step is noted but the edge is kept.
    """
    diagnostics: list[dict] = []
    endpoints: list[dict] = []
    current: dict | None = None

    for lineno, line in _numbered_lines(text):
        up_match = _STEP_UP.match(line)
        down_match = _STEP_DOWN.match(line)
        if up_match or down_match:
            current = {
                "kind": "up" if up_match else "down",
                "header": strip_quotes((up_match or down_match).group(1)),
                "line": lineno,
                "fields": {},
            }
            endpoints.append(current)
            continue
        field_match = _STEP_FIELD.match(line)
        if field_match and current is not None:
            current["fields"][field_match.group(1)] = strip_quotes(field_match.group(2))
            continue
        if line.strip() and current is None:
            diagnostics.append(
                {
                    "rule": "stepedge.stray_text",
                    "detail": f"text outside any endpoint block: {line.strip()!r}",
                    "line": lineno,
                }
            )

    edges: list[StepEdge] = []
    i = 0
    while i < len(endpoints):
        up = endpoints[i]
        if up["kind"] != "up":
            diagnostics.append(
                {
                    "rule": "stepedge.unpaired",
                    "detail": "Downstream endpoint without a preceding Upstream",
                    "line": up["line"],
                }
            )
            i += 1
            continue
        if i + 1 >= len(endpoints) or endpoints[i + 1]["kind"] != "down":
            diagnostics.append(
                {
                    "rule": "stepedge.unpaired",
                    "detail": "Upstream endpoint without a following Downstream",
                    "line": up["line"],
                }
            )
            i += 1
            continue
        down = endpoints[i + 1]
        i += 2
        pair_ok = True
        parsed: dict[str, StepEndpoint] = {}
        for endpoint, data_key in ((up, "output_data"), (down, "input_data")):
            fields = endpoint["fields"]
            step_id = _int_or_none(endpoint["header"])
            field_id = _int_or_none(fields.get("step_id", ""))
            if step_id is None:
                step_id = field_id
            elif field_id is not None and field_id != step_id:
                diagnostics.append(
                    {
                        "rule": "stepedge.id_mismatch",
                        "detail": f"header step {step_id} != step_id field {field_id}",
                        "line": endpoint["line"],
                    }
                )
                pair_ok = False
                break
            if step_id is None:
                diagnostics.append(
                    {
                        "rule": "stepedge.bad_int",
                        "detail": f"endpoint step id is not an integer: {endpoint['header']!r}",
                        "line": endpoint["line"],
                    }
                )
                pair_ok = False
                break
            if not 0 <= step_id < case.n_steps:
                diagnostics.append(
                    {
                        "rule": "stepedge.out_of_range",
                        "detail": f"step id {step_id} outside 0..{case.n_steps - 1}",
                        "line": endpoint["line"],
                    }
                )
                pair_ok = False
                break
            missing = [k for k in (data_key, "data_type") if not fields.get(k)]
            if missing:
                diagnostics.append(
                    {
                        "rule": "stepedge.missing_field",
                        "detail": f"endpoint at step {step_id} lacks {missing}",
                        "line": endpoint["line"],
                    }
                )
                pair_ok = False
                break
            data_type = fields["data_type"]
            if data_type not in STEP_DATA_TYPES:
                diagnostics.append(
                    {
                        "rule": "stepedge.bad_data_type",
                        "detail": f"unknown data_type {data_type!r}",
                        "line": endpoint["line"],
                    }
                )
                pair_ok = False
                break
            agent_id = fields.get("agent_id", "").strip() or case.steps[step_id].agent_name
            if agent_id != case.steps[step_id].agent_name:
                diagnostics.append(
                    {
                        "rule": "stepedge.agent_note",
                        "detail": f"step {step_id} was acted by "
                        f"{case.steps[step_id].agent_name!r}, response says {agent_id!r}",
                        "line": endpoint["line"],
                    }
                )
            parsed[endpoint["kind"]] = StepEndpoint(
                step_id=step_id, agent_id=agent_id, data=fields[data_key], data_type=data_type
            )
        if not pair_ok:
            continue
        if parsed["up"].step_id >= parsed["down"].step_id:
            diagnostics.append(
                {
                    "rule": "stepedge.ordering",
                    "detail": f"upstream step {parsed['up'].step_id} must precede "
                    f"downstream step {parsed['down'].step_id}",
                    "line": up["line"],
                }
            )
            continue
        edges.append(StepEdge(upstream=parsed["up"], downstream=parsed["down"]))
    return edges, diagnostics


def _int_or_none(value: str) -> int | None:
    try:
        return int(value.strip())
    except (ValueError, AttributeError):
        return None


def render_step_edges(edges: list[StepEdge] | tuple[StepEdge, ...]) -> str:
    blocks = []
    for edge in edges:
        blocks.append(
            f"- Upstream: {edge.upstream.step_id}\n"
            f"  output_data: \"{edge.upstream.data}\"\n"
            f"  data_type: \"{edge.upstream.data_type}\"\n"
            f"  step_id: {edge.upstream.step_id}\n"
            f"  agent_id: {edge.upstream.agent_id}\n"
            f"- Downstream: {edge.downstream.step_id}\n"
            f"  input_data: \"{edge.downstream.data}\"\n"
            f"  data_type: \"{edge.downstream.data_type}\"\n"
            f"  step_id: {edge.downstream.step_id}\n"
            f"  agent_id: {edge.downstream.agent_id}"
        )
    return "\n".join(blocks)
