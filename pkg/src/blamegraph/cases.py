"""Load and normalize multi-agent failure logs into the canonical case model.

Every case on disk is one JSON document. Benchmark-specific field spellings
are absorbed by a per-subset :class:`CaseAdapter`; everything downstream of
:func:`load_case` sees only the canonical model defined here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import CaseFormatError, CaseIntegrityError, CaseSchemaError

CASE_SCHEMA_VERSION = 1

SUBSETS = ("hand_crafted", "algorithm_generated")


@dataclass(frozen=True)
class TrajectoryStep:
    """One timestep of the execution log: a single agent's turn."""

    index: int
    agent_name: str
    role: str
    content: str


@dataclass(frozen=True)
class RootCauseAnnotation:
    """Ground-truth root cause: the responsible agent and step."""

    mistake_agent: str
    mistake_step: int
    mistake_reason: str


@dataclass(frozen=True)
class FailureCase:
    """A failed trajectory plus its task context and optional annotation."""

    case_id: str
    question: str
    ground_truth_answer: str | None
    steps: tuple[TrajectoryStep, ...]
    annotation: RootCauseAnnotation | None
    subset: str

    @property
    def n_steps(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class CaseAdapter:
    """Field-name mapping from one benchmark's on-disk schema to the canonical model.

    Each ``*_keys`` tuple is tried in order; the first key present wins.
    ``step_index_key`` selects an explicit per-step index field; when None the
    index is positional. ``index_base`` declares the numbering base used by the
    source for explicit step indices and annotation steps (normalized to
    0-based internally).
    """

    case_id_keys: tuple[str, ...] = ("case_id", "question_ID", "question_id", "id")
    question_keys: tuple[str, ...] = ("question", "Question", "task", "instruction")
    ground_truth_keys: tuple[str, ...] = ("ground_truth", "ground_truth_answer", "answer")
    history_keys: tuple[str, ...] = ("history", "steps", "trajectory", "conversation")
    agent_keys: tuple[str, ...] = ("name", "agent_name", "agent")
    role_keys: tuple[str, ...] = ("role",)
    content_keys: tuple[str, ...] = ("content", "text", "message")
    mistake_agent_keys: tuple[str, ...] = ("mistake_agent",)
    mistake_step_keys: tuple[str, ...] = ("mistake_step",)
    mistake_reason_keys: tuple[str, ...] = ("mistake_reason",)
    success_flag_keys: tuple[str, ...] = ("is_correct", "is_success")
    step_index_key: str | None = None
    index_base: int = 0


# Both benchmark subsets have shipped with the same field spellings so far;
# keeping one adapter per subset isolates the schemas if they ever diverge.
DEFAULT_ADAPTERS: dict[str, CaseAdapter] = {
    "hand_crafted": CaseAdapter(),
    "algorithm_generated": CaseAdapter(),
}


def _first_key(record: dict, keys: tuple[str, ...]):
    for key in keys:
        if key in record and record[key] is not None:
            return record[key]
    return None


def load_case(path: str | Path, subset: str, adapter: CaseAdapter | None = None) -> FailureCase:
    """Load one benchmark case file and normalize it to the canonical model."""
    if subset not in SUBSETS:
        raise CaseSchemaError(f"unknown subset {subset!r}, expected one of {SUBSETS}", field="subset")
    adapter = adapter or DEFAULT_ADAPTERS[subset]
    path = Path(path)
    raw_text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(
            f"{path}: malformed JSON at byte offset {exc.pos}: {exc.msg}", offset=exc.pos
        ) from exc
    if not isinstance(raw, dict):
        raise CaseSchemaError(f"{path}: top-level value must be an object")

    # every loadable case is a failure log; a success flag means wrong dataset
    success = _first_key(raw, adapter.success_flag_keys)
    if success is True:
        raise CaseIntegrityError(f"{path}: log records a successful run, not a failure")

    question = _first_key(raw, adapter.question_keys)
    if not isinstance(question, str) or not question.strip():
        raise CaseSchemaError(f"{path}: missing required field 'question'", field="question")

    history = _first_key(raw, adapter.history_keys)
    if not isinstance(history, list) or not history:
        raise CaseSchemaError(f"{path}: missing or empty step history", field="history")

    ground_truth = _first_key(raw, adapter.ground_truth_keys)
    if ground_truth is not None:
        ground_truth = str(ground_truth)

    case_id = _first_key(raw, adapter.case_id_keys)
    case_id = str(case_id) if case_id is not None else path.stem

    steps = _normalize_steps(history, adapter, path)
    annotation = _extract_annotation(raw, adapter, path)

    case = FailureCase(
        case_id=case_id,
        question=question,
        ground_truth_answer=ground_truth,
        steps=tuple(steps),
        annotation=annotation,
        subset=subset,
    )
    validate_case(case)
    return case


def _normalize_steps(history: list, adapter: CaseAdapter, path: Path) -> list[TrajectoryStep]:
    steps = []
    for position, record in enumerate(history):
        if not isinstance(record, dict):
            raise CaseSchemaError(f"{path}: step {position} is not an object", field="history")
        agent = _first_key(record, adapter.agent_keys)
        role = _first_key(record, adapter.role_keys)
        if agent is None:
            agent = role  # some logs only carry a speaker role
        if not isinstance(agent, str) or not agent.strip():
            raise CaseSchemaError(
                f"{path}: step {position} has no agent name", field="agent_name"
            )
        content = _first_key(record, adapter.content_keys)
        if content is None:
            raise CaseSchemaError(f"{path}: step {position} has no content", field="content")
        if adapter.step_index_key is not None:
            try:
                index = int(record[adapter.step_index_key]) - adapter.index_base
            except (KeyError, TypeError, ValueError) as exc:
                raise CaseSchemaError(
                    f"{path}: step {position} has no usable index field "
                    f"{adapter.step_index_key!r}",
                    field=adapter.step_index_key,
                ) from exc
        else:
            index = position
        steps.append(
            TrajectoryStep(
                index=index,
                agent_name=agent.strip(),
                role=str(role) if role is not None else "",
                content=str(content),
            )
        )
    return steps


def _extract_annotation(
    raw: dict, adapter: CaseAdapter, path: Path
) -> RootCauseAnnotation | None:
    agent = _first_key(raw, adapter.mistake_agent_keys)
    step = _first_key(raw, adapter.mistake_step_keys)
    reason = _first_key(raw, adapter.mistake_reason_keys)
    if agent is None and step is None and reason is None:
        return None
    if agent is None:
        raise CaseSchemaError(f"{path}: annotation missing 'mistake_agent'", field="mistake_agent")
    if step is None:
        raise CaseSchemaError(f"{path}: annotation missing 'mistake_step'", field="mistake_step")
    try:
        step_id = int(str(step).strip()) - adapter.index_base
    except ValueError as exc:
        raise CaseSchemaError(
            f"{path}: 'mistake_step' is not an integer: {step!r}", field="mistake_step"
        ) from exc
    return RootCauseAnnotation(
        mistake_agent=str(agent).strip(),
        mistake_step=step_id,
        mistake_reason=str(reason) if reason is not None else "",
    )


def validate_case(case: FailureCase) -> None:
    """Check all case invariants; raises CaseIntegrityError on violation."""
    indices = [s.index for s in case.steps]
    if indices != list(range(len(case.steps))):
        raise CaseIntegrityError(
            f"case {case.case_id}: step indices must form the contiguous range "
            f"0..{len(case.steps) - 1}, got {indices}"
        )
    if case.annotation is not None:
        ann = case.annotation
        if not 0 <= ann.mistake_step < case.n_steps:
            raise CaseIntegrityError(
                f"case {case.case_id}: mistake_step {ann.mistake_step} outside "
                f"[0, {case.n_steps - 1}]"
            )
        if ann.mistake_agent not in {s.agent_name for s in case.steps}:
            raise CaseIntegrityError(
                f"case {case.case_id}: mistake_agent {ann.mistake_agent!r} never "
                f"appears in the trajectory"
            )


def agents_of(case: FailureCase) -> list[str]:
    """Unique agent names in first-appearance order."""
    seen: list[str] = []
    for step in case.steps:
        if step.agent_name not in seen:
            seen.append(step.agent_name)
    return seen


def serialize_history(case: FailureCase, step_range: tuple[int, int] | None = None) -> str:
    """Deterministic JSON rendering of the selected steps.

    Produces an array of ``{index, agent, content}`` records in index order
    with stable key order and whitespace: identical inputs yield byte-identical
    output.
    """
    if step_range is None:
        selected = case.steps
    else:
        lo, hi = step_range
        if lo > hi:
            raise ValueError(f"empty step range [{lo}, {hi}]")
        if lo < 0 or hi >= case.n_steps:
            raise ValueError(
                f"step range [{lo}, {hi}] outside [0, {case.n_steps - 1}]"
            )
        selected = case.steps[lo : hi + 1]
    records = [
        {"index": s.index, "agent": s.agent_name, "content": s.content} for s in selected
    ]
    return json.dumps(records, ensure_ascii=False, indent=2)


def case_to_dict(case: FailureCase) -> dict:
    """Canonical engine-defined case JSON (schema-versioned)."""
    return {
        "schema_version": CASE_SCHEMA_VERSION,
        "case_id": case.case_id,
        "subset": case.subset,
        "question": case.question,
        "ground_truth_answer": case.ground_truth_answer,
        "steps": [
            {
                "index": s.index,
                "agent_name": s.agent_name,
                "role": s.role,
                "content": s.content,
            }
            for s in case.steps
        ],
        "annotation": None
        if case.annotation is None
        else {
            "mistake_agent": case.annotation.mistake_agent,
            "mistake_step": case.annotation.mistake_step,
            "mistake_reason": case.annotation.mistake_reason,
        },
    }


def case_from_dict(data: dict) -> FailureCase:
    version = data.get("schema_version")
    if version != CASE_SCHEMA_VERSION:
        raise CaseSchemaError(
            f"unsupported case schema_version {version!r}", field="schema_version"
        )
    ann = data.get("annotation")
    case = FailureCase(
        case_id=data["case_id"],
        question=data["question"],
        ground_truth_answer=data.get("ground_truth_answer"),
        steps=tuple(
            TrajectoryStep(
                index=s["index"],
                agent_name=s["agent_name"],
                role=s.get("role", ""),
                content=s["content"],
            )
            for s in data["steps"]
        ),
        annotation=None
        if ann is None
        else RootCauseAnnotation(
            mistake_agent=ann["mistake_agent"],
            mistake_step=ann["mistake_step"],
            mistake_reason=ann.get("mistake_reason", ""),
        ),
        subset=data["subset"],
    )
    validate_case(case)
    return case


def load_dataset(cases_dir: str | Path, subset: str) -> list[FailureCase]:
    """Load every ``*.json`` case in a directory, sorted by filename."""
    cases_dir = Path(cases_dir)
    paths = sorted(cases_dir.glob("*.json"))
    if not paths:
        raise CaseSchemaError(f"no case files found under {cases_dir}")
    return [load_case(p, subset) for p in paths]
