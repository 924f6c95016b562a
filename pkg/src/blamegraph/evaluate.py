"""Scoring, run orchestration, cost accounting, and ablation configurations.

Accuracy is strict top-1 at two granularities: the responsible agent and the
exact root-cause step, each averaged over independent runs. A case whose
pipeline failed scores as incorrect rather than being excluded, so reported
accuracy is conservative.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

from .cases import FailureCase
from .errors import ScoringError
from .gateway import LlmGateway
from .kb import KnowledgeBase
from .pipeline import (
    ALL_MODULES,
    MODULE_BACKTRACK,
    MODULE_GRAPH,
    MODULE_SCREENING,
    CaseOutcome,
    CaseRunner,
    PipelineConfig,
)

log = logging.getLogger(__name__)

ABLATION_LABELS = ("graph_only", "graph_backtrack", "graph_screening", "full")


@dataclass(frozen=True)
class PredictionRecord:
    """One prediction line as written to the predictions JSONL."""

    case_id: str
    run_index: int
    agent_name: str | None
    step_id: int | None
    reason: str
    config_id: str
    token_cost: int
    error: str | None = None

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "case_id": self.case_id,
                "agent_name": self.agent_name,
                "step_id": self.step_id,
                "reason": self.reason,
                "run_index": self.run_index,
                "config_id": self.config_id,
                "token_cost": self.token_cost,
                "error": self.error,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json_line(cls, line: str) -> "PredictionRecord":
        data = json.loads(line)
        return cls(
            case_id=data["case_id"],
            run_index=data["run_index"],
            agent_name=data["agent_name"],
            step_id=data["step_id"],
            reason=data.get("reason", ""),
            config_id=data.get("config_id", ""),
            token_cost=data.get("token_cost", 0),
            error=data.get("error"),
        )


@dataclass(frozen=True)
class EvalResult:
    agent_accuracy: float
    step_accuracy: float
    n_cases: int
    n_runs: int
    per_case: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "agent_accuracy": self.agent_accuracy,
            "step_accuracy": self.step_accuracy,
            "n_cases": self.n_cases,
            "n_runs": self.n_runs,
            "per_case": list(self.per_case),
        }


@dataclass
class CostReport:
    """Token usage: per (case, run) totals with tag breakdowns plus aggregates."""

    records: list[dict] = field(default_factory=list)

    @property
    def total_tokens(self) -> int:
        return sum(r["total"] for r in self.records)

    @property
    def mean_tokens_per_case(self) -> float:
        if not self.records:
            return 0.0
        return self.total_tokens / len(self.records)

    def tags(self) -> list[str]:
        seen: set[str] = set()
        for record in self.records:
            seen.update(record["by_tag"])
        return sorted(seen)

    def by_tag_totals(self) -> dict[str, int]:
        totals: dict[str, int] = {}
        for record in self.records:
            for tag, tokens in record["by_tag"].items():
                totals[tag] = totals.get(tag, 0) + tokens
        return dict(sorted(totals.items()))

    def mean_by_subset(self, cases: list[FailureCase]) -> dict[str, float]:
        subset_of = {c.case_id: c.subset for c in cases}
        sums: dict[str, list[int]] = {}
        for record in self.records:
            subset = subset_of.get(record["case_id"])
            if subset is not None:
                sums.setdefault(subset, []).append(record["total"])
        return {s: sum(v) / len(v) for s, v in sorted(sums.items())}

    def to_dict(self) -> dict:
        return {
            "total_tokens": self.total_tokens,
            "mean_tokens_per_case": self.mean_tokens_per_case,
            "by_tag_totals": self.by_tag_totals(),
            "records": self.records,
        }


class RunInterrupted(Exception):
    """Raised on operator interrupt; carries the completed outcomes."""

    def __init__(self, outcomes: dict):
        super().__init__("run interrupted")
        self.outcomes = outcomes


def _norm_agent(name: str) -> str:
    return " ".join(name.split()).casefold()


def score(
    predictions: list[PredictionRecord], cases: list[FailureCase], n_runs: int
) -> EvalResult:
    """Strict top-1 accuracy at agent and step level, averaged over runs."""
    unannotated = [c.case_id for c in cases if c.annotation is None]
    if unannotated:
        raise ScoringError(f"cases without annotations cannot be scored: {unannotated}")
    if not cases:
        raise ScoringError("no cases to score")
    by_key: dict[tuple[str, int], PredictionRecord] = {}
    for prediction in predictions:
        key = (prediction.case_id, prediction.run_index)
        if key in by_key:
            raise ScoringError(f"duplicate prediction for case {key[0]} run {key[1]}")
        by_key[key] = prediction
    per_case: list[dict] = []
    agent_props: list[float] = []
    step_props: list[float] = []
    for run in range(n_runs):
        agent_hits = 0
        step_hits = 0
        for case in cases:
            prediction = by_key.get((case.case_id, run))
            if prediction is None:
                raise ScoringError(f"missing prediction for case {case.case_id} run {run}")
            annotation = case.annotation
            agent_ok = (
                prediction.agent_name is not None
                and _norm_agent(prediction.agent_name) == _norm_agent(annotation.mistake_agent)
            )
            step_ok = (
                prediction.step_id is not None
                and prediction.step_id == annotation.mistake_step
            )
            agent_hits += agent_ok
            step_hits += step_ok
            per_case.append(
                {
                    "case_id": case.case_id,
                    "run": run,
                    "agent_correct": agent_ok,
                    "step_correct": step_ok,
                }
            )
        agent_props.append(agent_hits / len(cases))
        step_props.append(step_hits / len(cases))
    return EvalResult(
        agent_accuracy=sum(agent_props) / n_runs,
        step_accuracy=sum(step_props) / n_runs,
        n_cases=len(cases),
        n_runs=n_runs,
        per_case=tuple(per_case),
    )


def outcome_to_prediction(outcome: CaseOutcome, config_id: str) -> PredictionRecord:
    attribution = outcome.attribution
    return PredictionRecord(
        case_id=outcome.case_id,
        run_index=outcome.run_index,
        agent_name=attribution.agent_name if attribution else None,
        step_id=attribution.step_id if attribution else None,
        reason=attribution.reason if attribution else "",
        config_id=config_id,
        token_cost=outcome.ledger.total,
        error=outcome.error,
    )


def run_config(
    config: PipelineConfig,
    dataset: list[FailureCase],
    *,
    gateway: LlmGateway,
    kb: KnowledgeBase | None,
    cache_root: str | Path | None,
    config_id: str,
    workers: int = 1,
    fresh: bool = False,
) -> tuple[list[PredictionRecord], EvalResult | None, CostReport]:
    """Run every (case, run) job of one configuration and aggregate.

    Output ordering is deterministic (dataset order, then run index) no matter
    how workers interleave. Per-case failures become null predictions; the
    harness only raises for its own defects or an operator interrupt.
    """
    runner = CaseRunner(
        gateway, kb, config, cache_root=cache_root, config_id=config_id, fresh=fresh
    )
    jobs = [(case, run) for case in dataset for run in range(config.n_runs)]
    outcomes: dict[tuple[str, int], CaseOutcome] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {
            pool.submit(runner.run_case, case, run): (case.case_id, run)
            for case, run in jobs
        }
        pending = set(futures)
        try:
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for future in done:
                    outcomes[futures[future]] = future.result()
        except KeyboardInterrupt:
            for future in pending:
                future.cancel()
            raise RunInterrupted(outcomes) from None

    predictions = [
        outcome_to_prediction(outcomes[(case.case_id, run)], config_id)
        for case, run in jobs
    ]
    cost = CostReport(
        records=[
            {
                "case_id": case.case_id,
                "run_index": run,
                "total": outcomes[(case.case_id, run)].ledger.total,
                "by_tag": outcomes[(case.case_id, run)].ledger.by_tag(),
            }
            for case, run in jobs
        ]
    )
    result: EvalResult | None = None
    if all(case.annotation is not None for case in dataset):
        result = score(predictions, dataset, config.n_runs)
    else:
        log.warning("dataset contains unannotated cases; skipping evaluation")
    return predictions, result, cost


def ablation_configs(base: PipelineConfig) -> dict[str, PipelineConfig]:
    """The four module configurations tabulated by the ablation command."""
    modules_by_label = {
        "graph_only": frozenset({MODULE_GRAPH}),
        "graph_backtrack": frozenset({MODULE_GRAPH, MODULE_BACKTRACK}),
        "graph_screening": frozenset({MODULE_GRAPH, MODULE_SCREENING}),
        "full": ALL_MODULES,
    }
    configs = {}
    for label in ABLATION_LABELS:
        configs[label] = PipelineConfig(
            modules=modules_by_label[label],
            with_ground_truth=base.with_ground_truth,
            model_id=base.model_id,
            temperature=base.temperature,
            max_output=base.max_output,
            n_runs=base.n_runs,
            mode=base.mode,
            max_reflections=base.max_reflections,
            exemplars_k=base.exemplars_k,
        )
    return configs


def write_predictions(path: str | Path, predictions: list[PredictionRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for prediction in predictions:
            fh.write(prediction.to_json_line() + "\n")


def read_predictions(path: str | Path) -> list[PredictionRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(PredictionRecord.from_json_line(line))
    return records
