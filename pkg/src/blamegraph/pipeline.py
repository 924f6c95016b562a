"""Per-case phase orchestration with on-disk caching.

One case run walks graph construction, oracle synthesis, backtracking, and
attribution as enabled by the configuration. Each phase's artifact is cached
as JSON under ``cache_root/config_id/case_id/run<k>/`` so completed phases are
skipped on rerun (unless ``fresh``); the per-phase token usage is restored
from the cached ledger so cost reports stay faithful across resumes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .attribution import Attribution, attribute
from .backtrack import (
    CandidateSet,
    backtrack_candidates,
    render_candidates,
)
from .baselines import (
    predict_all_at_once,
    predict_direct_on_graph,
    predict_select_from_candidates,
)
from .builder import BuildSettings, build_graph
from .cases import FailureCase, agents_of
from .errors import ConfigError, EngineError
from .gateway import LlmGateway, TokenLedger
from .graph import CausalGraph, graph_from_dict, graph_to_dict, serialize_graph
from .kb import KnowledgeBase, format_exemplars
from .loops import detect_loop_groups
from .oracles import SubtaskOracle, synthesize_oracles

log = logging.getLogger(__name__)

MODULE_GRAPH = "graph"
MODULE_BACKTRACK = "backtrack"
MODULE_SCREENING = "screening"
ALL_MODULES = frozenset({MODULE_GRAPH, MODULE_BACKTRACK, MODULE_SCREENING})

# ledger tags belonging to each cacheable phase, for cost restoration
PHASE_TAGS = {
    "graph": ("decompose", "behavior", "semantic_edges", "step_edges"),
    "oracles": ("oracles",),
    "candidates": ("backtrack",),
    "prediction": ("attribute", "graph_direct", "candidate_select", "all_at_once"),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Which modules run, against which model, under which evaluation setting."""

    modules: frozenset = ALL_MODULES
    with_ground_truth: bool = True
    model_id: str = "deepseek-v3.2"
    temperature: float = 0.0
    max_output: int = 4096
    n_runs: int = 1
    mode: str = "replay"
    max_reflections: int = 3
    exemplars_k: int = 2
    per_node_eval: bool = False  # reserved: per-node verdicts instead of one pass

    def __post_init__(self):
        unknown = set(self.modules) - ALL_MODULES
        if unknown:
            raise ConfigError(f"unknown pipeline modules: {sorted(unknown)}")
        if (MODULE_BACKTRACK in self.modules or MODULE_SCREENING in self.modules) and (
            MODULE_GRAPH not in self.modules
        ):
            raise ConfigError("backtrack/screening require the graph module")
        if self.n_runs < 1:
            raise ConfigError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.per_node_eval:
            raise ConfigError("per_node_eval is a reserved knob and not implemented")

    def build_settings(self) -> BuildSettings:
        return BuildSettings(
            model_id=self.model_id,
            temperature=self.temperature,
            max_output=self.max_output,
            with_ground_truth=self.with_ground_truth,
            max_reflections=self.max_reflections,
        )


@dataclass
class CaseOutcome:
    case_id: str
    run_index: int
    attribution: Attribution | None
    ledger: TokenLedger
    error: str | None = None
    warnings: list[str] = field(default_factory=list)


def all_steps_candidates(case: FailureCase, graph: CausalGraph) -> CandidateSet:
    """The degenerate candidate set used when backtracking is disabled."""
    return CandidateSet(
        subtask_ids=tuple(s.id for s in graph.subtasks),
        agent_names=tuple(agents_of(case)),
        step_ids=tuple(range(case.n_steps)),
    )


class CaseRunner:
    """Drives one case through the configured phases, with caching."""

    def __init__(
        self,
        gateway: LlmGateway,
        kb: KnowledgeBase | None,
        config: PipelineConfig,
        *,
        cache_root: str | Path | None = None,
        config_id: str = "default",
        fresh: bool = False,
    ):
        if MODULE_GRAPH in config.modules and kb is None:
            raise ConfigError("the graph module requires a built knowledge base")
        self.gateway = gateway
        self.kb = kb
        self.config = config
        self.cache_root = Path(cache_root) if cache_root is not None else None
        self.config_id = config_id
        self.fresh = fresh

    def _cache_dir(self, case: FailureCase, run_index: int) -> Path | None:
        if self.cache_root is None:
            return None
        path = self.cache_root / self.config_id / case.case_id / f"run{run_index}"
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _load_json(self, cache_dir: Path | None, name: str) -> dict | None:
        if cache_dir is None or self.fresh:
            return None
        path = cache_dir / name
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def _save_json(self, cache_dir: Path | None, name: str, payload: dict) -> None:
        if cache_dir is None:
            return
        (cache_dir / name).write_text(
            json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True),
            encoding="utf-8",
        )

    def run_case(self, case: FailureCase, run_index: int) -> CaseOutcome:
        ledger = TokenLedger()
        cache_dir = self._cache_dir(case, run_index)
        cached_ledger = None
        data = self._load_json(cache_dir, "ledger.json")
        if data is not None:
            cached_ledger = TokenLedger.from_dict(data)
        try:
            attribution, warnings = self._run_phases(case, ledger, cache_dir, cached_ledger)
        except EngineError as exc:
            log.error("case %s run %d failed: %s", case.case_id, run_index, exc)
            self._save_json(cache_dir, "ledger.json", ledger.to_dict())
            return CaseOutcome(
                case_id=case.case_id,
                run_index=run_index,
                attribution=None,
                ledger=ledger,
                error=f"{type(exc).__name__}: {exc}",
            )
        self._save_json(cache_dir, "ledger.json", ledger.to_dict())
        return CaseOutcome(
            case_id=case.case_id,
            run_index=run_index,
            attribution=attribution,
            ledger=ledger,
            warnings=warnings,
        )

    def _restore_phase_cost(self, phase, ledger, cached_ledger):
        """Restore the named phase's token usage when its artifact was cached."""
        if cached_ledger is not None:
            ledger.restore_tags(cached_ledger, list(PHASE_TAGS[phase]))

    def _run_phases(
        self,
        case: FailureCase,
        ledger: TokenLedger,
        cache_dir: Path | None,
        cached_ledger: TokenLedger | None,
    ) -> tuple[Attribution, list[str]]:
        config = self.config
        settings = config.build_settings()

        graph: CausalGraph | None = None
        oracles: list[SubtaskOracle] = []
        candidates: CandidateSet | None = None
        loop_groups = detect_loop_groups(case)

        if MODULE_GRAPH in config.modules:
            cached = self._load_json(cache_dir, "graph.json")
            if cached is not None:
                graph = graph_from_dict(cached)
                self._restore_phase_cost("graph", ledger, cached_ledger)
            else:
                assert self.kb is not None
                exemplars = self.kb.retrieve(
                    case.question, config.exemplars_k, exclude_task_id=case.case_id
                )
                graph, diagnostics = build_graph(
                    case, format_exemplars(exemplars), self.gateway, settings, ledger
                )
                self._save_json(cache_dir, "graph.json", graph_to_dict(graph))
                self._save_json(cache_dir, "diagnostics.json", diagnostics.to_dict())

        if MODULE_BACKTRACK in config.modules:
            assert graph is not None
            cached = self._load_json(cache_dir, "oracles.json")
            if cached is not None:
                oracles = [SubtaskOracle.from_dict(o) for o in cached["oracles"]]
                self._restore_phase_cost("oracles", ledger, cached_ledger)
            else:
                assert self.kb is not None
                exemplars = self.kb.retrieve(
                    case.question, config.exemplars_k, exclude_task_id=case.case_id
                )
                oracles = synthesize_oracles(
                    case,
                    list(graph.subtasks),
                    format_exemplars(exemplars),
                    self.gateway,
                    settings,
                    ledger,
                )
                self._save_json(
                    cache_dir, "oracles.json", {"oracles": [o.to_dict() for o in oracles]}
                )

            cached = self._load_json(cache_dir, "candidates.json")
            if cached is not None:
                candidates = CandidateSet.from_dict(cached["candidates"])
                self._restore_phase_cost("candidates", ledger, cached_ledger)
            else:
                candidates, report = backtrack_candidates(
                    case, graph, oracles, loop_groups, self.gateway, settings, ledger
                )
                self._save_json(
                    cache_dir,
                    "candidates.json",
                    {"candidates": candidates.to_dict(), "report": report.to_dict()},
                )

        cached = self._load_json(cache_dir, "prediction.json")
        if cached is not None:
            self._restore_phase_cost("prediction", ledger, cached_ledger)
            return Attribution.from_dict(cached["attribution"]), list(cached.get("warnings", []))

        attribution, warnings = self._predict(
            case, graph, oracles, candidates, loop_groups, settings, ledger
        )
        self._save_json(
            cache_dir,
            "prediction.json",
            {"attribution": attribution.to_dict(), "warnings": warnings},
        )
        return attribution, warnings

    def _predict(
        self,
        case: FailureCase,
        graph: CausalGraph | None,
        oracles: list[SubtaskOracle],
        candidates: CandidateSet | None,
        loop_groups,
        settings,
        ledger: TokenLedger,
    ) -> tuple[Attribution, list[str]]:
        config = self.config
        if MODULE_GRAPH not in config.modules:
            return predict_all_at_once(case, self.gateway, settings, ledger)
        assert graph is not None
        graph_text = serialize_graph(graph, loop_groups=loop_groups, oracles=oracles)
        if MODULE_SCREENING in config.modules:
            if candidates is None:
                candidates = all_steps_candidates(case, graph)
            return attribute(
                case, graph_text, render_candidates(candidates), self.gateway, settings, ledger
            )
        if MODULE_BACKTRACK in config.modules:
            assert candidates is not None
            return predict_select_from_candidates(
                case, graph_text, render_candidates(candidates), self.gateway, settings, ledger
            )
        return predict_direct_on_graph(case, graph_text, self.gateway, settings, ledger)
