"""Operator entry point: knowledge-base build, runs, evaluation, ablations, costs.

All run parameters live in one declarative YAML manifest; command-line flags
override individual values. Machine outputs are JSON/JSONL, human summaries
plain text. Credentials come from environment variables only.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path

import yaml

from .cases import FailureCase, load_dataset
from .errors import ConfigError, EngineError
from .evaluate import (
    CostReport,
    EvalResult,
    RunInterrupted,
    ablation_configs,
    outcome_to_prediction,
    read_predictions,
    run_config,
    score,
    write_predictions,
)
from .gateway import HttpChatTransport, LlmGateway, Transcript
from .kb import KnowledgeBase, LexicalEmbedder, RemoteEmbedder, build_kb, read_selection
from .pipeline import MODULE_GRAPH, PipelineConfig

log = logging.getLogger(__name__)


@dataclass
class RunManifest:
    """Everything one run needs: dataset, caches, transcript, and the pipeline config."""

    config_id: str
    cases_dir: Path
    subset: str
    kb_dir: Path | None
    cache_dir: Path
    output_dir: Path
    transcript: Path | None
    workers: int
    config: PipelineConfig

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "RunManifest":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"manifest not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: manifest must be a mapping")
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

        def need(key: str):
            if key not in raw:
                raise ConfigError(f"{path}: manifest missing required key {key!r}")
            return raw[key]

        base = path.parent

        def respath(value) -> Path:
            p = Path(value)
            return p if p.is_absolute() else (base / p)

        config = PipelineConfig(
            modules=frozenset(raw.get("modules", ["graph", "backtrack", "screening"])),
            with_ground_truth=bool(raw.get("with_ground_truth", True)),
            model_id=str(raw.get("model_id", "deepseek-v3.2")),
            temperature=float(raw.get("temperature", 0.0)),
            max_output=int(raw.get("max_output", 4096)),
            n_runs=int(raw.get("n_runs", 1)),
            mode=str(raw.get("mode", "replay")),
            max_reflections=int(raw.get("max_reflections", 3)),
            exemplars_k=int(raw.get("exemplars_k", 2)),
        )
        manifest = cls(
            config_id=str(need("config_id")),
            cases_dir=respath(need("cases_dir")),
            subset=str(raw.get("subset", "algorithm_generated")),
            kb_dir=respath(raw["kb_dir"]) if raw.get("kb_dir") else None,
            cache_dir=respath(raw.get("cache_dir", "cache")),
            output_dir=respath(raw.get("output_dir", "out")),
            transcript=respath(raw["transcript"]) if raw.get("transcript") else None,
            workers=int(raw.get("workers", 1)),
            config=config,
        )
        manifest.validate()
        return manifest

    def validate(self) -> None:
        if not self.cases_dir.exists():
            raise ConfigError(f"cases_dir does not exist: {self.cases_dir}")
        if MODULE_GRAPH in self.config.modules:
            if self.kb_dir is None or not (self.kb_dir / "entries.json").exists():
                raise ConfigError(
                    f"the graph module needs a built knowledge base (kb_dir={self.kb_dir})"
                )
        if self.config.mode in ("record", "replay") and self.transcript is None:
            raise ConfigError(f"mode {self.config.mode!r} requires a transcript path")
        if self.config.mode == "replay" and not self.transcript.exists():
            raise ConfigError(f"replay transcript does not exist: {self.transcript}")

    def build_gateway(self) -> LlmGateway:
        transcript = Transcript(self.transcript) if self.transcript else None
        transport = None
        if self.config.mode in ("live", "record"):
            transport = HttpChatTransport()
        return LlmGateway(self.config.mode, transcript, transport)

    def load_kb(self) -> KnowledgeBase | None:
        if MODULE_GRAPH not in self.config.modules:
            return None
        return KnowledgeBase.load(self.kb_dir)

    def out_dir(self, config_id: str | None = None) -> Path:
        d = self.output_dir / (config_id or self.config_id)
        d.mkdir(parents=True, exist_ok=True)
        return d


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _summary_text(
    config_id: str, result: EvalResult | None, cost: CostReport, cases: list[FailureCase]
) -> str:
    lines = [f"config: {config_id}"]
    if result is not None:
        lines.append(f"Agent-level Accuracy: {result.agent_accuracy * 100:.2f}%")
        lines.append(f"Step-level Accuracy: {result.step_accuracy * 100:.2f}%")
        lines.append(f"cases: {result.n_cases}  runs: {result.n_runs}")
    else:
        lines.append("(dataset unannotated: accuracy not computed)")
    lines.append(f"Token Cost Per Case: {cost.mean_tokens_per_case:.1f}")
    for subset, mean in cost.mean_by_subset(cases).items():
        lines.append(f"Token Cost Per Case [{subset}]: {mean:.1f}")
    return "\n".join(lines) + "\n"


def cmd_kb_build(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    if (out_dir / "entries.json").exists() and not args.force:
        print(f"error: knowledge base already exists at {out_dir} (use --force)", file=sys.stderr)
        return 2
    if args.embedder == "lexical":
        embedder = LexicalEmbedder(dim=args.dim)
    else:
        if not args.embed_model:
            print("error: --embedder remote requires --embed-model", file=sys.stderr)
            return 2
        embedder = RemoteEmbedder(model_id=args.embed_model)
    selection = read_selection(args.selection)
    kb = build_kb(args.gaia, args.assistantbench, selection, embedder)
    kb.save(out_dir)
    counts = kb.counts_by_source()
    print(
        f"gaia={counts.get('gaia', 0)} assistantbench={counts.get('assistantbench', 0)} "
        f"total={len(kb)}"
    )
    return 0


def _run_one(
    manifest: RunManifest,
    config: PipelineConfig,
    config_id: str,
    dataset: list[FailureCase],
    gateway: LlmGateway,
    kb: KnowledgeBase | None,
    fresh: bool,
):
    predictions, result, cost = run_config(
        config,
        dataset,
        gateway=gateway,
        kb=kb,
        cache_root=manifest.cache_dir,
        config_id=config_id,
        workers=manifest.workers,
        fresh=fresh,
    )
    out = manifest.out_dir(config_id)
    write_predictions(out / "predictions.jsonl", predictions)
    if result is not None:
        _write_json(out / "eval.json", result.to_dict())
    _write_json(out / "costs.json", cost.to_dict())
    (out / "summary.txt").write_text(
        _summary_text(config_id, result, cost, dataset), encoding="utf-8"
    )
    return predictions, result, cost


def cmd_run(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.config, _overrides(args))
    dataset = load_dataset(manifest.cases_dir, manifest.subset)
    gateway = manifest.build_gateway()
    kb = manifest.load_kb()
    try:
        predictions, result, _ = _run_one(
            manifest, manifest.config, manifest.config_id, dataset, gateway, kb, args.fresh
        )
    except RunInterrupted as interrupted:
        partial = list(interrupted.outcomes.values())
        log.warning("interrupted: flushing %d completed outcome(s)", len(partial))
        write_predictions(
            manifest.out_dir() / "predictions.partial.jsonl",
            [outcome_to_prediction(o, manifest.config_id) for o in partial],
        )
        return 130
    failures = [p for p in predictions if p.error]
    print(
        f"{manifest.config_id}: {len(predictions)} prediction(s), "
        f"{len(failures)} case failure(s), outputs in {manifest.out_dir()}"
    )
    if result is not None:
        print(
            f"Agent-level Accuracy: {result.agent_accuracy * 100:.2f}%  "
            f"Step-level Accuracy: {result.step_accuracy * 100:.2f}%"
        )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.config, _overrides(args))
    out = manifest.out_dir()
    predictions_path = out / "predictions.jsonl"
    if not predictions_path.exists():
        print(f"error: no predictions at {predictions_path}", file=sys.stderr)
        return 2
    dataset = load_dataset(manifest.cases_dir, manifest.subset)
    predictions = read_predictions(predictions_path)
    result = score(predictions, dataset, manifest.config.n_runs)
    _write_json(out / "eval.json", result.to_dict())
    print(
        f"Agent-level Accuracy: {result.agent_accuracy * 100:.2f}%  "
        f"Step-level Accuracy: {result.step_accuracy * 100:.2f}%  "
        f"({result.n_cases} cases x {result.n_runs} runs)"
    )
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.config, _overrides(args))
    dataset = load_dataset(manifest.cases_dir, manifest.subset)
    gateway = manifest.build_gateway()
    kb = KnowledgeBase.load(manifest.kb_dir) if manifest.kb_dir else None
    rows = []
    for label, config in ablation_configs(manifest.config).items():
        config_id = f"{manifest.config_id}-{label}"
        _, result, cost = _run_one(manifest, config, config_id, dataset, gateway, kb, args.fresh)
        rows.append(
            {
                "label": label,
                "modules": sorted(config.modules),
                "agent_accuracy": result.agent_accuracy if result else None,
                "step_accuracy": result.step_accuracy if result else None,
                "mean_tokens_per_case": cost.mean_tokens_per_case,
                "tags": cost.tags(),
            }
        )
    out = manifest.out_dir(f"{manifest.config_id}-ablation")
    _write_json(out / "ablation.json", {"rows": rows})
    header = f"{'variant':<18}{'agent acc':>12}{'step acc':>12}{'tokens/case':>14}"
    print(header)
    for row in rows:
        agent = f"{row['agent_accuracy'] * 100:.2f}%" if row["agent_accuracy"] is not None else "-"
        step = f"{row['step_accuracy'] * 100:.2f}%" if row["step_accuracy"] is not None else "-"
        print(f"{row['label']:<18}{agent:>12}{step:>12}{row['mean_tokens_per_case']:>14.1f}")
    return 0


def cmd_costs(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.config, _overrides(args))
    dataset = load_dataset(manifest.cases_dir, manifest.subset)
    cache = manifest.cache_dir / manifest.config_id
    if not cache.exists():
        print(f"error: no cached ledgers under {cache}", file=sys.stderr)
        return 2
    records = []
    for ledger_path in sorted(cache.glob("*/run*/ledger.json")):
        data = json.loads(ledger_path.read_text(encoding="utf-8"))
        case_id = ledger_path.parent.parent.name
        run_index = int(ledger_path.parent.name.removeprefix("run"))
        by_tag = {tag: v["prompt_tokens"] + v["completion_tokens"] for tag, v in data["by_tag"].items()}
        records.append(
            {
                "case_id": case_id,
                "run_index": run_index,
                "total": sum(by_tag.values()),
                "by_tag": by_tag,
            }
        )
    cost = CostReport(records=records)
    out = manifest.out_dir()
    _write_json(out / "costs.json", cost.to_dict())
    print(f"mean tokens per case: {cost.mean_tokens_per_case:.1f}")
    for subset, mean in cost.mean_by_subset(dataset).items():
        print(f"mean tokens per case [{subset}]: {mean:.1f}")
    return 0


def cmd_cache_clear(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.config, _overrides(args))
    target = manifest.cache_dir / manifest.config_id
    if not target.exists():
        print(f"nothing to clear at {target}")
        return 0
    if not args.yes:
        answer = input(f"delete cache {target}? [y/N] ").strip().lower()
        if answer not in ("y", "yes"):
            print("aborted")
            return 1
    shutil.rmtree(target)
    print(f"cleared {target}")
    return 0


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("mode", "n_runs", "workers", "config_id", "cases_dir")
    return {k: getattr(args, k, None) for k in keys}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blamegraph",
        description="Failure attribution for multi-agent LLM trajectories.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="knowledge base commands")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    kb_build = kb_sub.add_parser("build", help="build the exemplar knowledge base")
    kb_build.add_argument("--gaia", required=True, help="GAIA source (JSON/JSONL)")
    kb_build.add_argument("--assistantbench", help="AssistantBench source (JSON/JSONL)")
    kb_build.add_argument("--selection", help="AssistantBench id selection list")
    kb_build.add_argument("--out", required=True, help="output directory")
    kb_build.add_argument("--embedder", choices=("lexical", "remote"), default="lexical")
    kb_build.add_argument("--dim", type=int, default=512, help="lexical embedder dimension")
    kb_build.add_argument("--embed-model", default="", help="remote embedding model id")
    kb_build.add_argument("--force", action="store_true", help="overwrite an existing KB")
    kb_build.set_defaults(func=cmd_kb_build)

    def add_run_args(p, fresh: bool = True):
        p.add_argument("--config", required=True, help="run manifest (YAML)")
        p.add_argument("--mode", choices=("live", "record", "replay"))
        p.add_argument("--n-runs", dest="n_runs", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--config-id", dest="config_id")
        p.add_argument("--cases-dir", dest="cases_dir")
        if fresh:
            p.add_argument("--fresh", action="store_true", help="ignore cached phases")

    run = sub.add_parser("run", help="run the pipeline over a dataset")
    add_run_args(run)
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score existing predictions")
    add_run_args(ev, fresh=False)
    ev.set_defaults(func=cmd_eval)

    ablate = sub.add_parser("ablate", help="run the four module configurations")
    add_run_args(ablate)
    ablate.set_defaults(func=cmd_ablate)

    costs = sub.add_parser("costs", help="token cost report from cached ledgers")
    add_run_args(costs, fresh=False)
    costs.set_defaults(func=cmd_costs)

    cache = sub.add_parser("cache", help="cache management")
    cache_sub = cache.add_subparsers(dest="cache_command", required=True)
    clear = cache_sub.add_parser("clear", help="remove one config's cache")
    add_run_args(clear, fresh=False)
    clear.add_argument("--yes", action="store_true", help="skip confirmation")
    clear.set_defaults(func=cmd_cache_clear)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
