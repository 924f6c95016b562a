"""Reference predictors: random lower bound and direct-prompt variants.

The direct variants share the attributor's three-line grammar and validation;
they differ only in how much structure the prompt carries (nothing, the graph,
or the graph plus a pre-screened candidate set).
"""

from __future__ import annotations

import random

from .attribution import Attribution, run_attribution_prompt
from .cases import FailureCase, agents_of, serialize_history
from .gateway import LlmGateway, TokenLedger


def baseline_random(case: FailureCase, seed: int) -> Attribution:
    """Uniformly random agent and step; deterministic for a fixed seed."""
    rng = random.Random(seed)
    agent = rng.choice(agents_of(case))
    step = rng.randrange(case.n_steps)
    return Attribution(agent_name=agent, step_id=step, reason="random baseline")


def predict_all_at_once(
    case: FailureCase, gateway: LlmGateway, settings, ledger: TokenLedger
) -> tuple[Attribution, list[str]]:
    """Single direct prompt over the raw history."""
    return run_attribution_prompt(
        "all_at_once",
        {
            "question": case.question,
            "history_text": serialize_history(case),
            "n_steps": str(case.n_steps),
        },
        "all_at_once",
        case,
        gateway,
        settings,
        ledger,
    )


def predict_direct_on_graph(
    case: FailureCase, graph_text: str, gateway: LlmGateway, settings, ledger: TokenLedger
) -> tuple[Attribution, list[str]]:
    """Direct prediction augmented with the serialized graph (graph-only ablation)."""
    return run_attribution_prompt(
        "graph_direct",
        {
            "question": case.question,
            "history_text": serialize_history(case),
            "n_steps": str(case.n_steps),
            "graph": graph_text,
        },
        "graph_direct",
        case,
        gateway,
        settings,
        ledger,
    )


def predict_select_from_candidates(
    case: FailureCase,
    graph_text: str,
    candidates_text: str,
    gateway: LlmGateway,
    settings,
    ledger: TokenLedger,
) -> tuple[Attribution, list[str]]:
    """Pick one (agent, step) from the candidate set without stage framing."""
    return run_attribution_prompt(
        "candidate_select",
        {
            "question": case.question,
            "history_text": serialize_history(case),
            "n_steps": str(case.n_steps),
            "graph": graph_text,
            "candidate_set": candidates_text,
        },
        "candidate_select",
        case,
        gateway,
        settings,
        ledger,
    )
