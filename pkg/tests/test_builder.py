from __future__ import annotations

import pytest

from blamegraph.builder import BuildSettings, build_graph, decompose
from blamegraph.errors import DecompositionError
from blamegraph.gateway import ChatResponse, LlmGateway, TokenLedger
from blamegraph.graph import validate_graph

from .helpers import FIXTURE_MODEL_ID


def _decomp_text(ranges):
    blocks = []
    for i, (lo, hi) in enumerate(ranges, start=1):
        blocks.append(
            f"Subtask Id: S{i}\nSubtask Name: Phase {i}\n"
            f"Step Range: [{lo}, {hi}]\nDescription: phase {i} work."
        )
    return "\n\n".join(blocks)


class RecordingTransport:
    def __init__(self, texts):
        self.texts = list(texts)
        self.prompts = []

    def __call__(self, request):
        self.prompts.append(request.prompt)
        text = self.texts.pop(0)
        return ChatResponse(text=text, prompt_tokens=2, completion_tokens=2)


def _gateway(transport):
    return LlmGateway("live", transport=transport, sleep=lambda _: None)


def test_decompose_accepts_exact_cover(dataset):
    case = dataset[0]  # 6 steps
    transport = RecordingTransport([_decomp_text([(0, 2), (3, 5)])])
    settings = BuildSettings(model_id="m")
    subtasks = decompose(case, "(none)", _gateway(transport), settings, TokenLedger())
    assert [s.step_range for s in subtasks] == [(0, 2), (3, 5)]
    assert len(transport.prompts) == 1


def test_decompose_overlap_triggers_one_reflection(dataset):
    case = dataset[0]
    transport = RecordingTransport(
        [_decomp_text([(0, 3), (3, 5)]), _decomp_text([(0, 3), (4, 5)])]
    )
    settings = BuildSettings(model_id="m")
    subtasks = decompose(case, "(none)", _gateway(transport), settings, TokenLedger())
    assert [s.step_range for s in subtasks] == [(0, 3), (4, 5)]
    assert len(transport.prompts) == 2
    assert "overlap" in transport.prompts[1]


def test_decompose_repair_prompt_cites_cover_all_steps(dataset):
    case = dataset[0]
    transport = RecordingTransport(
        [_decomp_text([(0, 2), (3, 4)]), _decomp_text([(0, 2), (3, 5)])]
    )
    settings = BuildSettings(model_id="m")
    decompose(case, "(none)", _gateway(transport), settings, TokenLedger())
    assert "cover all steps" in transport.prompts[1]


def test_decompose_gives_up_after_max_reflections(dataset):
    case = dataset[0]
    bad = _decomp_text([(0, 2), (4, 5)])  # gap at step 3, never fixed
    transport = RecordingTransport([bad, bad, bad])
    settings = BuildSettings(model_id="m", max_reflections=2)
    with pytest.raises(DecompositionError) as excinfo:
        decompose(case, "(none)", _gateway(transport), settings, TokenLedger())
    assert excinfo.value.violations
    assert len(transport.prompts) == 3


def test_decompose_parse_error_also_reflects(dataset):
    case = dataset[0]
    transport = RecordingTransport(["no blocks here", _decomp_text([(0, 2), (3, 5)])])
    settings = BuildSettings(model_id="m")
    subtasks = decompose(case, "(none)", _gateway(transport), settings, TokenLedger())
    assert len(subtasks) == 2
    assert "decomp.no_blocks" in transport.prompts[1]


def test_build_graph_end_to_end(dataset, scripted_gateway):
    case = dataset[0]
    settings = BuildSettings(model_id=FIXTURE_MODEL_ID)
    ledger = TokenLedger()
    graph, diagnostics = build_graph(case, "(no example)", scripted_gateway, settings, ledger)
    validate_graph(graph, case)
    assert len(graph.subtasks) == 2
    assert graph.subtask_edges and graph.step_edges
    assert diagnostics.rejected_edges == []
    assert ledger.tags() == ["behavior", "decompose", "semantic_edges", "step_edges"]


def test_build_graph_without_ground_truth_prompts_differ(dataset, scripted_gateway, tmp_path):
    from blamegraph.gateway import Transcript

    case = dataset[0]
    with_gt = BuildSettings(model_id=FIXTURE_MODEL_ID, with_ground_truth=True)
    without_gt = BuildSettings(model_id=FIXTURE_MODEL_ID, with_ground_truth=False)
    from .fake_model import ScriptedModel

    transport = ScriptedModel()
    gateway = LlmGateway("record", Transcript(tmp_path / "t.jsonl"), transport)
    build_graph(case, "(e)", gateway, with_gt, TokenLedger())
    first_calls = transport.calls
    build_graph(case, "(e)", gateway, without_gt, TokenLedger())
    # different prompts -> different fingerprints -> the transport runs again
    assert transport.calls == first_calls * 2
