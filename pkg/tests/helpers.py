"""Shared fixture plumbing for the test suite and the transcript generator."""

from __future__ import annotations

from pathlib import Path

from blamegraph.cases import load_dataset
from blamegraph.kb import KnowledgeBase, LexicalEmbedder, build_kb, read_selection

FIXTURES = Path(__file__).parent / "fixtures"
CASES_DIR = FIXTURES / "cases"
KB_DIR = FIXTURES / "kb"
TRANSCRIPT_PATH = FIXTURES / "transcripts" / "pipeline.jsonl"

FIXTURE_EMBED_DIM = 256
FIXTURE_MODEL_ID = "scripted-test-model"


def fixture_dataset():
    return load_dataset(CASES_DIR, "algorithm_generated")


def build_fixture_kb() -> KnowledgeBase:
    """Deterministic KB over the fixture sources; must match what the
    committed transcript was recorded against."""
    return build_kb(
        KB_DIR / "gaia.jsonl",
        KB_DIR / "assistantbench.jsonl",
        read_selection(KB_DIR / "selection.txt"),
        LexicalEmbedder(dim=FIXTURE_EMBED_DIM),
    )
