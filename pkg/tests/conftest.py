from __future__ import annotations

import pytest

from blamegraph.gateway import LlmGateway, Transcript

from .fake_model import ScriptedModel
from .helpers import CASES_DIR, TRANSCRIPT_PATH, build_fixture_kb, fixture_dataset


@pytest.fixture(scope="session")
def dataset():
    return fixture_dataset()


@pytest.fixture(scope="session")
def fixture_kb():
    return build_fixture_kb()


@pytest.fixture(scope="session")
def replay_transcript():
    return Transcript(TRANSCRIPT_PATH)


@pytest.fixture
def replay_gateway(replay_transcript):
    return LlmGateway("replay", replay_transcript)


@pytest.fixture
def scripted_gateway(tmp_path):
    transcript = Transcript(tmp_path / "transcript.jsonl")
    return LlmGateway("record", transcript, ScriptedModel())


@pytest.fixture
def cases_dir():
    return CASES_DIR
