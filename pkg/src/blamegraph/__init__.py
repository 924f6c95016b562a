"""Failure attribution for multi-agent LLM trajectories.

Reconstructs a flat execution log into a hierarchical causal graph, verifies
each subtask against a synthesized oracle, backtracks to candidate errors,
and screens them counterfactually down to one (agent, step) root cause.
"""

from .attribution import Attribution
from .backtrack import CandidateSet
from .cases import FailureCase, RootCauseAnnotation, TrajectoryStep, load_case
from .evaluate import EvalResult, score
from .gateway import ChatRequest, ChatResponse, LlmGateway, TokenLedger, Transcript
from .graph import CausalGraph, SubtaskNode
from .kb import KnowledgeBase, build_kb
from .loops import LoopGroup, detect_loop_groups
from .oracles import SubtaskOracle
from .pipeline import CaseRunner, PipelineConfig

__version__ = "0.1.0"

__all__ = [
    "Attribution",
    "CandidateSet",
    "CaseRunner",
    "CausalGraph",
    "ChatRequest",
    "ChatResponse",
    "EvalResult",
    "FailureCase",
    "KnowledgeBase",
    "LlmGateway",
    "LoopGroup",
    "PipelineConfig",
    "RootCauseAnnotation",
    "SubtaskNode",
    "SubtaskOracle",
    "TokenLedger",
    "TrajectoryStep",
    "Transcript",
    "build_kb",
    "detect_loop_groups",
    "load_case",
    "score",
    "__version__",
]
