"""Exception types shared across the attribution engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for every failure raised by this package."""


class CaseFormatError(EngineError):
    """A case file is not syntactically valid JSON."""

    def __init__(self, message: str, *, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class CaseSchemaError(EngineError):
    """A required case field is missing or has the wrong shape."""

    def __init__(self, message: str, *, field: str | None = None):
        super().__init__(message)
        self.field = field


class CaseIntegrityError(EngineError):
    """Case content violates a structural invariant (indices, cross-references)."""


class ParseError(EngineError):
    """A model response violates its strict plain-text grammar.

    ``rule`` is a stable dotted identifier for the violated rule;
    ``line`` is the 1-based line number when it can be located.
    """

    def __init__(self, message: str, *, rule: str, line: int | None = None):
        super().__init__(message)
        self.rule = rule
        self.line = line

    def __str__(self) -> str:
        loc = f" (line {self.line})" if self.line is not None else ""
        return f"[{self.rule}]{loc} {super().__str__()}"


class GatewayError(EngineError):
    """The chat-completion boundary failed to produce a response."""


class TransportFailure(GatewayError):
    """A retryable transport-level failure (network error or 5xx status)."""


class ReplayMissError(GatewayError):
    """A replay-mode request has no recorded response in the transcript."""

    def __init__(self, message: str, *, tag: str, fingerprint: str):
        super().__init__(message)
        self.tag = tag
        self.fingerprint = fingerprint


class DecompositionError(EngineError):
    """Subtask decomposition stayed invalid after all repair rounds."""

    def __init__(self, message: str, *, violations: list[str]):
        super().__init__(message)
        self.violations = list(violations)


class OracleSynthesisError(EngineError):
    """Oracle synthesis failed structurally after the repair round-trip."""


class BacktrackError(EngineError):
    """Backtracking output stayed unparseable after the repair round-trip."""


class AttributionError(EngineError):
    """No valid attribution could be parsed after the repair round-trip."""


class GraphIntegrityError(EngineError):
    """Assembled graph violates a referential invariant."""

    def __init__(self, message: str, *, problems: list[str]):
        super().__init__(message)
        self.problems = list(problems)


class KbError(EngineError):
    """Knowledge-base build or persistence failure."""


class ScoringError(EngineError):
    """Predictions and cases cannot be scored together."""


class ConfigError(EngineError):
    """Invalid run configuration or manifest."""
