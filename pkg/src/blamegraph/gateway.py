"""Provider-agnostic chat-completion boundary.

Three modes: ``live`` calls the remote endpoint, ``record`` additionally
persists every response keyed by a request fingerprint, ``replay`` serves
responses from the transcript without any network use. With a fixed
transcript the whole pipeline becomes a pure function of its inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import GatewayError, ReplayMissError, TransportFailure

MODES = ("live", "record", "replay")

TRANSCRIPT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call; ``tag`` labels the issuing pipeline phase."""

    prompt: str
    model_id: str
    temperature: float
    max_output: int
    tag: str

    def __post_init__(self):
        if not self.prompt:
            raise GatewayError("prompt must be non-empty")
        if self.temperature < 0:
            raise GatewayError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise GatewayError("token counts must be >= 0")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


def request_fingerprint(request: ChatRequest) -> str:
    """Stable hash of (prompt, model_id, temperature, tag).

    The tag is included so two phases issuing an identical prompt stay
    independently replayable.
    """
    payload = json.dumps(
        {
            "prompt": request.prompt,
            "model_id": request.model_id,
            "temperature": request.temperature,
            "tag": request.tag,
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class TokenLedger:
    """Per-case token usage grouped by pipeline phase tag.

    Ledgers are confined to one case worker and are not thread-safe.
    """

    def __init__(self):
        self._entries: dict[str, list[int]] = {}

    def add(self, tag: str, prompt_tokens: int, completion_tokens: int) -> None:
        bucket = self._entries.setdefault(tag, [0, 0])
        bucket[0] += prompt_tokens
        bucket[1] += completion_tokens

    @property
    def total(self) -> int:
        return sum(p + c for p, c in self._entries.values())

    def by_tag(self) -> dict[str, int]:
        return {tag: p + c for tag, (p, c) in sorted(self._entries.items())}

    def tags(self) -> list[str]:
        return sorted(self._entries)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "by_tag": {
                tag: {"prompt_tokens": p, "completion_tokens": c}
                for tag, (p, c) in sorted(self._entries.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TokenLedger":
        ledger = cls()
        for tag, counts in data.get("by_tag", {}).items():
            ledger.add(tag, counts["prompt_tokens"], counts["completion_tokens"])
        return ledger

    def restore_tags(self, other: "TokenLedger", tags: list[str]) -> None:
        """Copy the named tags' usage from another ledger (cache restores)."""
        for tag in tags:
            if tag in other._entries:
                p, c = other._entries[tag]
                self.add(tag, p, c)


def case_cost(ledger: TokenLedger) -> tuple[int, dict[str, int]]:
    """Total tokens and per-tag breakdown for one completed case."""
    return ledger.total, ledger.by_tag()


class Transcript:
    """Append-only record/replay store: one JSON record per line.

    Fingerprints are unique; appends are atomic per entry so a crashed run
    leaves a readable prefix.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, ChatResponse] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise GatewayError(
                        f"{self.path}:{lineno}: corrupt transcript line: {exc.msg}"
                    ) from exc
                resp = record["response"]
                self._entries[record["fingerprint"]] = ChatResponse(
                    text=resp["text"],
                    prompt_tokens=resp["prompt_tokens"],
                    completion_tokens=resp["completion_tokens"],
                )

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, fingerprint: str) -> ChatResponse | None:
        with self._lock:
            return self._entries.get(fingerprint)

    def append(self, fingerprint: str, request: ChatRequest, response: ChatResponse) -> None:
        record = {
            "schema_version": TRANSCRIPT_SCHEMA_VERSION,
            "fingerprint": fingerprint,
            "request": {
                "tag": request.tag,
                "model_id": request.model_id,
                "temperature": request.temperature,
                "max_output": request.max_output,
                "prompt_sha256": hashlib.sha256(request.prompt.encode("utf-8")).hexdigest(),
                "prompt_chars": len(request.prompt),
            },
            "response": {
                "text": response.text,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
            },
        }
        line = json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n"
        with self._lock:
            if fingerprint in self._entries:
                return
            self._entries[fingerprint] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()


class HttpChatTransport:
    """OpenAI-style ``/chat/completions`` adapter.

    The endpoint and credential come from environment variables only; the
    request/response field mapping for the provider lives entirely here.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        *,
        endpoint_env: str = "BLAMEGRAPH_API_BASE",
        api_key_env: str = "BLAMEGRAPH_API_KEY",
        timeout: float = 120.0,
    ):
        self.endpoint = (endpoint or os.environ.get(endpoint_env, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(api_key_env)
        self.timeout = timeout
        if not self.endpoint:
            raise GatewayError(
                f"no chat endpoint configured (set {endpoint_env} or pass endpoint=)"
            )
        if not self.api_key:
            raise GatewayError(f"no API key configured (set {api_key_env})")

    def __call__(self, request: ChatRequest) -> ChatResponse:
        import httpx

        body = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        }
        try:
            resp = httpx.post(
                f"{self.endpoint}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise TransportFailure(f"transport error: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportFailure(f"server error {resp.status_code}")
        if resp.status_code != 200:
            raise GatewayError(f"chat endpoint returned {resp.status_code}: {resp.text[:200]}")
        payload = resp.json()
        try:
            text = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
            return ChatResponse(
                text=text,
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed chat response payload: {exc}") from exc


class LlmGateway:
    """Chat-completion gateway with retry, rate limiting, and record/replay.

    Safe for concurrent use by multiple case workers: transcript access is
    locked and the in-flight request cap bounds concurrent network calls.
    """

    def __init__(
        self,
        mode: str,
        transcript: Transcript | None = None,
        transport: Callable[[ChatRequest], ChatResponse] | None = None,
        *,
        max_in_flight: int = 4,
        retry_attempts: int = 3,
        backoff_base: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if mode not in MODES:
            raise GatewayError(f"unknown gateway mode {mode!r}, expected one of {MODES}")
        if mode in ("record", "replay") and transcript is None:
            raise GatewayError(f"mode {mode!r} requires a transcript")
        if mode in ("live", "record") and transport is None:
            raise GatewayError(f"mode {mode!r} requires a transport")
        self.mode = mode
        self.transcript = transcript
        self.transport = transport
        self.retry_attempts = retry_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._in_flight = threading.Semaphore(max_in_flight)

    def complete(self, request: ChatRequest, ledger: TokenLedger | None = None) -> ChatResponse:
        fingerprint = request_fingerprint(request)
        if self.mode == "replay":
            assert self.transcript is not None
            response = self.transcript.get(fingerprint)
            if response is None:
                raise ReplayMissError(
                    f"no transcript entry for tag {request.tag!r} "
                    f"(fingerprint {fingerprint[:12]}...)",
                    tag=request.tag,
                    fingerprint=fingerprint,
                )
        else:
            response = None
            if self.mode == "record":
                assert self.transcript is not None
                response = self.transcript.get(fingerprint)
            if response is None:
                response = self._call_with_retry(request)
                if self.mode == "record":
                    assert self.transcript is not None
                    self.transcript.append(fingerprint, request, response)
        if ledger is not None:
            ledger.add(request.tag, response.prompt_tokens, response.completion_tokens)
        return response

    def _call_with_retry(self, request: ChatRequest) -> ChatResponse:
        assert self.transport is not None
        last: Exception | None = None
        for attempt in range(self.retry_attempts):
            try:
                with self._in_flight:
                    return self.transport(request)
            except TransportFailure as exc:
                last = exc
                if attempt + 1 < self.retry_attempts:
                    self._sleep(self.backoff_base * (2**attempt))
        raise GatewayError(
            f"request tag {request.tag!r} failed after {self.retry_attempts} attempts: {last}"
        )
