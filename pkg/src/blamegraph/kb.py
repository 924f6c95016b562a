"""Exemplar knowledge base: build from benchmark annotations, retrieve by cosine.

GAIA entries concatenate the question with its step annotations; AssistantBench
entries concatenate the task with its explanation. Vectors are L2-normalized at
build time so cosine similarity reduces to a dot product; the corpus is small
enough that retrieval is an exact scan.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import KbError

log = logging.getLogger(__name__)

KB_SCHEMA_VERSION = 1

SOURCES = ("gaia", "assistantbench")

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class KbEntry:
    entry_id: str
    source: str
    text: str
    origin_task_id: str


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked exemplars; ``truncated`` is set when fewer than k survived."""

    entries: tuple[tuple[KbEntry, float], ...]
    truncated: bool = False


class LexicalEmbedder:
    """Deterministic hashed bag-of-terms embedder for offline use.

    Terms hash into a fixed number of signed buckets with sublinear
    (1 + log tf) weighting. No vocabulary, no state: the same text always
    produces the same vector on any machine.
    """

    name = "lexical"

    def __init__(self, dim: int = 512):
        if dim < 8:
            raise KbError(f"embedder dim too small: {dim}")
        self.dim = dim

    def config(self) -> dict:
        return {"name": self.name, "dim": self.dim}

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise KbError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        counts: dict[str, int] = {}
        for token in _TOKEN_RE.findall(text.casefold()):
            counts[token] = counts.get(token, 0) + 1
        for token, count in counts.items():
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:8], "big") % self.dim
            sign = 1.0 if digest[8] % 2 == 0 else -1.0
            vec[bucket] += sign * (1.0 + math.log(count))
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec


class RemoteEmbedder:
    """OpenAI-style ``/embeddings`` endpoint adapter with retries."""

    name = "remote"

    def __init__(
        self,
        model_id: str,
        endpoint: str | None = None,
        api_key: str | None = None,
        *,
        endpoint_env: str = "BLAMEGRAPH_EMBED_BASE",
        api_key_env: str = "BLAMEGRAPH_EMBED_KEY",
        timeout: float = 60.0,
        retry_attempts: int = 3,
        backoff_base: float = 1.0,
    ):
        self.model_id = model_id
        self.endpoint = (endpoint or os.environ.get(endpoint_env, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(api_key_env)
        self.timeout = timeout
        self.retry_attempts = retry_attempts
        self.backoff_base = backoff_base
        if not self.endpoint or not self.api_key:
            raise KbError(
                f"remote embedder needs {endpoint_env} and {api_key_env} in the environment"
            )

    def config(self) -> dict:
        return {"name": self.name, "model_id": self.model_id}

    def embed(self, text: str) -> np.ndarray:
        import httpx

        if not text:
            raise KbError("cannot embed empty text")
        last: Exception | None = None
        for attempt in range(self.retry_attempts):
            try:
                resp = httpx.post(
                    f"{self.endpoint}/embeddings",
                    json={"model": self.model_id, "input": text},
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=self.timeout,
                )
                if resp.status_code >= 500:
                    raise httpx.HTTPError(f"server error {resp.status_code}")
                if resp.status_code != 200:
                    raise KbError(f"embedding endpoint returned {resp.status_code}")
                vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
                norm = float(np.linalg.norm(vec))
                return vec / norm if norm > 0 else vec
            except httpx.HTTPError as exc:
                last = exc
                if attempt + 1 < self.retry_attempts:
                    time.sleep(self.backoff_base * (2**attempt))
        raise KbError(f"embedding failed after {self.retry_attempts} attempts: {last}")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def make_embedder(config: dict) -> "LexicalEmbedder | RemoteEmbedder":
    name = config.get("name")
    if name == "lexical":
        return LexicalEmbedder(dim=config["dim"])
    if name == "remote":
        return RemoteEmbedder(model_id=config["model_id"])
    raise KbError(f"unknown embedder {name!r}")


class KnowledgeBase:
    """Immutable entry/vector store with exact cosine retrieval."""

    def __init__(self, entries: list[KbEntry], vectors: np.ndarray, embedder_config: dict):
        if len(entries) != vectors.shape[0]:
            raise KbError(
                f"entry/vector count mismatch: {len(entries)} vs {vectors.shape[0]}"
            )
        if not np.isfinite(vectors).all():
            raise KbError("knowledge base vectors must be finite")
        self.entries = list(entries)
        self.vectors = vectors
        self.embedder_config = dict(embedder_config)
        self._embedder = None

    def __len__(self) -> int:
        return len(self.entries)

    def counts_by_source(self) -> dict[str, int]:
        counts = {source: 0 for source in SOURCES}
        for entry in self.entries:
            counts[entry.source] = counts.get(entry.source, 0) + 1
        return counts

    @property
    def embedder(self):
        if self._embedder is None:
            self._embedder = make_embedder(self.embedder_config)
        return self._embedder

    def retrieve(
        self, query_text: str, k: int, exclude_task_id: str | None = None
    ) -> RetrievalResult:
        """Embed the query and rank the whole corpus exactly."""
        return self.rank_vector(self.embedder.embed(query_text), k, exclude_task_id)

    def rank_vector(
        self, query_vector: np.ndarray, k: int, exclude_task_id: str | None = None
    ) -> RetrievalResult:
        """Top-k entries by cosine, ties broken by entry_id; entries sharing
        ``exclude_task_id`` are filtered before ranking."""
        if k < 1:
            raise KbError(f"k must be >= 1, got {k}")
        norm = float(np.linalg.norm(query_vector))
        query = query_vector / norm if norm > 0 else query_vector
        survivors = [
            i
            for i, entry in enumerate(self.entries)
            if exclude_task_id is None or entry.origin_task_id != exclude_task_id
        ]
        scores = self.vectors[survivors] @ query if survivors else np.zeros(0)
        ranked = sorted(
            zip(survivors, scores), key=lambda pair: (-pair[1], self.entries[pair[0]].entry_id)
        )
        truncated = len(ranked) < k
        if truncated:
            log.warning(
                "retrieval requested k=%d but only %d entries survive exclusion", k, len(ranked)
            )
        top = ranked[:k]
        return RetrievalResult(
            entries=tuple((self.entries[i], float(score)) for i, score in top),
            truncated=truncated,
        )

    def save(self, kb_dir: str | Path) -> None:
        kb_dir = Path(kb_dir)
        kb_dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "schema_version": KB_SCHEMA_VERSION,
            "embedder": self.embedder_config,
            "entries": [
                {
                    "entry_id": e.entry_id,
                    "source": e.source,
                    "text": e.text,
                    "origin_task_id": e.origin_task_id,
                }
                for e in self.entries
            ],
        }
        (kb_dir / "entries.json").write_text(
            json.dumps(meta, ensure_ascii=False, indent=2), encoding="utf-8"
        )
        np.save(kb_dir / "vectors.npy", self.vectors)

    @classmethod
    def load(cls, kb_dir: str | Path) -> "KnowledgeBase":
        kb_dir = Path(kb_dir)
        meta_path = kb_dir / "entries.json"
        if not meta_path.exists():
            raise KbError(f"no knowledge base at {kb_dir}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("schema_version") != KB_SCHEMA_VERSION:
            raise KbError(f"unsupported kb schema_version {meta.get('schema_version')!r}")
        entries = [
            KbEntry(
                entry_id=e["entry_id"],
                source=e["source"],
                text=e["text"],
                origin_task_id=e["origin_task_id"],
            )
            for e in meta["entries"]
        ]
        vectors = np.load(kb_dir / "vectors.npy")
        return cls(entries, vectors, meta["embedder"])


def _read_records(path: Path) -> list[dict]:
    """Read a JSON array or JSONL file of objects."""
    if not path.exists():
        raise KbError(f"source file not found: {path}")
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        return []
    try:
        if text.startswith("["):
            records = json.loads(text)
        else:
            records = [json.loads(line) for line in text.splitlines() if line.strip()]
    except json.JSONDecodeError as exc:
        raise KbError(f"{path}: not valid JSON/JSONL: {exc.msg}") from exc
    if not all(isinstance(r, dict) for r in records):
        raise KbError(f"{path}: every record must be an object")
    return records


def _pick(record: dict, *keys: str) -> str | None:
    for key in keys:
        value = record.get(key)
        if value:
            return str(value)
    return None


def _gaia_entry(record: dict, position: int, path: Path) -> KbEntry:
    task_id = _pick(record, "task_id", "task_Id", "id") or f"row{position}"
    question = _pick(record, "Question", "question")
    steps = _pick(record, "Steps", "steps")
    if steps is None:
        annotator = record.get("Annotator Metadata") or record.get("annotator_metadata") or {}
        steps = _pick(annotator, "Steps", "steps")
    if question is None or steps is None:
        raise KbError(f"{path}: gaia record {task_id} needs question and steps")
    return KbEntry(
        entry_id=f"gaia-{task_id}",
        source="gaia",
        text=f"{question}\n{steps}",
        origin_task_id=task_id,
    )


def _assistantbench_entry(record: dict, position: int, path: Path) -> KbEntry:
    task_id = _pick(record, "id", "task_id") or f"row{position}"
    task = _pick(record, "task", "Task")
    explanation = _pick(record, "explanation", "Explanation")
    if task is None or explanation is None:
        raise KbError(f"{path}: assistantbench record {task_id} needs task and explanation")
    return KbEntry(
        entry_id=f"assistantbench-{task_id}",
        source="assistantbench",
        text=f"{task}\n{explanation}",
        origin_task_id=task_id,
    )


def read_selection(path: str | Path | None) -> list[str]:
    """Read an AssistantBench selection list: JSON array or one id per line."""
    if path is None:
        return []
    path = Path(path)
    if not path.exists():
        raise KbError(f"selection file not found: {path}")
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        return []
    if text.startswith("["):
        return [str(v) for v in json.loads(text)]
    return [line.strip() for line in text.splitlines() if line.strip()]


def build_kb(
    gaia_source: str | Path,
    assistantbench_source: str | Path | None = None,
    selection: list[str] | None = None,
    embedder: LexicalEmbedder | RemoteEmbedder | None = None,
) -> KnowledgeBase:
    """Build the exemplar knowledge base from both benchmark sources.

    All GAIA records are used; AssistantBench contributes exactly the ids
    named in ``selection`` (an empty selection builds a single-source KB
    with a warning).
    """
    embedder = embedder or LexicalEmbedder()
    entries: list[KbEntry] = []

    gaia_path = Path(gaia_source)
    for position, record in enumerate(_read_records(gaia_path)):
        entries.append(_gaia_entry(record, position, gaia_path))

    selection = selection or []
    if not selection:
        log.warning("empty assistantbench selection: building a gaia-only knowledge base")
    elif assistantbench_source is None:
        raise KbError("a selection was given but no assistantbench source")
    else:
        ab_path = Path(assistantbench_source)
        by_id: dict[str, KbEntry] = {}
        for position, record in enumerate(_read_records(ab_path)):
            entry = _assistantbench_entry(record, position, ab_path)
            by_id[entry.origin_task_id] = entry
        missing = [task_id for task_id in selection if task_id not in by_id]
        if missing:
            raise KbError(
                f"selection names {len(missing)} assistantbench ids absent from the "
                f"source: {missing[:5]}"
            )
        entries.extend(by_id[task_id] for task_id in selection)

    seen_ids: set[str] = set()
    for entry in entries:
        if entry.entry_id in seen_ids:
            raise KbError(f"duplicate entry id {entry.entry_id}")
        seen_ids.add(entry.entry_id)
        if not entry.text.strip():
            raise KbError(f"entry {entry.entry_id} has empty text")

    dim = getattr(embedder, "dim", None)
    vectors = []
    for entry in entries:
        try:
            vec = embedder.embed(entry.text)
        except KbError:
            raise
        except Exception as exc:
            raise KbError(f"embedding failed for entry {entry.entry_id}: {exc}") from exc
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise KbError(
                f"entry {entry.entry_id}: embedding dim {vec.shape[0]} != {dim}"
            )
        vectors.append(vec)

    matrix = np.vstack(vectors) if vectors else np.zeros((0, dim or 1))
    return KnowledgeBase(entries, matrix, embedder.config())


def format_exemplars(result: RetrievalResult) -> str:
    """Render retrieved exemplars for prompt injection."""
    labels = {"gaia": "GAIA", "assistantbench": "AssistantBench"}
    blocks = []
    for position, (entry, _score) in enumerate(result.entries, start=1):
        blocks.append(
            f"[Injected exemplar {position}]\n"
            f"Source: {labels.get(entry.source, entry.source)}\n"
            f"{entry.text}"
        )
    return "\n\n".join(blocks) if blocks else "(no reference example available)"
