"""Uniform client layer over chat-completion and embedding endpoints.

Speaks the widely deployed chat-completions JSON shape
(``{model, messages[], temperature, max_tokens}`` in,
``choices[0].message.content`` out) and the matching ``/embeddings`` shape
(``data[].embedding``). Adds content-addressed on-disk caching, jittered
exponential-backoff retries, a bounded in-flight limit, and deterministic
offline stubs so the whole evaluation pipeline can run without a network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx
import numpy as np

from .errors import SchemaError, TransportError

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")

# Statuses worth retrying; everything else non-2xx is surfaced immediately.
TRANSIENT_STATUSES = frozenset({408, 425, 429, 500, 502, 503, 504})

ENV_ENDPOINT = "DXBENCH_ENDPOINT"
ENV_API_KEY = "DXBENCH_API_KEY"
ENV_MODEL = "DXBENCH_MODEL"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise SchemaError(f"message role {self.role!r} not one of {ROLES}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 2048

    def __post_init__(self) -> None:
        if not self.model_id:
            raise SchemaError("model_id must be non-empty")
        if not self.messages:
            raise SchemaError("messages must be non-empty")
        if self.messages[0].role not in ("system", "user"):
            raise SchemaError("first message role must be 'system' or 'user'")
        if self.temperature < 0:
            raise SchemaError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens <= 0:
            raise SchemaError(f"max_tokens must be positive, got {self.max_tokens}")

    @property
    def last_user_content(self) -> str:
        for message in reversed(self.messages):
            if message.role == "user":
                return message.content
        return ""


def user_request(
    model_id: str,
    prompt: str,
    system: str | None = None,
    temperature: float = 0.0,
    max_tokens: int = 2048,
) -> ChatRequest:
    messages: list[ChatMessage] = []
    if system:
        messages.append(ChatMessage("system", system))
    messages.append(ChatMessage("user", prompt))
    return ChatRequest(model_id, tuple(messages), temperature, max_tokens)


@dataclass
class ChatResponse:
    text: str
    usage: dict[str, int] = field(default_factory=dict)
    cached: bool = False


class ChatClient(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def request_key(endpoint: str, request: ChatRequest) -> str:
    """Content hash covering every field that affects the response."""
    payload = {
        "endpoint": endpoint,
        "model_id": request.model_id,
        "messages": [[m.role, m.content] for m in request.messages],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ResponseCache:
    """On-disk response store laid out as <dir>/<first-2-hex>/<hash>.json.

    Writes go through a temp file + rename so concurrent writers of the
    same key are safe (last atomic replace wins, content is identical).
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path_for(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError):
            return None

    def put(self, key: str, record: dict) -> None:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp.{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(json.dumps(record, ensure_ascii=False), "utf-8")
        os.replace(tmp, path)


@dataclass(frozen=True)
class EndpointConfig:
    """Where to send requests. CLI values override environment values."""

    url: str
    model_id: str
    api_key: str | None = None

    @classmethod
    def from_env(
        cls,
        url: str | None = None,
        model_id: str | None = None,
        api_key: str | None = None,
    ) -> "EndpointConfig":
        url = url or os.environ.get(ENV_ENDPOINT)
        model_id = model_id or os.environ.get(ENV_MODEL)
        api_key = api_key or os.environ.get(ENV_API_KEY)
        if not url:
            raise SchemaError(f"no endpoint URL configured (flag or {ENV_ENDPOINT})")
        if not model_id:
            raise SchemaError(f"no model id configured (flag or {ENV_MODEL})")
        return cls(url=url, model_id=model_id, api_key=api_key)


class _Transient(Exception):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


def _run_with_retries(
    call: Callable[[], object],
    max_attempts: int,
    base_delay: float,
    sleeper: Callable[[float], None] | None,
    rng: random.Random,
    what: str,
):
    last: _Transient | None = None
    for attempt in range(max_attempts):
        try:
            return call()
        except _Transient as exc:
            last = exc
            if attempt == max_attempts - 1:
                break
            delay = base_delay * (2**attempt) * (0.5 + rng.random())
            log.warning("%s failed (%s); retry %d/%d in %.2fs", what, exc, attempt + 1,
                        max_attempts - 1, delay)
            # Late-bound so tests can stub module-level time.sleep.
            (sleeper or time.sleep)(delay)
    assert last is not None
    raise TransportError(f"{what}: retry budget exhausted: {last}", status=last.status)


class HttpChatClient:
    """Chat-completions client with cache, retries, and an in-flight cap."""

    def __init__(
        self,
        endpoint: EndpointConfig,
        cache_dir: str | Path | None = None,
        max_attempts: int = 5,
        base_delay: float = 1.0,
        max_inflight: int = 4,
        timeout: float = 120.0,
        sleeper: Callable[[float], None] | None = None,
        rng: random.Random | None = None,
    ):
        self.endpoint = endpoint
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self.max_attempts = max_attempts
        self.base_delay = base_delay
        self.timeout = timeout
        self._sleeper = sleeper
        self._rng = rng or random.Random()
        self._semaphore = threading.BoundedSemaphore(max_inflight)

    @property
    def chat_url(self) -> str:
        return self.endpoint.url.rstrip("/") + "/chat/completions"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key:
            headers["Authorization"] = f"Bearer {self.endpoint.api_key}"
        return headers

    def _post_once(self, url: str, body: dict) -> dict:
        try:
            with self._semaphore:
                response = httpx.post(url, json=body, headers=self._headers(),
                                      timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise _Transient(f"network error: {exc}") from exc
        if response.status_code in TRANSIENT_STATUSES:
            raise _Transient(f"HTTP {response.status_code}", status=response.status_code)
        if response.status_code >= 400:
            raise TransportError(
                f"HTTP {response.status_code} from {url}: {response.text[:200]}",
                status=response.status_code,
            )
        try:
            return response.json()
        except json.JSONDecodeError as exc:
            raise _Transient(f"malformed JSON body: {exc}") from exc

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = request_key(self.endpoint.url, request)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return ChatResponse(text=hit["text"], usage=dict(hit.get("usage", {})),
                                    cached=True)
        body = {
            "model": request.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        payload = _run_with_retries(
            lambda: self._post_once(self.chat_url, body),
            self.max_attempts, self.base_delay, self._sleeper, self._rng,
            f"chat_complete({request.model_id})",
        )
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response shape from {self.chat_url}: {exc}")
        usage = {k: int(v) for k, v in (payload.get("usage") or {}).items()
                 if isinstance(v, (int, float))}
        if self.cache is not None:
            self.cache.put(key, {"text": text, "usage": usage})
        return ChatResponse(text=text, usage=usage, cached=False)


class StaticChatClient:
    """Deterministic offline stub.

    ``answers`` is either a mapping from the last user-message content to
    the reply text, or a callable taking the full ChatRequest.
    """

    def __init__(self, answers: dict[str, str] | Callable[[ChatRequest], str]):
        self._answers = answers
        self.calls = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        if callable(self._answers):
            text = self._answers(request)
        else:
            prompt = request.last_user_content
            if prompt not in self._answers:
                raise SchemaError("StaticChatClient has no answer for this prompt")
            text = self._answers[prompt]
        return ChatResponse(text=text, usage={"total_tokens": 0}, cached=False)


# --- embeddings ------------------------------------------------------------

_TOKEN_PATTERN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_PATTERN.findall(text.lower())


@dataclass(frozen=True, eq=False)
class TokenEmbeddings:
    tokens: tuple[str, ...]
    vectors: np.ndarray  # shape (len(tokens), dimension), unit rows
    dimension: int

    def __post_init__(self) -> None:
        if self.vectors.shape != (len(self.tokens), self.dimension):
            raise SchemaError(
                f"vectors shape {self.vectors.shape} does not match "
                f"{len(self.tokens)} tokens x {self.dimension} dims"
            )


class Embedder(Protocol):
    capability: str  # "token" or "sentence"
    dimension: int

    def vectors_for(self, tokens: Sequence[str]) -> np.ndarray: ...


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    if matrix.size == 0:
        return matrix
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


class StubEmbedder:
    """Hash-derived pseudo-random unit vectors; bit-reproducible offline.

    Each distinct token maps deterministically to one vector via a SHA-256
    digest of (seed, token), so results are stable across processes and
    platforms (never Python's salted ``hash``).
    """

    capability = "token"

    def __init__(self, dimension: int = 256, seed: int = 0):
        if dimension < 8:
            raise SchemaError(f"stub embedder dimension must be >= 8, got {dimension}")
        self.dimension = dimension
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _vector(self, token: str) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(token)
        if cached is not None:
            return cached
        digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        vector = rng.standard_normal(self.dimension)
        vector /= np.linalg.norm(vector)
        with self._lock:
            self._cache[token] = vector
        return vector

    def vectors_for(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dimension))
        return np.stack([self._vector(t) for t in tokens])


class HttpEmbedder:
    """Remote embedding endpoint returning per-token vectors.

    ``capability`` must be set to "sentence" when the endpoint can only
    embed whole sentences; the metrics layer refuses token-level scoring
    in that mode rather than silently degrading.
    """

    def __init__(
        self,
        endpoint: EndpointConfig,
        dimension: int,
        capability: str = "token",
        max_attempts: int = 5,
        base_delay: float = 1.0,
        timeout: float = 60.0,
        sleeper: Callable[[float], None] | None = None,
        rng: random.Random | None = None,
    ):
        if capability not in ("token", "sentence"):
            raise SchemaError(f"capability must be 'token' or 'sentence', got {capability!r}")
        self.endpoint = endpoint
        self.dimension = dimension
        self.capability = capability
        self.max_attempts = max_attempts
        self.base_delay = base_delay
        self.timeout = timeout
        self._sleeper = sleeper
        self._rng = rng or random.Random()

    @property
    def embed_url(self) -> str:
        return self.endpoint.url.rstrip("/") + "/embeddings"

    def _post_once(self, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key:
            headers["Authorization"] = f"Bearer {self.endpoint.api_key}"
        try:
            response = httpx.post(self.embed_url, json=body, headers=headers,
                                  timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise _Transient(f"network error: {exc}") from exc
        if response.status_code in TRANSIENT_STATUSES:
            raise _Transient(f"HTTP {response.status_code}", status=response.status_code)
        if response.status_code >= 400:
            raise TransportError(
                f"HTTP {response.status_code} from {self.embed_url}: {response.text[:200]}",
                status=response.status_code,
            )
        return response.json()

    def vectors_for(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dimension))
        body = {"model": self.endpoint.model_id, "input": list(tokens)}
        payload = _run_with_retries(
            lambda: self._post_once(body),
            self.max_attempts, self.base_delay, self._sleeper, self._rng,
            "embed_tokens",
        )
        try:
            rows = [entry["embedding"] for entry in payload["data"]]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"unexpected embeddings response shape: {exc}")
        if len(rows) != len(tokens):
            raise TransportError(
                f"embedding endpoint returned {len(rows)} vectors for {len(tokens)} tokens"
            )
        return _unit_rows(np.asarray(rows, dtype=float))


def stub_embedder(dimension: int = 256, seed: int = 0) -> StubEmbedder:
    return StubEmbedder(dimension=dimension, seed=seed)


def embed_tokens(text: str, embedder: Embedder) -> TokenEmbeddings:
    tokens = tuple(tokenize(text))
    vectors = embedder.vectors_for(tokens)
    return TokenEmbeddings(tokens=tokens, vectors=_unit_rows(vectors),
                           dimension=embedder.dimension)
