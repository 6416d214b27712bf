"""Model backends: live chat-completions over HTTP, deterministic mocks, replay.

Every backend produces ChatExchange records; the evolution loop appends them
to a JSONL transcript, and the replay backend feeds a recorded transcript
back so whole runs can be reproduced offline, byte for byte.
"""

from __future__ import annotations

import json
import math
import os
import random
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .benchsuite import REFERENCE_SOURCE
from .codediff import SourceText, normalize

Message = dict[str, str]


@dataclass(frozen=True)
class ModelConfig:
    model_name: str = "mock-mutator"
    endpoint_url: str = ""
    temperature: float = 1.0
    max_retries: int = 3
    timeout_s: float = 60.0
    api_key_env: str = "MUTEVO_API_KEY"
    retry_backoff_s: float = 0.5

    def __post_init__(self) -> None:
        if not (math.isfinite(self.temperature) and self.temperature >= 0):
            raise ValueError(f"temperature must be non-negative, got {self.temperature!r}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be non-negative, got {self.max_retries}")


@dataclass
class ChatExchange:
    request_messages: tuple[Message, ...]
    response_text: str
    token_usage: dict[str, int]
    latency_s: float
    backend: str  # live | mock | replay
    model: str


class LLMError(RuntimeError):
    """Base class for everything the backends can throw."""


class TransportError(LLMError):
    pass


class AuthError(LLMError):
    pass


class CompletionTimeoutError(LLMError):
    pass


class ReplayExhaustedError(LLMError):
    pass


class CodeExtractionError(LLMError):
    pass


# ----- code extraction ------------------------------------------------------

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def extract_code(response_text: str) -> SourceText:
    """Contents of the last fenced code block; models narrate first, code last."""
    blocks = _FENCE_RE.findall(response_text or "")
    if not blocks:
        raise CodeExtractionError("no fenced code block in the response")
    return normalize(blocks[-1])


# ----- live backend ---------------------------------------------------------


def complete(config: ModelConfig, messages: Sequence[Message]) -> ChatExchange:
    """POST one chat-completions request, retrying transient failures with backoff.

    429 and 5xx responses, connection failures, and request timeouts count as
    transient; 401/403 raise immediately since retrying a bad credential is
    pointless.
    """
    if not messages:
        raise ValueError("cannot complete an empty message list")
    if not config.endpoint_url:
        raise ValueError("live backend needs endpoint_url in the model config")
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(config.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    payload = {
        "model": config.model_name,
        "messages": list(messages),
        "temperature": config.temperature,
    }
    start = time.monotonic()
    last_error: LLMError = TransportError("no attempt made")
    for attempt in range(config.max_retries + 1):
        if attempt:
            time.sleep(config.retry_backoff_s * 2 ** (attempt - 1))
        try:
            response = requests.post(
                config.endpoint_url, json=payload, headers=headers, timeout=config.timeout_s
            )
        except requests.Timeout:
            last_error = CompletionTimeoutError(f"no response within {config.timeout_s}s")
            continue
        except requests.RequestException as exc:
            last_error = TransportError(str(exc))
            continue
        if response.status_code in (401, 403):
            raise AuthError(
                f"endpoint rejected the credential from ${config.api_key_env}"
                f" (HTTP {response.status_code})"
            )
        if response.status_code == 429 or response.status_code >= 500:
            last_error = TransportError(f"HTTP {response.status_code}")
            continue
        if response.status_code != 200:
            raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage") or {}
        token_usage = {
            "prompt_tokens": int(usage.get("prompt_tokens", 0)),
            "completion_tokens": int(usage.get("completion_tokens", 0)),
        }
        return ChatExchange(
            request_messages=tuple(messages),
            response_text=text,
            token_usage=token_usage,
            latency_s=time.monotonic() - start,
            backend="live",
            model=config.model_name,
        )
    raise last_error


# ----- mock mutation --------------------------------------------------------


def _replace_lines(parent: SourceText, count: int, rng: random.Random) -> str:
    lines = list(parent.lines)
    for position in sorted(rng.sample(range(len(lines)), count)):
        # Markers open with "}" so a mutated child never parses: failures are
        # instant and deterministic instead of hanging in a half-broken loop.
        marker = f"}} mutated-{position}-{rng.getrandbits(32):08x}"
        while marker in parent.lines:
            marker = f"}} mutated-{position}-{rng.getrandbits(32):08x}"
        lines[position] = marker
    return "\n".join(lines)


def mock_mutate(parent: SourceText, rate_percent: float, rng: random.Random) -> str:
    """Deterministic mutation double: replaces exactly max(1, round(n * rate / 100))
    lines with unique marker lines, so the delivered diff is exactly 100 * k / n."""
    n = len(parent.lines)
    if n == 0:
        raise ValueError("cannot mutate an empty parent")
    k = min(n, max(1, round(n * rate_percent / 100.0)))
    child = _replace_lines(parent, k, rng)
    return f"Refined the strategy; {k} line(s) touched.\n\n```python\n{child}\n```"


def sloppy_mock_mutate(parent: SourceText, rate_percent: float, rng: random.Random) -> str:
    """Backend caricature that ignores the requested rate and rewrites 40-90% of lines."""
    n = len(parent.lines)
    if n == 0:
        raise ValueError("cannot mutate an empty parent")
    k = max(1, round(n * rng.uniform(0.4, 0.9)))
    low, high = math.ceil(0.4 * n), math.floor(0.9 * n)
    if low <= high:
        k = min(max(k, low), high)
    k = min(k, n)
    child = _replace_lines(parent, k, rng)
    return f"Redesigned large parts of the algorithm.\n\n```python\n{child}\n```"


# ----- engines --------------------------------------------------------------


class MutationEngine(Protocol):
    """What the evolution loop needs from a backend."""

    backend: str
    model: str

    def generate(self, messages: Sequence[Message]) -> ChatExchange: ...

    def mutate(
        self, messages: Sequence[Message], parent: SourceText, rate_percent: float
    ) -> ChatExchange: ...


class LiveEngine:
    backend = "live"

    def __init__(self, config: ModelConfig):
        self.config = config
        self.model = config.model_name

    def generate(self, messages: Sequence[Message]) -> ChatExchange:
        return complete(self.config, messages)

    def mutate(
        self, messages: Sequence[Message], parent: SourceText, rate_percent: float
    ) -> ChatExchange:
        return complete(self.config, messages)


class MockEngine:
    """Offline stand-in: same seed, same children, no network."""

    backend = "mock"

    def __init__(self, seed: int, model_name: str = "mock-mutator", sloppy: bool = False):
        self._rng = random.Random(seed)
        self.model = model_name
        self._mutator = sloppy_mock_mutate if sloppy else mock_mutate

    def _exchange(self, messages: Sequence[Message], text: str) -> ChatExchange:
        return ChatExchange(
            request_messages=tuple(messages),
            response_text=text,
            token_usage={"prompt_tokens": 0, "completion_tokens": 0},
            latency_s=0.0,
            backend=self.backend,
            model=self.model,
        )

    def generate(self, messages: Sequence[Message]) -> ChatExchange:
        text = f"Here is an optimizer built around uniform random sampling.\n\n```python\n{REFERENCE_SOURCE}```"
        return self._exchange(messages, text)

    def mutate(
        self, messages: Sequence[Message], parent: SourceText, rate_percent: float
    ) -> ChatExchange:
        return self._exchange(messages, self._mutator(parent, rate_percent, self._rng))


class ReplayEngine:
    """Replays recorded responses in order; asking past the end is an error."""

    backend = "replay"

    def __init__(self, records: Sequence[dict]):
        self._records = list(records)
        self._position = 0
        self.model = str(self._records[0].get("model", "")) if self._records else ""

    @classmethod
    def from_transcript(cls, path: Path) -> "ReplayEngine":
        return cls(read_transcript(path))

    def _next(self, messages: Sequence[Message]) -> ChatExchange:
        if self._position >= len(self._records):
            raise ReplayExhaustedError(
                f"transcript exhausted after {len(self._records)} exchanges"
            )
        record = self._records[self._position]
        self._position += 1
        usage = record.get("token_usage") or {}
        return ChatExchange(
            request_messages=tuple(messages),
            response_text=str(record.get("response_text", "")),
            token_usage={k: int(v) for k, v in usage.items()},
            latency_s=0.0,
            backend=self.backend,
            model=str(record.get("model", "")),
        )

    def generate(self, messages: Sequence[Message]) -> ChatExchange:
        return self._next(messages)

    def mutate(
        self, messages: Sequence[Message], parent: SourceText, rate_percent: float
    ) -> ChatExchange:
        return self._next(messages)


# ----- transcript log -------------------------------------------------------


def append_transcript(path: Path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(record) + "\n")


def read_transcript(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(json.loads(line))
    return records
