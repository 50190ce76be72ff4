"""Chat-completion backends: HTTP client, response cache, and test mocks.

All backends expose a single method, complete(request) -> ChatResponse.
Requests default to temperature 0.0 and a single sample; sampling diversity
for voting comes from prompt variation, never from temperature.

Refusals are data, not errors: a declined response surfaces as finish_reason
"refused" with empty text, because downstream judge tallies count them.

The cache is a content-addressed append-only JSONL file keyed by a hash of
(model, system, user, temperature, max_output_tokens); a hit is served with
no network I/O and byte-identical text, which is what makes pipeline reruns
and interrupted-run resumes reproducible.
"""

from __future__ import annotations

import json
import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol

import requests

from .errors import (
    AuthError,
    BackendError,
    ContractViolation,
    NetworkError,
    RateLimited,
)
from .tokens import estimate_tokens
from .world import NarrativeWorld, continuity_check

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_OUTPUT_TOKENS = 1024


class FinishReason(Enum):
    STOP = "stop"
    LENGTH = "length"
    REFUSED = "refused"


@dataclass(frozen=True)
class ChatRequest:
    model: str
    system: str
    user: str
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class Usage:
    input_tokens: int
    output_tokens: int

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("usage counts must be non-negative")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: FinishReason
    usage: Usage

    @property
    def refused(self) -> bool:
        return self.finish_reason is FinishReason.REFUSED


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def cache_key(request: ChatRequest) -> str:
    payload = json.dumps(
        {
            "model": request.model,
            "system": request.system,
            "user": request.user,
            "temperature": request.temperature,
            "max_output_tokens": request.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL response store; safe for concurrent readers."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, ChatResponse] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._entries[record["key"]] = _response_from_dict(record["response"])

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> ChatResponse | None:
        return self._entries.get(key)

    def put(self, key: str, response: ChatResponse) -> None:
        with self._lock:
            if key in self._entries:
                return  # identical by construction; keep the first write
            self._entries[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                record = {
                    "key": key,
                    "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                    "response": _response_to_dict(response),
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def _response_to_dict(response: ChatResponse) -> dict:
    return {
        "text": response.text,
        "finish_reason": response.finish_reason.value,
        "usage": [response.usage.input_tokens, response.usage.output_tokens],
    }


def _response_from_dict(data: dict) -> ChatResponse:
    return ChatResponse(
        text=data["text"],
        finish_reason=FinishReason(data["finish_reason"]),
        usage=Usage(*data["usage"]),
    )


class CachedBackend:
    """Serve repeats from the cache; delegate misses to the inner backend."""

    def __init__(self, inner: Backend, cache: ResponseCache):
        self.inner = inner
        self.cache = cache

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = cache_key(request)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        response = self.inner.complete(request)
        self.cache.put(key, response)
        return response


_REFUSAL_FINISH_REASONS = {"content_filter", "refusal", "refused"}


class HttpBackend:
    """JSON-over-HTTP chat-completions client with bounded retries.

    Transient failures (rate limits, 5xx, network errors) retry with
    exponential backoff: delays backoff_base * 2^attempt, non-decreasing.
    Auth failures and other 4xx never retry.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        max_attempts: int = 4,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.session = session or requests.Session()
        self.sleep = sleep
        self.network_calls = 0
        self._gate = threading.Semaphore(max_in_flight)

    @classmethod
    def from_env(cls, **kwargs) -> "HttpBackend":
        base = os.environ.get("STORY_API_BASE")
        if not base:
            raise AuthError("STORY_API_BASE is not set")
        return cls(base_url=base, api_key=os.environ.get("STORY_API_KEY", ""), **kwargs)

    def complete(self, request: ChatRequest) -> ChatResponse:
        last_error: BackendError | None = None
        for attempt in range(self.max_attempts):
            try:
                return self._call_once(request)
            except BackendError as err:
                if not err.retryable:
                    raise
                last_error = err
                if attempt + 1 < self.max_attempts:
                    self.sleep(self.backoff_base * (2 ** attempt))
        assert last_error is not None
        raise last_error

    def _call_once(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        with self._gate:
            self.network_calls += 1
            try:
                resp = self.session.post(
                    f"{self.base_url}/v1/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as err:
                raise NetworkError(str(err)) from err
        if resp.status_code in (401, 403):
            raise AuthError(f"authentication failed (HTTP {resp.status_code})")
        if resp.status_code == 429:
            raise RateLimited("rate limited (HTTP 429)")
        if resp.status_code >= 500:
            raise NetworkError(f"server error (HTTP {resp.status_code})")
        if resp.status_code != 200:
            raise BackendError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            choice = body["choices"][0]
            text = choice["message"]["content"] or ""
            finish = str(choice.get("finish_reason", "stop")).lower()
        except (ValueError, KeyError, IndexError, TypeError) as err:
            raise BackendError(f"malformed completion response: {err}") from err
        if finish in _REFUSAL_FINISH_REASONS:
            reason = FinishReason.REFUSED
        elif finish == "length":
            reason = FinishReason.LENGTH
        else:
            reason = FinishReason.STOP
        usage = body.get("usage") or {}
        return ChatResponse(
            text=text,
            finish_reason=reason,
            usage=Usage(
                int(usage.get("prompt_tokens", estimate_tokens(request.system + request.user))),
                int(usage.get("completion_tokens", estimate_tokens(text))),
            ),
        )


_TASK_RE = re.compile(r"^TASK:\s*(\S+)", re.MULTILINE)
_UNIT_MARKER_RE = re.compile(r"UNIT\s+scene\s*=\s*(\d+)\s+index\s*=\s*(\d+)")


def _task_of(request: ChatRequest) -> str:
    match = _TASK_RE.search(request.user)
    return match.group(1) if match else ""


def _make_response(text: str, request: ChatRequest, refuse: bool = False) -> ChatResponse:
    return ChatResponse(
        text="" if refuse else text,
        finish_reason=FinishReason.REFUSED if refuse else FinishReason.STOP,
        usage=Usage(
            estimate_tokens(request.system + request.user),
            0 if refuse else estimate_tokens(text),
        ),
    )


class ScriptedBackend:
    """Deterministic mock: first rule matching (task, contains) wins.

    Rules are dicts: {"task": str, "contains": [substr, ...], "response": str}
    or {"task": ..., "contains": [...], "refuse": true}. A request no rule
    matches raises ContractViolation so incomplete fixtures fail loudly.
    """

    def __init__(self, rules: Iterable[dict]):
        self.rules = list(rules)
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        task = _task_of(request)
        for rule in self.rules:
            if rule.get("task") and rule["task"] != task:
                continue
            if any(sub not in request.user for sub in rule.get("contains", ())):
                continue
            if rule.get("refuse"):
                return _make_response("", request, refuse=True)
            return _make_response(rule["response"], request)
        raise ContractViolation(f"no scripted response for task {task!r}")


_COHERENCE_NOTE_NAMES = (
    "KEY INFORMATION",
    "CAUSAL CHAIN",
    "CHARACTER CONTINUITY",
    "PLOT CLARITY",
    "TEMPORAL ORDER",
)


class WorldMockBackend:
    """Answer counterfactual prompts from a symbolic world; script the rest.

    The counterfactual user prompt carries a "UNIT scene=<k> index=<i>"
    marker; the verdict is computed by removing the matching event from the
    world and checking trajectory continuity, which makes this backend the
    ground-truth bridge for classifier tests.
    """

    def __init__(self, world: NarrativeWorld, scripted_rules: Iterable[dict] = ()):
        self.world = world
        self._scripted = ScriptedBackend(scripted_rules)
        self.calls = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        if _task_of(request) != "counterfactual_analysis":
            return self._scripted.complete(request)
        marker = _UNIT_MARKER_RE.search(request.user)
        if not marker:
            raise ContractViolation("counterfactual prompt lacks a UNIT marker")
        scene_index, unit_index = int(marker.group(1)), int(marker.group(2))
        event = self.world.event_at(scene_index, unit_index)
        if event is None:
            broken = False
        else:
            broken = not continuity_check(self.world, {event.id})
        verdict = "BROKEN" if broken else "CONTINUOUS"
        lines = [f"{name}: consulted the symbolic world" for name in _COHERENCE_NOTE_NAMES]
        lines.append(f"VERDICT: {verdict}")
        return _make_response("\n".join(lines), request)


def mock_from_world(
    world: NarrativeWorld, scripted_rules: Iterable[dict] = ()
) -> WorldMockBackend:
    return WorldMockBackend(world, scripted_rules)
