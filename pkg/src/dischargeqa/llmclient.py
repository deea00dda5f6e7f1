"""Chat-completion client with http, replay, and scripted transports."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

import httpx

from .errors import AuthError, FixtureMiss, LlmUnavailable

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call, fully specified so it can be hashed."""

    model_id: str
    messages: tuple
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple((role, content) for role, content in self.messages))
        if not self.messages:
            raise ValueError("messages must not be empty")
        for role, content in self.messages:
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
            if not isinstance(content, str):
                raise ValueError("message content must be a string")
        if self.messages[0][0] not in ("system", "user"):
            raise ValueError("first message must be system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")

    def to_dict(self):
        return {
            "model_id": self.model_id,
            "messages": [[role, content] for role, content in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


def request_digest(request):
    """Content digest of a request: sha256 over its canonical JSON form."""
    canonical = json.dumps(request.to_dict(), sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: dict = field(default_factory=dict)


class HttpTransport:
    """Talks to an OpenAI-style chat-completions endpoint with retries."""

    def __init__(self, base_url=None, api_key=None, timeout=30.0, max_attempts=3):
        self.base_url = (base_url or os.environ.get("LLM_BASE_URL", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("LLM_API_KEY", "")
        self.timeout = timeout
        self.max_attempts = max_attempts

    def complete(self, request):
        if not self.base_url:
            raise LlmUnavailable("no base URL configured (set LLM_BASE_URL)")
        body = {
            "model": request.model_id,
            "messages": [{"role": role, "content": content}
                         for role, content in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(0.5 * 2 ** (attempt - 1))
            try:
                response = httpx.post(f"{self.base_url}/chat/completions",
                                      json=body, headers=headers, timeout=self.timeout)
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("llm call failed (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials ({response.status_code})")
            if response.status_code >= 500 or response.status_code == 429:
                last_error = RuntimeError(f"status {response.status_code}")
                continue
            try:
                payload = response.json()
                text = payload["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise LlmUnavailable("malformed completion payload") from None
            return CompletionResult(text, payload.get("usage", {}) or {})
        raise LlmUnavailable(f"gave up after {self.max_attempts} attempts: {last_error}")


class ReplayTransport:
    """Serves responses recorded earlier, addressed by request digest."""

    def __init__(self, fixture_path):
        self.fixture_path = str(fixture_path)
        self._responses = {}
        with open(fixture_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                self._responses[row["digest"]] = row["response"]

    def complete(self, request):
        digest = request_digest(request)
        row = self._responses.get(digest)
        if row is None:
            raise FixtureMiss(digest)
        return CompletionResult(row["text"], row.get("usage", {}))


class ScriptedTransport:
    """Hands out a fixed script of responses, in order; used by tests."""

    def __init__(self, responses):
        self._script = list(responses)
        self._cursor = 0
        self.calls = []

    def complete(self, request):
        self.calls.append(request)
        if self._cursor >= len(self._script):
            raise LlmUnavailable("scripted transport ran out of responses")
        item = self._script[self._cursor]
        self._cursor += 1
        if isinstance(item, str):
            return CompletionResult(item)
        return CompletionResult(item["text"], item.get("usage", {}))


class RecordingTransport:
    """Wraps another transport and appends each exchange to a fixture file."""

    def __init__(self, inner, fixture_path):
        self.inner = inner
        self.fixture_path = str(fixture_path)

    def complete(self, request):
        result = self.inner.complete(request)
        row = {
            "digest": request_digest(request),
            "request": request.to_dict(),
            "response": {"text": result.text, "usage": result.usage},
        }
        with open(self.fixture_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        return result


def complete(request, transport):
    """Run one chat completion over whichever transport was configured."""
    if transport is None:
        raise LlmUnavailable("no language-model transport is configured")
    return transport.complete(request)
