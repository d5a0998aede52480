"""Chat-completion request/response types and client implementations."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Protocol, Sequence, Union

import httpx

from .schema import canonical_json

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "METAFORGE_LLM_ENDPOINT"
KEY_ENV = "METAFORGE_LLM_KEY"


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple
    tools: tuple = ()
    tool_choice: Optional[str] = None
    temperature: float = 0.0
    model: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict, compare=False)

    def body(self) -> dict:
        body: Dict[str, Any] = {
            "messages": [dict(m) for m in self.messages],
            "temperature": self.temperature,
        }
        if self.model:
            body["model"] = self.model
        if self.tools:
            body["tools"] = [{"type": "function", "function": dict(t)} for t in self.tools]
            if self.tool_choice:
                body["tool_choice"] = {"type": "function", "function": {"name": self.tool_choice}}
        return body

    def fingerprint(self) -> str:
        """sha256 of the canonicalized request body (metadata excluded)."""
        return hashlib.sha256(canonical_json(self.body()).encode("utf-8")).hexdigest()

    @property
    def user_text(self) -> str:
        return "\n".join(m["content"] for m in self.messages if m["role"] == "user")


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: Union[dict, str]

    def to_dict(self) -> dict:
        return {"name": self.name, "arguments": self.arguments}


@dataclass(frozen=True)
class LLMResponse:
    text: str = ""
    tool_calls: tuple = ()

    def to_dict(self) -> dict:
        return {"text": self.text, "tool_calls": [t.to_dict() for t in self.tool_calls]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LLMResponse":
        calls = tuple(ToolCall(t["name"], t["arguments"]) for t in d.get("tool_calls") or ())
        return cls(d.get("text") or "", calls)

    @classmethod
    def tool(cls, name: str, arguments: dict, text: str = "") -> "LLMResponse":
        return cls(text, (ToolCall(name, arguments),))


class LLMClient(Protocol):
    tag: str

    def complete(self, request: ChatRequest) -> LLMResponse: ...


class LLMTransportError(RuntimeError):
    def __init__(self, message: str, attempts: int, status: Optional[int] = None):
        super().__init__(message)
        self.attempts = attempts
        self.status = status


class MockClient:
    """Scripted client: responses keyed by request fingerprint, else ``handler(request)``."""

    tag = "mock"

    def __init__(self, script: Optional[Mapping[str, LLMResponse]] = None,
                 handler: Optional[Callable[[ChatRequest], LLMResponse]] = None, tag: str = "mock"):
        self.script = dict(script or {})
        self.handler = handler
        self.tag = tag
        self.calls: List[ChatRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> LLMResponse:
        with self._lock:
            self.calls.append(request)
        fp = request.fingerprint()
        if fp in self.script:
            return self.script[fp]
        if self.handler is not None:
            return self.handler(request)
        raise KeyError(f"no scripted response for request {fp[:12]}")


class SequenceClient:
    """Returns the scripted responses in order, one per call."""

    tag = "sequence"

    def __init__(self, responses: Sequence[LLMResponse]):
        self.responses = list(responses)
        self.calls: List[ChatRequest] = []

    def complete(self, request: ChatRequest) -> LLMResponse:
        if len(self.calls) >= len(self.responses):
            raise IndexError("scripted responses exhausted")
        self.calls.append(request)
        return self.responses[len(self.calls) - 1]


class ReplayClient:
    """Serves recorded responses from ``<dir>/<fingerprint>.json``.

    With ``record_from`` set, misses are forwarded to that client and saved.
    """

    def __init__(self, fixtures_dir, record_from: Optional[LLMClient] = None, tag: str = "replay"):
        self.dir = Path(fixtures_dir)
        self.record_from = record_from
        self.tag = tag

    def complete(self, request: ChatRequest) -> LLMResponse:
        path = self.dir / f"{request.fingerprint()}.json"
        if path.exists():
            return LLMResponse.from_dict(json.loads(path.read_text(encoding="utf-8"))["response"])
        if self.record_from is None:
            raise KeyError(f"no replay fixture {path.name}")
        resp = self.record_from.complete(request)
        self.dir.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"request": request.body(), "response": resp.to_dict()},
                                   indent=2, sort_keys=True), encoding="utf-8")
        return resp


class HttpClient:
    """Chat-completions over HTTP (OpenAI-compatible wire format).

    Transport failures, 429 and 5xx responses are retried up to ``max_retries``
    times with exponential backoff. At most ``max_in_flight`` requests run at once
    across threads sharing this client.
    """

    def __init__(self, model: str, endpoint: Optional[str] = None, api_key: Optional[str] = None,
                 max_retries: int = 3, backoff: float = 1.0, timeout: float = 120.0,
                 max_in_flight: int = 4, transport: Optional[httpx.BaseTransport] = None):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ValueError(f"no LLM endpoint configured (set {ENDPOINT_ENV})")
        api_key = api_key or os.environ.get(KEY_ENV)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.model = model
        self.tag = model or "http"
        self.max_retries = max_retries
        self.backoff = backoff
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def complete(self, request: ChatRequest) -> LLMResponse:
        body = request.body()
        body.setdefault("model", self.model)
        status = None
        for attempt in range(self.max_retries + 1):
            try:
                with self._sem:
                    resp = self._http.post(self.endpoint, json=body)
                status = resp.status_code
                if status == 429 or status >= 500:
                    raise LLMTransportError(f"HTTP {status}", attempt + 1, status)
                if status >= 400:
                    raise LLMTransportError(f"HTTP {status}: {resp.text[:200]}", attempt + 1, status)
                return parse_chat_completion(resp.json())
            except (httpx.TransportError, LLMTransportError) as exc:
                retryable = isinstance(exc, httpx.TransportError) or status == 429 or (
                    status is not None and status >= 500)
                if not retryable or attempt == self.max_retries:
                    if isinstance(exc, LLMTransportError):
                        exc.attempts = attempt + 1
                        raise
                    raise LLMTransportError(str(exc), attempt + 1, status) from exc
                delay = self.backoff * (2 ** attempt)
                logger.warning("LLM request failed (%s); retry %d in %.1fs", exc, attempt + 1, delay)
                time.sleep(delay)
        raise AssertionError("unreachable")


def parse_chat_completion(payload: Mapping) -> LLMResponse:
    message = payload["choices"][0]["message"]
    calls = []
    for tc in message.get("tool_calls") or ():
        fn = tc.get("function", tc)
        calls.append(ToolCall(fn["name"], fn.get("arguments", "")))
    return LLMResponse(message.get("content") or "", tuple(calls))
