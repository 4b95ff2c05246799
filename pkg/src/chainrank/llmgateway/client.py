"""Chat-completion gateway: rendering, retries with backoff, in-flight bound.

Every LLM call in the package goes through :class:`LLMClient.complete`.
"""

from __future__ import annotations

import collections
import enum
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field

import httpx

from ..exceptions import (
    ConfigurationError,
    ParseError,
    PermanentBackendError,
    TransportError,
)
from .templates import TemplateStore

log = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "RCC_LLM_API_KEY"
GENERATION_TEMPERATURE = 0.7
JUDGE_TEMPERATURE = 0.0


class BackendKind(str, enum.Enum):
    HTTP_CHAT = "HTTP_CHAT"
    MOCK = "MOCK"


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind = BackendKind.MOCK
    endpoint: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV
    model: str = "default"
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    backoff_jitter: float = 0.25

    def __post_init__(self):
        kind = self.kind.value if isinstance(self.kind, BackendKind) else str(self.kind).upper()
        try:
            object.__setattr__(self, "kind", BackendKind(kind))
        except ValueError:
            raise ConfigurationError(f"unknown backend kind {self.kind!r}") from None
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigurationError("max_in_flight must be >= 1")
        if self.kind is BackendKind.HTTP_CHAT and not self.endpoint:
            raise ConfigurationError("HTTP_CHAT backend needs an endpoint URL")


@dataclass(frozen=True)
class CompletionRequest:
    template_id: str
    bindings: dict = field(default_factory=dict)
    max_tokens: int = 1024
    temperature: float = GENERATION_TEMPERATURE
    model: str | None = None

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ConfigurationError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")


@dataclass(frozen=True)
class RenderedCall:
    """What a backend receives: the request plus its rendered messages."""

    request: CompletionRequest
    system: str
    user: str
    model: str

    @property
    def template_id(self):
        return self.request.template_id.split("@", 1)[0]

    @property
    def bindings(self):
        return self.request.bindings

    def payload(self):
        messages = []
        if self.system:
            messages.append({"role": "system", "content": self.system})
        messages.append({"role": "user", "content": self.user})
        return {
            "model": self.model,
            "messages": messages,
            "temperature": self.request.temperature,
            "max_tokens": self.request.max_tokens,
        }


class BackendHTTPError(Exception):
    """Non-200 status from a backend; ``complete`` decides whether to retry."""

    def __init__(self, status, body=""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class BackendUnavailable(Exception):
    """Connection-level failure (refused, reset, timeout)."""


def is_retryable(status):
    return status == 429 or 500 <= status < 600


def extract_chat_text(data):
    try:
        content = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ParseError("chat completion response has no choices[0].message.content") from None
    if not isinstance(content, str):
        raise ParseError("chat completion content is not a string")
    return content


class HttpChatBackend:
    """POSTs an OpenAI-style chat-completion body to ``config.endpoint``."""

    def __init__(self, config, transport=None):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout, transport=transport)

    def api_key(self):
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise ConfigurationError(
                f"credential environment variable {self.config.api_key_env} is not set"
            )
        return key

    def send(self, call):
        headers = {"Authorization": f"Bearer {self.api_key()}"}
        try:
            resp = self._client.post(self.config.endpoint, json=call.payload(), headers=headers)
        except httpx.TransportError as exc:
            raise BackendUnavailable(str(exc)) from exc
        if resp.status_code != 200:
            raise BackendHTTPError(resp.status_code, resp.text)
        try:
            data = resp.json()
        except ValueError:
            raise ParseError("backend returned a non-JSON body") from None
        return extract_chat_text(data)

    def close(self):
        self._client.close()


class FifoLimiter:
    """Counting semaphore that admits waiters in arrival order."""

    def __init__(self, limit):
        self.limit = limit
        self._active = 0
        self._queue = collections.deque()
        self._cond = threading.Condition()

    def __enter__(self):
        with self._cond:
            ticket = object()
            self._queue.append(ticket)
            while self._queue[0] is not ticket or self._active >= self.limit:
                self._cond.wait()
            self._queue.popleft()
            self._active += 1
            self._cond.notify_all()
        return self

    def __exit__(self, *exc):
        with self._cond:
            self._active -= 1
            self._cond.notify_all()


class LLMClient:
    """Renders templates and sends them to a backend with retry and backoff.

    Retries happen on connection failures, HTTP 429 and 5xx; other 4xx are
    permanent. Parse-level problems in the returned text are never retried
    here, callers own those.
    """

    def __init__(self, config=None, backend=None, templates=None, sleep=time.sleep, seed=None):
        self.config = config or BackendConfig()
        if backend is None:
            if self.config.kind is BackendKind.MOCK:
                from .mock import faithful_mock

                backend = faithful_mock()
            else:
                backend = HttpChatBackend(self.config)
        self.backend = backend
        self.templates = templates or TemplateStore()
        self._sleep = sleep
        self._jitter = random.Random(seed)
        self._jitter_lock = threading.Lock()
        self._limiter = FifoLimiter(self.config.max_in_flight)

    def render(self, request):
        tpl = self.templates.get(request.template_id)
        system, user = tpl.render(request.bindings)
        return RenderedCall(request, system, user, request.model or self.config.model)

    def _delay(self, attempt):
        cfg = self.config
        with self._jitter_lock:
            u = self._jitter.random()
        return cfg.backoff_base * cfg.backoff_factor**attempt * (1.0 + cfg.backoff_jitter * u)

    def complete(self, request):
        call = self.render(request)
        if isinstance(self.backend, HttpChatBackend):
            self.backend.api_key()
        attempts = []
        for attempt in range(self.config.max_retries + 1):
            try:
                with self._limiter:
                    return self.backend.send(call)
            except BackendHTTPError as exc:
                if not is_retryable(exc.status):
                    raise PermanentBackendError(str(exc), status=exc.status) from exc
                attempts.append(f"attempt {attempt + 1}: HTTP {exc.status}")
            except BackendUnavailable as exc:
                attempts.append(f"attempt {attempt + 1}: {exc}")
            if attempt < self.config.max_retries:
                delay = self._delay(attempt)
                log.debug("retrying %s in %.2fs (%s)", call.template_id, delay, attempts[-1])
                self._sleep(delay)
        raise TransportError(
            f"{call.template_id}: giving up after {len(attempts)} attempts ({attempts[-1]})",
            attempts=attempts,
        )


def complete(request, config, backend=None):
    """One-shot convenience wrapper around :meth:`LLMClient.complete`."""
    return LLMClient(config, backend).complete(request)
