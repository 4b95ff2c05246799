"""LLM backend abstraction: templates, retrying chat client and mock backends."""

from .client import (
    GENERATION_TEMPERATURE,
    JUDGE_TEMPERATURE,
    BackendConfig,
    BackendHTTPError,
    BackendKind,
    BackendUnavailable,
    CompletionRequest,
    FifoLimiter,
    HttpChatBackend,
    LLMClient,
    RenderedCall,
    complete,
)
from .mock import MockBackend, faithful_mock, mock_script, mutate_text, numbered, parse_numbered
from .templates import PromptTemplate, TemplateStore

__all__ = [
    "GENERATION_TEMPERATURE",
    "JUDGE_TEMPERATURE",
    "BackendConfig",
    "BackendHTTPError",
    "BackendKind",
    "BackendUnavailable",
    "CompletionRequest",
    "FifoLimiter",
    "HttpChatBackend",
    "LLMClient",
    "MockBackend",
    "PromptTemplate",
    "RenderedCall",
    "TemplateStore",
    "complete",
    "faithful_mock",
    "mock_script",
    "mutate_text",
    "numbered",
    "parse_numbered",
]
