"""Prompting, tool schemas, LLM clients, response parsing and retries."""

from .clients import (ChatRequest, HttpClient, LLMClient, LLMResponse, LLMTransportError, MockClient,
                      ReplayClient, SequenceClient, ToolCall)
from .parsing import ExtractionResult, ParseFailure, coerce_value, parse_response
from .prompts import Prompt, build_prompt
from .retry import ExtractionFailed, extract_with_retry, merge_results
from .schema import ToolSchema, build_tool_schema, canonical_json

__all__ = [
    "ChatRequest", "HttpClient", "LLMClient", "LLMResponse", "LLMTransportError", "MockClient",
    "ReplayClient", "SequenceClient", "ToolCall", "ExtractionResult", "ParseFailure", "coerce_value",
    "parse_response", "Prompt", "build_prompt", "ExtractionFailed", "extract_with_retry",
    "merge_results", "ToolSchema", "build_tool_schema", "canonical_json",
]
