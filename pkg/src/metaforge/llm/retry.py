"""Extraction with retries that feed earlier answers back into the prompt."""

from __future__ import annotations

import logging
from typing import List, Mapping, Optional

from ..selection import SelectedContext
from ..template import Template
from .clients import LLMClient
from .parsing import ExtractionResult, ParseFailure, parse_response
from .prompts import build_prompt
from .schema import build_tool_schema

logger = logging.getLogger(__name__)


class ExtractionFailed(RuntimeError):
    def __init__(self, message: str, raw_responses: List[str]):
        super().__init__(message)
        self.raw_responses = raw_responses


def merge_results(prior: ExtractionResult, new: ExtractionResult) -> ExtractionResult:
    """Combine attempts: a non-null newer value wins, otherwise the prior value is kept."""
    values = {k: (new.values.get(k) if new.values.get(k) is not None else v)
              for k, v in prior.values.items()}
    return ExtractionResult(
        values=values,
        thinking_trace=prior.thinking_trace + new.thinking_trace,
        attempt=new.attempt,
        strategy_tag=prior.strategy_tag,
        diagnostics=prior.diagnostics + new.diagnostics,
    )


def extract_with_retry(client: LLMClient, context: SelectedContext, template: Template,
                       mode: str = "plain", max_retries: int = 0, tool_use: bool = True,
                       model: str = "", metadata: Optional[Mapping[str, str]] = None,
                       strategy_tag: str = "") -> ExtractionResult:
    """Extract fields, retrying while any remain null and retries are left.

    Each retry shows the model the current merged values. Attempts whose output
    cannot be parsed are skipped; if none parse, ExtractionFailed carries every
    raw response.
    """
    if max_retries < 0:
        raise ValueError("max_retries must be nonnegative")
    tool = build_tool_schema(template)
    current: Optional[ExtractionResult] = None
    raws: List[str] = []
    for attempt in range(max_retries + 1):
        prior = current.values if current is not None else None
        prompt = build_prompt(context, template, mode, prior=prior, tool_use=tool_use)
        request = prompt.to_request(template, tool_use=tool_use, model=model,
                                    metadata=dict(metadata or {}, attempt=str(attempt)), tool=tool)
        response = client.complete(request)
        try:
            result = parse_response(response, template, tool.name)
        except ParseFailure as exc:
            logger.warning("attempt %d: %s", attempt, exc)
            raws.append(exc.raw)
            continue
        raws.append(response.text)
        result.attempt = attempt
        result.strategy_tag = strategy_tag
        result.diagnostics = [dict(d, attempt=attempt) for d in result.diagnostics]
        current = result if current is None else merge_results(current, result)
        if not current.missing():
            break
    if current is None:
        raise ExtractionFailed(f"no parsable response in {len(raws)} attempt(s)", raws)
    return current
