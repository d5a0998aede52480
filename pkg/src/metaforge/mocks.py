"""Offline stand-ins for extraction and grading models.

``GroundedClient`` answers a field correctly exactly when its ground-truth value
appears in the supplied document excerpts, which makes extraction quality a pure
function of chunk selection. The judges work on the grading request format from
``metaforge.judge``.
"""

from __future__ import annotations

import json
import re
from typing import Any, Collection, Dict, Mapping, Optional

from .evaluation import GroundTruth, values_match
from .judge import GRADE_TOOL, agent_values_from_request
from .llm.clients import ChatRequest, LLMResponse
from .llm.prompts import CONTEXT_BEGIN, CONTEXT_END
from .llm.schema import TOOL_NAME

_WS = re.compile(r"\s+")


def _norm(text: str) -> str:
    return _WS.sub(" ", text.casefold()).strip()


def context_text(request: ChatRequest) -> str:
    user = request.user_text
    start = user.find(CONTEXT_BEGIN)
    end = user.rfind(CONTEXT_END)
    return user[start + len(CONTEXT_BEGIN):end] if start != -1 and end > start else ""


def _field_types(request: ChatRequest, tool_name: str) -> Dict[str, str]:
    for tool in request.tools:
        if tool.get("name") == tool_name:
            props = tool["parameters"]["properties"]
            out = {}
            for key, schema in props.items():
                sub = schema.get("properties", {}).get("corrected_value", schema)
                types = sub.get("type", [])
                out[key] = "array" if "array" in types else "scalar"
            return out
    return {}


def grounded_values(truth: Mapping[str, list], context: str, kinds: Mapping[str, str]) -> Dict[str, Any]:
    """Truth values that occur (case/whitespace-insensitively) in ``context``."""
    ctx = _norm(context)
    out: Dict[str, Any] = {}
    for key, kind in kinds.items():
        found = [v for v in truth.get(key, []) if _norm(str(v)) and _norm(str(v)) in ctx]
        if kind == "array":
            out[key] = found or None
        else:
            out[key] = found[0] if found else None
    return out


class GroundedClient:
    """Extraction mock that is perfect given its context.

    Requests must carry ``metadata["doc_id"]``. Fields in ``omit_first`` are
    withheld on attempt 0 (``metadata["attempt"] == "0"``) to exercise retries.
    Without a tool in the request the answer is a JSON object in text, preceded
    by ``<thinking>`` blocks when the prompt asks for them.
    """

    def __init__(self, truth: GroundTruth, template_keys: Optional[Collection[str]] = None,
                 omit_first: Collection[str] = (), tag: str = "grounded-mock"):
        self.truth = truth
        self.template_keys = list(template_keys) if template_keys is not None else None
        self.omit_first = set(omit_first)
        self.tag = tag

    def complete(self, request: ChatRequest) -> LLMResponse:
        doc_id = request.metadata.get("doc_id", "")
        kinds = _field_types(request, TOOL_NAME)
        if not kinds:
            keys = self.template_keys or list(self.truth.get(doc_id, {}))
            kinds = {k: "scalar" for k in keys}
            for k in keys:
                if len(self.truth.get(doc_id, {}).get(k, [])) > 1:
                    kinds[k] = "array"
        values = grounded_values(self.truth.get(doc_id, {}), context_text(request), kinds)
        if request.metadata.get("attempt", "0") == "0":
            for k in self.omit_first:
                if k in values:
                    values[k] = None
        if request.tools:
            return LLMResponse.tool(TOOL_NAME, values)
        text = ""
        if "<thinking>" in request.user_text:
            text += "<thinking>\nLocate each field in the excerpts.\n</thinking>\n"
            text += "<thinking>\nCopy the supported values verbatim.\n</thinking>\n"
        return LLMResponse(text + json.dumps(values, ensure_ascii=False))


class IdentityJudge:
    """Agrees with every agent value at score 1.0."""

    tag = "identity-judge"

    def complete(self, request: ChatRequest) -> LLMResponse:
        agent = agent_values_from_request(request.user_text)
        return LLMResponse.tool(GRADE_TOOL, {k: {"score": 1.0, "corrected_value": v}
                                             for k, v in agent.items()})


class GroundedJudge:
    """Judge that corrects toward ground truth visible in the excerpts.

    When the truth is present in context it is proposed as the corrected value
    and the agent is scored 1.0 on a match, 0.0 otherwise. When it is absent the
    agent value is kept with score 0.5.
    """

    tag = "grounded-judge"

    def __init__(self, truth: GroundTruth):
        self.truth = truth

    def complete(self, request: ChatRequest) -> LLMResponse:
        doc_id = request.metadata.get("doc_id", "")
        agent = agent_values_from_request(request.user_text)
        kinds = _field_types(request, GRADE_TOOL)
        seen = grounded_values(self.truth.get(doc_id, {}), context_text(request), kinds)
        out = {}
        for key, value in agent.items():
            if seen.get(key) is not None:
                ok = values_match(value, seen[key])
                out[key] = {"score": 1.0 if ok else 0.0, "corrected_value": seen[key]}
            else:
                out[key] = {"score": 0.5, "corrected_value": value}
        return LLMResponse.tool(GRADE_TOOL, out)
