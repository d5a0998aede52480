"""Extraction prompt construction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional

from ..selection import SelectedContext
from ..template import FieldSpec, Template
from .clients import ChatRequest
from .schema import ToolSchema, build_tool_schema

MODES = ("plain", "cot")

SYSTEM_TEXT = (
    "You are a careful analyst who extracts structured metadata from business and legal documents. "
    "Use only the document excerpts you are given. If a value is not stated or cannot be derived "
    "from the excerpts, answer null for that field."
)

COT_INSTRUCTIONS = (
    "Before answering, reason step by step. Put each reasoning step in its own "
    "<thinking>...</thinking> block: locate the relevant excerpt, quote the supporting text, "
    "and work out any date or amount calculations explicitly. After the last </thinking> "
    "block, give the final answer."
)

CONTEXT_BEGIN = "<document>"
CONTEXT_END = "</document>"


@dataclass(frozen=True)
class Prompt:
    system_text: str
    user_text: str
    mode: str = "plain"

    def to_request(self, template: Template, tool_use: bool = True, model: str = "",
                   temperature: float = 0.0, metadata: Optional[Mapping[str, str]] = None,
                   tool: Optional[ToolSchema] = None) -> ChatRequest:
        tools = ()
        choice = None
        if tool_use:
            tool = tool or build_tool_schema(template)
            tools = (tool.to_dict(),)
            choice = tool.name
        return ChatRequest(
            messages=({"role": "system", "content": self.system_text},
                      {"role": "user", "content": self.user_text}),
            tools=tools,
            tool_choice=choice,
            temperature=temperature,
            model=model,
            metadata=dict(metadata or {}),
        )


def describe_field(spec: FieldSpec) -> str:
    kind = spec.value_type
    if spec.options:
        kind += " (one of: " if kind == "enum" else " (any of: "
        kind += ", ".join(spec.options) + ")"
    elif kind == "date":
        kind += " (YYYY-MM-DD)"
    elif kind == "array":
        kind += " (list of strings)"
    return f"- {spec.key} [{kind}]: {spec.prompt}"


def render_context(context: SelectedContext) -> str:
    parts = [CONTEXT_BEGIN]
    for chunk in context.chunks:
        parts.append(f'<chunk index="{chunk.index}">\n{chunk.text}\n</chunk>')
    parts.append(CONTEXT_END)
    return "\n".join(parts)


def build_prompt(context: SelectedContext, template: Template, mode: str = "plain",
                 prior: Optional[Mapping[str, object]] = None, tool_use: bool = True) -> Prompt:
    """Assemble the extraction prompt.

    ``prior`` maps field keys to values from an earlier attempt; non-null ones are
    listed as already known and null ones are named as still missing.
    """
    if mode not in MODES:
        raise ValueError(f"unknown prompt mode {mode!r}")
    if not context.chunks:
        raise ValueError("cannot build a prompt from an empty context")
    sections = [
        "Document excerpts (in document order):",
        render_context(context),
        "",
        "Extract the following fields:",
        *(describe_field(f) for f in template.fields),
    ]
    if prior is not None:
        known = [(k, prior.get(k)) for k in template.keys if prior.get(k) is not None]
        missing = [k for k in template.keys if prior.get(k) is None]
        sections += ["", "Values already extracted in a previous attempt. Keep them unless the "
                         "excerpts contradict them:"]
        sections += [f"- {k}: {json.dumps(v, ensure_ascii=False)}" for k, v in known] or ["- (none)"]
        sections += ["", "Fields still missing. Look again carefully and fill them if the excerpts "
                         "support a value:"]
        sections += [f"- {k}" for k in missing] or ["- (none)"]
    sections.append("")
    if mode == "cot":
        sections.append(COT_INSTRUCTIONS)
    if tool_use:
        sections.append("Report every field by calling the extract_metadata tool; use null for "
                        "unknown values.")
    else:
        sections.append("Finish with a single JSON object whose keys are exactly the field keys "
                        "above; use null for unknown values.")
    return Prompt(SYSTEM_TEXT, "\n".join(sections), mode)
