"""Turn raw model output into typed extraction results."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Any, Dict, List, Optional, Tuple

from ..dates import canonical_date
from ..template import FieldSpec, Template
from .clients import LLMResponse
from .schema import TOOL_NAME, field_errors

_THINKING_RE = re.compile(r"<thinking>(.*?)</thinking>", re.S | re.I)
_NULL_STRINGS = {"", "null", "none", "n/a", "na", "not found", "not stated", "unknown"}


class ParseFailure(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass
class ExtractionResult:
    values: Dict[str, Any]
    thinking_trace: List[str] = field(default_factory=list)
    attempt: int = 0
    strategy_tag: str = ""
    diagnostics: List[Dict[str, str]] = field(default_factory=list)

    def missing(self) -> List[str]:
        return [k for k, v in self.values.items() if v is None]

    def non_null_count(self) -> int:
        return sum(1 for v in self.values.values() if v is not None)

    def to_dict(self) -> dict:
        return {
            "values": dict(self.values),
            "thinking_trace": list(self.thinking_trace),
            "attempt": self.attempt,
            "strategy_tag": self.strategy_tag,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionResult":
        return cls(dict(d["values"]), list(d.get("thinking_trace", [])), d.get("attempt", 0),
                   d.get("strategy_tag", ""), list(d.get("diagnostics", [])))


def _to_decimal(value) -> Optional[Decimal]:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return Decimal(str(value))
    if isinstance(value, str):
        cleaned = re.sub(r"[\s,$€£]", "", value)
        cleaned = re.sub(r"^(?:usd|eur|gbp)", "", cleaned, flags=re.I)
        try:
            d = Decimal(cleaned)
        except InvalidOperation:
            return None
        return d if d.is_finite() else None
    return None


def coerce_value(spec: FieldSpec, value) -> Tuple[Any, Optional[str]]:
    """Coerce a raw value to the field's type; returns (value, diagnostic-or-None).

    Null-like strings become None without a diagnostic. Anything that cannot be
    coerced becomes None with a diagnostic.
    """
    if value is None:
        return None, None
    if isinstance(value, str) and value.strip().casefold() in _NULL_STRINGS:
        return None, None
    t = spec.value_type
    if t == "string":
        if isinstance(value, (dict, list)):
            return None, "expected a string"
        return str(value).strip(), None
    if t == "date":
        iso = canonical_date(value) if isinstance(value, str) else None
        return (iso, None) if iso else (None, "unrecognized date")
    if t in ("integer", "number"):
        d = _to_decimal(value)
        if d is None:
            return None, f"expected {t}"
        if t == "integer":
            if d != d.to_integral_value():
                return None, "expected integer"
            return int(d), None
        return (value if isinstance(value, int) else float(d)), None
    if t == "enum":
        if not isinstance(value, str):
            return None, "value not in options"
        for opt in spec.options:
            if opt.casefold() == value.strip().casefold():
                return opt, None
        return None, "value not in options"
    if t == "multiSelect":
        items = [value] if isinstance(value, str) else value
        if not isinstance(items, list):
            return None, "expected a list of options"
        out = []
        for item in items:
            match = next((o for o in spec.options
                          if isinstance(item, str) and o.casefold() == item.strip().casefold()), None)
            if match is None:
                return None, "value not in options"
            if match not in out:
                out.append(match)
        return (out or None), None
    if t == "array":
        items = [value] if isinstance(value, str) else value
        if not isinstance(items, list) or any(isinstance(x, (dict, list)) for x in items):
            return None, "expected a list of strings"
        out = [str(x).strip() for x in items if x is not None and str(x).strip()]
        return (out or None), None
    raise AssertionError(t)


def split_thinking(text: str) -> Tuple[List[str], str]:
    """Extract ``<thinking>`` segments; returns (segments, text without them)."""
    segments = [s.strip() for s in _THINKING_RE.findall(text)]
    return segments, _THINKING_RE.sub("", text)


def last_json_object(text: str) -> Optional[dict]:
    """The last top-level JSON object embedded in ``text``."""
    decoder = json.JSONDecoder()
    found = None
    i = text.find("{")
    while i != -1:
        try:
            obj, end = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            i = text.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            found = obj
        i = text.find("{", end)
    return found


def _payload_from_tool(response: LLMResponse, tool_name: str):
    for call in response.tool_calls:
        if call.name != tool_name:
            continue
        args = call.arguments
        if isinstance(args, str):
            try:
                args = json.loads(args)
            except json.JSONDecodeError:
                continue
        if isinstance(args, dict):
            return args
    return None


def parse_response(raw, template: Template, tool_name: str = TOOL_NAME) -> ExtractionResult:
    """Parse a model response into an ExtractionResult over exactly the template keys.

    Tool-call arguments are preferred and validated field by field against the
    tool schema; otherwise the last JSON object in the text is used with lenient
    coercion. ``<thinking>`` blocks are collected into the trace either way.
    """
    if isinstance(raw, str):
        raw = LLMResponse(text=raw)
    trace, stripped = split_thinking(raw.text or "")
    payload = _payload_from_tool(raw, tool_name)
    strict = payload is not None
    if payload is None:
        payload = last_json_object(stripped)
    if payload is None:
        raise ParseFailure("no parsable payload in response", raw.text or json.dumps(raw.to_dict()))

    values: Dict[str, Any] = {}
    diags: List[Dict[str, str]] = []
    for spec in template.fields:
        if spec.key not in payload:
            values[spec.key] = None
            diags.append({"field": spec.key, "message": "missing from payload"})
            continue
        value = payload[spec.key]
        if strict:
            errors = field_errors(spec, value)
            if errors:
                values[spec.key] = None
                prefix = "value not in options; " if spec.options else ""
                diags.append({"field": spec.key, "message": f"{prefix}schema violation: {errors[0]}"})
                continue
        coerced, problem = coerce_value(spec, value)
        values[spec.key] = coerced
        if problem:
            diags.append({"field": spec.key, "message": problem})
    for extra in sorted(set(payload) - set(template.keys)):
        diags.append({"field": "", "message": f"ignored unexpected key {extra!r}"})
    return ExtractionResult(values, trace, diagnostics=diags)
