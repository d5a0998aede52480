"""JSON-schema tool definitions derived from extraction templates."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List

from jsonschema import Draft202012Validator, FormatChecker

from ..dates import parse_date
from ..template import FieldSpec, Template

TOOL_NAME = "extract_metadata"
TOOL_DESCRIPTION = "Record the metadata values extracted from the document."

_format_checker = FormatChecker(formats=())


@_format_checker.checks("date")
def _is_date(value) -> bool:
    # Non-strings are left to the "type" keyword.
    return not isinstance(value, str) or parse_date(value) is not None


def field_schema(spec: FieldSpec) -> dict:
    t = spec.value_type
    if t == "date":
        schema = {"type": ["string", "null"], "format": "date"}
    elif t == "enum":
        schema = {"type": ["string", "null"], "enum": [*spec.options, None]}
    elif t == "multiSelect":
        schema = {"type": ["array", "null"], "items": {"type": "string", "enum": list(spec.options)},
                  "uniqueItems": True}
    elif t == "array":
        schema = {"type": ["array", "null"], "items": {"type": "string"}}
    elif t in ("integer", "number"):
        schema = {"type": [t, "null"]}
    else:
        schema = {"type": ["string", "null"]}
    if spec.prompt:
        schema["description"] = spec.prompt
    return schema


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    parameters: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "parameters": self.parameters}

    def canonical(self) -> str:
        return canonical_json(self.to_dict())

    def validator(self) -> Draft202012Validator:
        return Draft202012Validator(self.parameters, format_checker=_format_checker)


def canonical_json(obj) -> str:
    """Key-sorted compact JSON; lists named ``required`` are sorted too."""
    def norm(o):
        if isinstance(o, dict):
            return {k: (sorted(v) if k == "required" and isinstance(v, list) else norm(v))
                    for k, v in o.items()}
        if isinstance(o, list):
            return [norm(x) for x in o]
        return o
    return json.dumps(norm(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def object_schema(properties: Dict[str, dict]) -> dict:
    return {
        "type": "object",
        "properties": properties,
        "required": list(properties),
        "additionalProperties": False,
    }


def build_tool_schema(template: Template, name: str = TOOL_NAME,
                      description: str = TOOL_DESCRIPTION) -> ToolSchema:
    params = object_schema({f.key: field_schema(f) for f in template.fields})
    Draft202012Validator.check_schema(params)
    return ToolSchema(name, description, params)


def field_errors(spec: FieldSpec, value) -> List[str]:
    """Schema violations of one field value, as messages (empty when valid)."""
    v = Draft202012Validator(field_schema(spec), format_checker=_format_checker)
    return [e.message for e in v.iter_errors(value)]
