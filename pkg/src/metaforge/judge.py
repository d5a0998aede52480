"""LLM-as-judge grading of extractions and grader/agent/ground-truth match rates."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional

from .evaluation import GroundTruth, values_match
from .llm.clients import ChatRequest, LLMClient, LLMResponse
from .llm.parsing import ExtractionResult, ParseFailure, coerce_value, last_json_object
from .llm.prompts import SYSTEM_TEXT, describe_field, render_context
from .llm.schema import ToolSchema, field_schema, object_schema
from .selection import SelectedContext
from .template import Template

logger = logging.getLogger(__name__)

GRADE_TOOL = "grade_metadata"
AGENT_BEGIN = "<agent_values>"
AGENT_END = "</agent_values>"

GRADING_INSTRUCTIONS = """\
You are reviewing the output of a metadata extraction agent. You see the same document
excerpts and field definitions the agent saw, followed by the values it extracted.

For every field:
1. Check the agent's value against the excerpts.
2. Give a score between 0 and 1: 1 means the value is fully supported and complete,
   0 means it is wrong or unsupported. A null value scores 1 only if the excerpts
   really do not contain the information.
3. Give corrected_value: the value you believe is correct. Repeat the agent's value
   when you agree with it; use null when the information is absent.

Report all fields by calling the grade_metadata tool."""


@dataclass
class FieldGrade:
    score: float
    agent_value: Any
    corrected_value: Any


@dataclass
class GradeReport:
    grades: Dict[str, FieldGrade]
    raw_trace: str = ""
    diagnostics: List[Dict[str, str]] = field(default_factory=list)

    @property
    def corrected_values(self) -> Dict[str, Any]:
        return {k: g.corrected_value for k, g in self.grades.items()}

    def records(self, doc_id: str) -> List[dict]:
        """One JSON-lines record per field."""
        return [
            {"doc_id": doc_id, "field": k, "score": g.score, "agent_value": g.agent_value,
             "corrected_value": g.corrected_value}
            for k, g in self.grades.items()
        ]

    @classmethod
    def from_records(cls, records: List[dict]) -> "GradeReport":
        return cls({r["field"]: FieldGrade(r["score"], r["agent_value"], r["corrected_value"])
                    for r in records})


def grading_tool_schema(template: Template) -> ToolSchema:
    props = {}
    for f in template.fields:
        props[f.key] = {
            "type": "object",
            "properties": {"score": {"type": "number", "minimum": 0, "maximum": 1},
                           "corrected_value": field_schema(f)},
            "required": ["score", "corrected_value"],
        }
    return ToolSchema(GRADE_TOOL, "Record a score and corrected value for every field.",
                      object_schema(props))


def build_grading_request(context: SelectedContext, template: Template, agent_values: Mapping,
                          model: str = "", metadata: Optional[Mapping[str, str]] = None):
    agent_json = json.dumps({k: agent_values.get(k) for k in template.keys}, ensure_ascii=False,
                            indent=2)
    user = "\n".join([
        GRADING_INSTRUCTIONS,
        "",
        "Document excerpts (in document order):",
        render_context(context),
        "",
        "Fields:",
        *(describe_field(f) for f in template.fields),
        "",
        "Agent's extracted values:",
        AGENT_BEGIN,
        agent_json,
        AGENT_END,
    ])
    tool = grading_tool_schema(template)
    return ChatRequest(
        messages=({"role": "system", "content": SYSTEM_TEXT}, {"role": "user", "content": user}),
        tools=(tool.to_dict(),),
        tool_choice=tool.name,
        model=model,
        metadata=dict(metadata or {}),
    )


def agent_values_from_request(user_text: str) -> Dict[str, Any]:
    m = re.search(re.escape(AGENT_BEGIN) + r"\s*(.*?)\s*" + re.escape(AGENT_END), user_text, re.S)
    return json.loads(m.group(1)) if m else {}


def _grade_payload(response: LLMResponse) -> Optional[dict]:
    for call in response.tool_calls:
        if call.name == GRADE_TOOL:
            args = call.arguments
            if isinstance(args, str):
                try:
                    args = json.loads(args)
                except json.JSONDecodeError:
                    continue
            if isinstance(args, dict):
                return args
    return last_json_object(response.text or "")


def parse_grade(response: LLMResponse, template: Template, agent_values: Mapping) -> GradeReport:
    payload = _grade_payload(response)
    if payload is None:
        raise ParseFailure("no parsable grade payload", response.text or json.dumps(response.to_dict()))
    grades: Dict[str, FieldGrade] = {}
    diags: List[Dict[str, str]] = []
    for spec in template.fields:
        agent = agent_values.get(spec.key)
        entry = payload.get(spec.key)
        if not isinstance(entry, Mapping):
            diags.append({"field": spec.key, "message": "no grade returned; score set to 0"})
            grades[spec.key] = FieldGrade(0.0, agent, agent)
            continue
        raw_score = entry.get("score")
        if isinstance(raw_score, bool) or not isinstance(raw_score, (int, float)):
            diags.append({"field": spec.key, "message": f"invalid score {raw_score!r}; set to 0"})
            score = 0.0
        else:
            score = float(raw_score)
            if score < 0.0 or score > 1.0:
                clamped = min(1.0, max(0.0, score))
                diags.append({"field": spec.key, "message": f"score {score} clamped to {clamped}"})
                score = clamped
        if "corrected_value" in entry:
            corrected, problem = coerce_value(spec, entry["corrected_value"])
            if problem:
                diags.append({"field": spec.key, "message": f"corrected value: {problem}"})
        else:
            corrected = agent
        grades[spec.key] = FieldGrade(score, agent, corrected)
    return GradeReport(grades, raw_trace=response.text or "", diagnostics=diags)


def grade(client: LLMClient, context: SelectedContext, template: Template,
          agent_result: ExtractionResult, model: str = "",
          metadata: Optional[Mapping[str, str]] = None) -> GradeReport:
    """Ask the judge model to score and correct an agent's extraction.

    The judge sees the agent's own context and template plus its values; the
    agent result itself is never modified.
    """
    if set(agent_result.values) != set(template.keys):
        raise ValueError("agent result keys do not match the template")
    agent_values = dict(agent_result.values)
    request = build_grading_request(context, template, agent_values, model, metadata)
    response = client.complete(request)
    return parse_grade(response, template, agent_values)


PairFilter = Callable[[str, str, Any, List[str]], bool]


def agent_mismatch(doc_id: str, key: str, agent_value, truth_values: List[str],
                   field_type: str = "string") -> bool:
    return not values_match(agent_value, truth_values, field_type)


@dataclass
class MatchRates:
    grader_vs_agent: float
    grader_vs_gt: float
    agent_vs_gt: float
    pairs: int

    def to_dict(self) -> dict:
        return {"grader_vs_agent": self.grader_vs_agent, "grader_vs_gt": self.grader_vs_gt,
                "agent_vs_gt": self.agent_vs_gt, "pairs": self.pairs}


def _rates(rows) -> MatchRates:
    n = len(rows)
    if not n:
        return MatchRates(0.0, 0.0, 0.0, 0)
    ga = sum(r[0] for r in rows)
    gt = sum(r[1] for r in rows)
    at = sum(r[2] for r in rows)
    return MatchRates(100.0 * ga / n, 100.0 * gt / n, 100.0 * at / n, n)


def match_rates(grades: Mapping[str, Mapping[str, Any]], agents: Mapping[str, Mapping[str, Any]],
                truth: GroundTruth, field_types: Mapping[str, str],
                hard_case_filter: Optional[PairFilter] = None) -> Dict[str, MatchRates]:
    """Percent agreement between grader-corrected values, agent values and ground truth.

    ``grades`` and ``agents`` map doc_id -> field -> value. Returns rates over all
    pairs (``"all"``) and over pairs accepted by ``hard_case_filter``
    (``"hard"``; default: pairs where the agent disagrees with ground truth).
    """
    if set(grades) != set(agents) or set(agents) != set(truth):
        raise ValueError("grades, agent results and ground truth cover different documents")
    rows_all, rows_hard = [], []
    for doc_id in sorted(agents):
        for key, ftype in field_types.items():
            if key not in grades[doc_id] or key not in agents[doc_id] or key not in truth[doc_id]:
                raise ValueError(f"coverage mismatch for ({doc_id!r}, {key!r})")
            g, a, t = grades[doc_id][key], agents[doc_id][key], truth[doc_id][key]
            row = (values_match(g, a, ftype), values_match(g, t, ftype), values_match(a, t, ftype))
            rows_all.append(row)
            is_hard = (hard_case_filter(doc_id, key, a, t) if hard_case_filter is not None
                       else agent_mismatch(doc_id, key, a, t, ftype))
            if is_hard:
                rows_hard.append(row)
    return {"all": _rates(rows_all), "hard": _rates(rows_hard)}
