"""Extraction templates and field-to-entity-label assignment."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .embed import cosine

LABELS = (
    "PERSON", "NORP", "FAC", "ORG", "GPE", "LOC", "PRODUCT", "EVENT", "WORK_OF_ART",
    "LAW", "LANGUAGE", "DATE", "TIME", "PERCENT", "MONEY", "QUANTITY", "ORDINAL", "CARDINAL",
)
VALUE_TYPES = ("string", "integer", "number", "date", "enum", "multiSelect", "array")
OPTION_TYPES = ("enum", "multiSelect")

DEFAULT_LABEL_THRESHOLD = 0.3
DEFAULT_LABEL_TOP_K = 2


class TemplateError(ValueError):
    def __init__(self, reason: str, key: Optional[str] = None):
        self.key = key
        self.reason = reason
        super().__init__(f"field {key!r}: {reason}" if key is not None else reason)


@dataclass(frozen=True)
class FieldSpec:
    key: str
    prompt: str = ""
    value_type: str = "string"
    options: Tuple[str, ...] = ()
    ner_labels: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.key:
            raise TemplateError("key must be non-empty")
        if self.value_type not in VALUE_TYPES:
            raise TemplateError(f"unknown type {self.value_type!r}", self.key)
        if self.value_type in OPTION_TYPES:
            if len(self.options) < 2:
                raise TemplateError(f"{self.value_type} field needs at least 2 options", self.key)
            if len(set(self.options)) != len(self.options):
                raise TemplateError("duplicate options", self.key)
        elif self.options:
            raise TemplateError(f"options are only allowed for enum/multiSelect, not {self.value_type}",
                                self.key)
        bad = [lab for lab in self.ner_labels if lab not in LABELS]
        if bad:
            raise TemplateError(f"unknown entity labels {bad}", self.key)

    @property
    def text(self) -> str:
        """Serialization used whenever a field is embedded or used as a query."""
        return f"{self.key}: {self.prompt}"

    def to_dict(self) -> dict:
        d = {"key": self.key, "prompt": self.prompt, "type": self.value_type}
        if self.options:
            d["options"] = [{"key": o} for o in self.options]
        if self.ner_labels:
            d["ner_labels"] = list(self.ner_labels)
        return d


@dataclass(frozen=True)
class Template:
    fields: Tuple[FieldSpec, ...]

    def __post_init__(self):
        if not self.fields:
            raise TemplateError("template must have at least one field")
        seen = set()
        for f in self.fields:
            if f.key in seen:
                raise TemplateError("duplicate key", f.key)
            seen.add(f.key)

    @property
    def keys(self) -> List[str]:
        return [f.key for f in self.fields]

    def __getitem__(self, key: str) -> FieldSpec:
        for f in self.fields:
            if f.key == key:
                return f
        raise KeyError(key)

    def __len__(self) -> int:
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    @property
    def text(self) -> str:
        """All fields' ``key: prompt`` strings joined in template order."""
        return "\n".join(f.text for f in self.fields)

    def to_dict(self) -> dict:
        return {"fields": [f.to_dict() for f in self.fields]}


def _parse_options(raw, key) -> Tuple[str, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise TemplateError("options must be a list", key)
    out = []
    for opt in raw:
        if isinstance(opt, dict) and "key" in opt:
            out.append(str(opt["key"]))
        elif isinstance(opt, str):
            out.append(opt)
        else:
            raise TemplateError(f"malformed option {opt!r}", key)
    return tuple(out)


def parse_template(data: Union[bytes, str, dict]) -> Template:
    """Parse and validate a template document.

    Accepts raw JSON (bytes or str) or an already-decoded mapping. Unknown keys
    are ignored and a missing ``type`` means ``string``.
    """
    if isinstance(data, (bytes, str)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise TemplateError(f"malformed JSON: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("fields"), list):
        raise TemplateError("template must be an object with a 'fields' array")
    specs = []
    for i, raw in enumerate(data["fields"]):
        if not isinstance(raw, dict):
            raise TemplateError(f"field #{i} is not an object")
        key = raw.get("key")
        if not isinstance(key, str) or not key:
            raise TemplateError(f"field #{i} has no key")
        labels = raw.get("ner_labels") or []
        if not isinstance(labels, list):
            raise TemplateError("ner_labels must be a list", key)
        specs.append(FieldSpec(
            key=key,
            prompt=str(raw.get("prompt", "")),
            value_type=raw.get("type") or "string",
            options=_parse_options(raw.get("options"), key),
            ner_labels=tuple(labels),
        ))
    return Template(tuple(specs))


def load_template(path) -> Template:
    return parse_template(Path(path).read_bytes())


def serialize_template(template: Template) -> str:
    return json.dumps(template.to_dict(), indent=2, ensure_ascii=False)


@dataclass(frozen=True)
class LabelDefinition:
    label: str
    definition: str


def default_label_definitions() -> List[LabelDefinition]:
    raw = resources.files("metaforge.data").joinpath("labels.json").read_text(encoding="utf-8")
    return load_label_definitions(json.loads(raw))


def load_label_definitions(data) -> List[LabelDefinition]:
    if isinstance(data, (str, Path)):
        data = json.loads(Path(data).read_text(encoding="utf-8"))
    defs = [LabelDefinition(d["label"], d["definition"]) for d in data]
    labels = [d.label for d in defs]
    if sorted(labels) != sorted(LABELS):
        raise ValueError("label definitions must cover exactly the 18 entity labels")
    return defs


def assign_field_labels(
    spec: FieldSpec,
    defs: Sequence[LabelDefinition],
    embed: Callable[[str], np.ndarray],
    threshold: float = DEFAULT_LABEL_THRESHOLD,
    top_k: int = DEFAULT_LABEL_TOP_K,
) -> List[str]:
    """Pick the labels whose definition is most similar to the field description.

    A label's similarity is the larger of its cosine against the bare prompt and
    against ``key: prompt``, so short prompts still benefit from the key name.
    Explicit labels on ``spec`` are returned unchanged; ties on similarity are
    broken by label name.
    """
    if spec.ner_labels:
        return list(spec.ner_labels)
    queries = [embed(spec.prompt or spec.key), embed(spec.text)]
    scored = []
    for d in defs:
        target = embed(d.definition)
        sim = max(cosine(q, target) for q in queries)
        if sim >= threshold:
            scored.append((-sim, d.label))
    scored.sort()
    return [label for _, label in scored[:top_k]]


def label_template(template: Template, embed: Callable[[str], np.ndarray],
                   defs: Optional[Sequence[LabelDefinition]] = None,
                   threshold: float = DEFAULT_LABEL_THRESHOLD,
                   top_k: int = DEFAULT_LABEL_TOP_K) -> Template:
    """Fill empty ``ner_labels`` on every field; explicit labels are kept."""
    defs = defs if defs is not None else default_label_definitions()
    fields = []
    for f in template.fields:
        if not f.ner_labels:
            f = replace(f, ner_labels=tuple(assign_field_labels(f, defs, embed, threshold, top_k)))
        fields.append(f)
    return Template(tuple(fields))
